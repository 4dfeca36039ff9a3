"""Fourier-mode recovery from boundary data and the stability experiment.

The mode identity (exact at the discrete level, for exact discrete
solutions u, ut of the two Schrödinger problems with paired CGO phases):

    What(k) = <(Lam_V - Lam_Vt) gamma0 u, gamma0 ut>
              - integral W exp(-i k.x) (v + conj(vt) + v conj(vt)),

with W = V - Vt on the closed cube and v, vt the relative remainders of
u, ut against their leading exponentials.  With the correction evaluated
from exact remainders the estimate reproduces the quadrature Fourier
mode to machine precision; with the correction off (remainders are not
observable from boundary data) the defect is exactly what the stability
modulus controls.

reconstruct() is the honest data-only inversion: probe traces are the
pure exponentials (no access to either potential), one pairing per
lattice frequency, then a finite Fourier synthesis on the period box.

psi_theta is the log-stability modulus |ln rho|^{-theta} + rho, extended
by 0 at rho = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cgo import CgoSolution, FrequencyProbe, make_probe, rho_for_h, H_WINDOW
from .dn import DnMatrix, assemble_dn, boundary_l2_inner, dn_gap_norm
from .errors import ConfigurationError, DataTooNoisyError
from .fields import ScalarField, fourier_mode, lp_norm
from .grid import Grid3
from .operators import DiscreteOperator, assemble, solve_dirichlet
from .potentials import PotentialSpec, sample_potential

CUTOFF_C_DEFAULT = 1.0 + math.sqrt(3.0)
RHO_MAX_DEFAULT = 1.0 / H_WINDOW[0]     # auxiliary-frequency ceiling from the h window


# ---------------------------------------------------------------------
# stability modulus
# ---------------------------------------------------------------------

def psi(theta: float, rho: float) -> float:
    """|ln rho|^{-theta} + rho on (0,1) u (1,inf); 0 at rho = 0."""
    if theta <= 0:
        raise ConfigurationError(f"modulus exponent must be positive, got {theta}")
    if rho < 0:
        raise ConfigurationError(f"modulus argument must be >= 0, got {rho}")
    if rho == 0.0:
        return 0.0
    if rho == 1.0:
        raise ConfigurationError("modulus undefined at rho = 1 (|ln rho| = 0)")
    return abs(math.log(rho)) ** (-theta) + rho


def beta_from_sigma(sigma: float) -> float:
    """Modulus exponent from the smoothness tag: min(1/2, sigma/3)."""
    if sigma <= 0:
        raise ConfigurationError("smoothness tag must be positive for the modulus")
    return min(0.5, sigma / 3.0)


# ---------------------------------------------------------------------
# mode estimation
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class ModeEstimate:
    k: np.ndarray
    estimate: complex          # data-side value (with or without correction)
    pairing: complex           # raw boundary pairing term
    correction: complex        # remainder integral actually subtracted
    true_mode: complex         # quadrature oracle W-hat(k)
    rho: float
    h: float
    corrected: bool
    remainder_bound: float     # ||v||_L2 + ||vt||_L2 + product (envelope term)


def _difference_field(op_a: DiscreteOperator, op_b: DiscreteOperator) -> ScalarField:
    grid = op_a.grid
    w = op_a.potential.values - op_b.potential.values
    return ScalarField(grid, w, has_boundary=True)


def _mode_phase(grid: Grid3, k: np.ndarray) -> np.ndarray:
    X, Y, Z = grid.full_coords()
    return np.exp(-1j * (k[0] * X + k[1] * Y + k[2] * Z))


def estimate_mode(dn_a: DnMatrix, dn_b: DnMatrix, probe: FrequencyProbe,
                  sol_a: CgoSolution, sol_b: CgoSolution,
                  correction: str = "stored") -> ModeEstimate:
    """Fourier-mode estimate of V - Vt at probe frequency k.

    sol_a must carry sign +1 for the dn_a potential and sol_b sign -1
    for the dn_b potential (paired phases).  correction: "off" for the
    data-only estimate, "stored" to subtract the remainder integral of
    the stored CGO remainders, "exact" to recompute the remainders from
    exact Dirichlet re-solves with the same traces (this reproduces the
    quadrature Fourier mode to solver precision).
    """
    if sol_a.probe is not probe or sol_b.probe is not probe:
        if not (np.allclose(sol_a.probe.k, probe.k) and np.allclose(sol_b.probe.k, probe.k)
                and sol_a.probe.rho == probe.rho and sol_b.probe.rho == probe.rho):
            raise ConfigurationError("probe mismatch between the two CGO solutions")
    if sol_a.sign != +1 or sol_b.sign != -1:
        raise ConfigurationError("estimate needs sol_a with sign +1 and sol_b with sign -1")
    if correction not in ("off", "stored", "exact"):
        raise ConfigurationError(f"unknown correction mode {correction!r}")

    op_a, op_b = dn_a.operator, dn_b.operator
    grid = dn_a.grid
    g_a = sol_a.u.boundary_trace()
    g_b = sol_b.u.boundary_trace()
    pairing = boundary_l2_inner(
        grid, dn_a.apply(g_a.values) - dn_b.apply(g_a.values), g_b.values)

    w_field = _difference_field(op_a, op_b)
    kvec = np.asarray(probe.k, dtype=float)
    corr = 0.0 + 0.0j
    rem_bound = 0.0
    if correction != "off":
        if correction == "exact":
            u_a = solve_dirichlet(op_a, dn_a.lam, g_a)
            u_b = solve_dirichlet(op_b, dn_b.lam, g_b)
            v_a = u_a.values / sol_a.phase - 1.0
            v_b = u_b.values / sol_b.phase - 1.0
        else:
            v_a = sol_a.remainder.values
            v_b = sol_b.remainder.values
        phase = _mode_phase(grid, kvec)
        wv = grid.volume_weights_full()
        mix = v_a + np.conj(v_b) + v_a * np.conj(v_b)
        corr = complex(np.sum(w_field.values * phase * mix * wv))
        na = float(np.sqrt(np.sum(np.abs(v_a) ** 2 * wv)))
        nb = float(np.sqrt(np.sum(np.abs(v_b) ** 2 * wv)))
        rem_bound = na + nb + na * nb
    else:
        rem_bound = (sol_a.remainder_l2 + sol_b.remainder_l2
                     + sol_a.remainder_l2 * sol_b.remainder_l2)

    true = fourier_mode(w_field, kvec)
    return ModeEstimate(k=kvec, estimate=pairing - corr, pairing=pairing,
                        correction=corr, true_mode=true, rho=probe.rho,
                        h=probe.h, corrected=correction != "off",
                        remainder_bound=rem_bound)


def pure_exponential_solution(grid: Grid3, probe: FrequencyProbe,
                              sign: int) -> CgoSolution:
    """Zero-remainder CGO surrogate: the data-only probe (no potential access)."""
    zeta_used = probe.zeta if sign > 0 else -probe.zetatilde
    eta = sign * probe.xi + 1j * zeta_used
    X, Y, Z = grid.full_coords()
    phase = np.exp(-(X * eta[0] + Y * eta[1] + Z * eta[2]) / probe.h)
    u = ScalarField(grid, phase.copy(), has_boundary=True)
    zero = ScalarField(grid, np.zeros(grid.full_shape, dtype=complex),
                       has_boundary=True)
    return CgoSolution(probe=probe, sign=sign, zeta_used=zeta_used, u=u,
                       remainder=zero, phase=phase, remainder_l2=0.0,
                       remainder_h1=0.0, conjugated_residual=0.0,
                       equation_defect=0.0, interior_residual=float("nan"))


# ---------------------------------------------------------------------
# low-pass reconstruction
# ---------------------------------------------------------------------

def frequency_lattice(cutoff_rho: float) -> list:
    """2 pi integer vectors with |k| <= cutoff_rho^{1/3}, conjugate-reduced.

    Returns (m, weight) pairs over a half lattice; weight 2 marks modes
    whose mirror is reconstructed by conjugate symmetry, weight 1 the
    self-symmetric origin.
    """
    kmax = cutoff_rho ** (1.0 / 3.0)
    mmax = int(math.floor(kmax / (2.0 * math.pi)))
    out = []
    for a in range(-mmax, mmax + 1):
        for b in range(-mmax, mmax + 1):
            for c in range(-mmax, mmax + 1):
                m = (a, b, c)
                if (2.0 * math.pi) * math.sqrt(a * a + b * b + c * c) > kmax + 1e-12:
                    continue
                if m < (0, 0, 0):
                    continue        # mirror handled by conjugate symmetry
                out.append(m)
    if not out:
        raise ConfigurationError(
            f"cutoff {cutoff_rho} admits no lattice frequencies")
    return out


@dataclass(frozen=True)
class Reconstruction:
    field: ScalarField            # recovered difference on the grid
    band_limited: ScalarField     # synthesis from the quadrature oracle modes
    estimates: dict               # m-tuple -> ModeEstimate
    cutoff_rho: float
    rel_error_vs_floor: float     # against the band-limited projection
    rel_error_vs_true: float      # against the full difference field


def reconstruct(dn_a: DnMatrix, dn_b: DnMatrix, cutoff_rho: float,
                lattice: Optional[Sequence] = None,
                h_target: float = 0.25,
                k_epsilon: float = 1e-3) -> Reconstruction:
    """Data-only low-pass recovery of V - Vt from the two DN maps.

    Probe traces are pure exponentials; the zero frequency is probed at
    |k| = k_epsilon (the probe geometry needs k != 0).  Each retained
    half-lattice mode costs two Dirichlet applies; mirrors come from
    conjugate symmetry of the estimates for real potentials.
    """
    if dn_a.grid.n != dn_b.grid.n:
        raise ConfigurationError("DN maps live on different grids")
    grid = dn_a.grid
    if lattice is None:
        lattice = frequency_lattice(cutoff_rho)
    else:
        lattice = list(lattice)
        if not lattice:
            raise ConfigurationError("empty reconstruction lattice")

    estimates = {}
    for m in lattice:
        kvec = 2.0 * math.pi * np.asarray(m, dtype=float)
        k_probe = kvec if np.linalg.norm(kvec) > 0 else np.array([k_epsilon, 0.0, 0.0])
        h_use = min(h_target, 0.9 * 2.0 / float(np.linalg.norm(k_probe)))
        h_use = max(h_use, H_WINDOW[0])
        probe = make_probe(k_probe, rho_for_h(k_probe, h_use))
        sol_a = pure_exponential_solution(grid, probe, +1)
        sol_b = pure_exponential_solution(grid, probe, -1)
        estimates[tuple(m)] = estimate_mode(dn_a, dn_b, probe, sol_a, sol_b,
                                            correction="off")

    w_field = _difference_field(dn_a.operator, dn_b.operator)
    xg, yg, zg = grid.full_coords()
    rec = np.zeros(grid.full_shape, dtype=complex)
    floor = np.zeros(grid.full_shape, dtype=complex)
    for m, est in estimates.items():
        ph = np.exp(2j * math.pi * (m[0] * xg + m[1] * yg + m[2] * zg))
        if m == (0, 0, 0):
            rec += est.estimate * ph
            floor += est.true_mode * ph
        else:
            rec += 2.0 * np.real(est.estimate * ph)
            floor += 2.0 * np.real(est.true_mode * ph)
    rec = np.real(rec)
    floor = np.real(floor)

    wv = grid.volume_weights_full()

    def l2(arr):
        return float(np.sqrt(np.sum(np.abs(arr) ** 2 * wv)))

    w_true = np.real(w_field.values)
    err_floor = l2(rec - floor) / max(l2(floor), 1e-300)
    err_true = l2(rec - w_true) / max(l2(w_true), 1e-300)
    return Reconstruction(
        field=ScalarField(grid, rec, has_boundary=True),
        band_limited=ScalarField(grid, floor, has_boundary=True),
        estimates=estimates, cutoff_rho=cutoff_rho,
        rel_error_vs_floor=err_floor, rel_error_vs_true=err_true)


# ---------------------------------------------------------------------
# cutoff rule
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffChoice:
    rho_star: float
    algebraic_term: float      # rho*^{-beta}
    exponential_term: float    # aleph exp(c rho*)
    capped: bool


def choose_cutoff(aleph: float, c: float = CUTOFF_C_DEFAULT,
                  beta: float = 0.5, rho_max: float = RHO_MAX_DEFAULT) -> CutoffChoice:
    """rho* = min(rho_max, |ln aleph| / (2c)), the bound-shape minimizer."""
    if not (0.0 < aleph):
        raise ConfigurationError("cutoff rule needs a positive gap value")
    if aleph >= math.exp(-1.0):
        raise DataTooNoisyError(
            f"gap {aleph:.4g} >= e^-1: cutoff collapses to its minimum")
    raw = abs(math.log(aleph)) / (2.0 * c)
    rho_star = min(rho_max, raw)
    return CutoffChoice(rho_star=rho_star,
                        algebraic_term=rho_star ** (-beta),
                        exponential_term=aleph * math.exp(c * rho_star),
                        capped=raw > rho_max)


# ---------------------------------------------------------------------
# stability experiment
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityReport:
    fingerprint_a: str
    fingerprint_b: str
    aleph: float
    l2_difference: float
    beta: float
    psi_value: float
    rho_star: float


def stability_experiment(pairs: Sequence, sigma: float, grid: Grid3,
                         lam: float = 0.0):
    """Per-pair gap/L2/modulus table plus the largest C with
    C ||V - Vt||_L2 <= Psi_beta(aleph) across the family."""
    beta = beta_from_sigma(sigma)
    reports = []
    op_cache = {}

    def dn_for(spec: PotentialSpec) -> DnMatrix:
        key = spec.fingerprint()
        if key not in op_cache:
            field = sample_potential(spec, grid)
            op = assemble(field, grid, fingerprint=key)
            op_cache[key] = assemble_dn(op, lam)
        return op_cache[key]

    for spec_a, spec_b in pairs:
        dn_a = dn_for(spec_a)
        dn_b = dn_for(spec_b)
        aleph = dn_gap_norm(dn_a, dn_b)
        diff = _difference_field(dn_a.operator, dn_b.operator)
        l2d = lp_norm(diff, 2.0)
        if aleph == 0.0:
            psi_val = 0.0
            rho_star = float("nan")
        else:
            psi_val = psi(beta, aleph)
            try:
                rho_star = choose_cutoff(aleph, beta=beta).rho_star
            except DataTooNoisyError:
                rho_star = float("nan")
        reports.append(StabilityReport(
            fingerprint_a=spec_a.fingerprint(), fingerprint_b=spec_b.fingerprint(),
            aleph=aleph, l2_difference=l2d, beta=beta, psi_value=psi_val,
            rho_star=rho_star))
    reports.sort(key=lambda r: (r.fingerprint_a, r.fingerprint_b))
    ratios = [r.psi_value / r.l2_difference for r in reports if r.l2_difference > 0]
    c_fit = min(ratios) if ratios else float("inf")
    return reports, c_fit
