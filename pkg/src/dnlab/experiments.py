"""The seven desk experiments, their embedded checks, and run manifests.

Every experiment consumes a validated ExperimentConfig, writes CSV (and
binary) outputs under the config's output directory, and records
pass/fail checks in a manifest.  All randomness flows from the single
config seed; outputs carry no timestamps, so a rerun with the same
config is byte-identical (the manifest's wall-clock block is the only
thing allowed to differ).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from . import io as lab_io
from .cgo import cgo_solve, make_probe, rho_for_h
from .config import ExperimentConfig
from .dn import assemble_dn, dn_gap_norm, smoothing_index, BoundaryGrams
from .errors import LabError
from .fields import BoundaryField
from .grid import build_grid
from .inverse import (beta_from_sigma, estimate_mode, psi, reconstruct,
                      pure_exponential_solution, stability_experiment)
from .operators import assemble, eigendecompose, solve_dirichlet, weyl_fit
from .potentials import PotentialSpec, sample_potential, zero as zero_spec
from .spectral_bl import (boundary_spectral_data, dn_derivative_series,
                          large_mu_gap, s_limit_check, series_tail_norms)

ARTIFACT_VERSION = "dnlab-0.1.0"

WEYL_SLOPE = 2.0 / 3.0
WEYL_TOL = 0.15
CGO_SLOPE_WINDOW = (0.7, 1.3)
RECON_ERROR_TOL = 0.25
MODE_EXACT_TOL = 1e-8
SERIES_TOL = 1e-8
PSI_GROWTH_MAX = 1.1
TAIL_SLOPE_TOL = 0.3
MU_EXPONENT_MIN = 0.15
SMOOTHING_GAP_MIN = 0.5
S_LIMIT_GAP_TOL = 0.2


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


@dataclass
class RunManifest:
    experiment: str
    config_hash: str
    seed: int
    artifact_version: str = ARTIFACT_VERSION
    stages: List[dict] = field(default_factory=list)
    outputs: List[dict] = field(default_factory=list)
    checks: List[dict] = field(default_factory=list)
    status: str = "ok"
    error: Optional[dict] = None

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")
        return path


class _Runner:
    """Shared bookkeeping: stage timing, output registry, checks."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.grid = build_grid(cfg.n)
        self.rng = np.random.default_rng(cfg.seed)
        self.manifest = RunManifest(experiment=cfg.experiment,
                                    config_hash=cfg.config_hash(),
                                    seed=cfg.seed)
        self.out_dir = Path(cfg.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._stage_start = None
        self._stage_name = None

    def stage(self, name: str):
        self.finish_stage()
        self._stage_name = name
        self._stage_start = time.perf_counter()

    def finish_stage(self):
        if self._stage_name is not None:
            self.manifest.stages.append({
                "name": self._stage_name,
                "wall_s": time.perf_counter() - self._stage_start,
            })
            self._stage_name = None

    def add_output(self, path):
        self.manifest.outputs.append({
            "path": str(Path(path).relative_to(self.out_dir)),
            "sha256": lab_io.sha256_file(path),
        })

    def check(self, name: str, passed: bool, detail: str):
        self.manifest.checks.append(CheckResult(name, passed, detail).as_dict())

    def operator(self, spec: PotentialSpec):
        fieldv = sample_potential(spec, self.grid)
        return assemble(fieldv, self.grid, fingerprint=spec.fingerprint())


# ---------------------------------------------------------------------
# individual experiments
# ---------------------------------------------------------------------

def _run_forward(r: _Runner):
    cfg = r.cfg
    opts = cfg.options.get("forward", {})
    dim = r.grid.n_interior
    modes = int(opts.get("modes", dim if dim <= 512 else min(220, dim)))
    r.stage("eigendecomposition")
    op = r.operator(cfg.potential)
    sd = eigendecompose(op, modes)

    r.stage("invariants")
    gram = sd.eigenvectors.T @ sd.eigenvectors * r.grid.dx ** 3
    orth = float(np.max(np.abs(gram - np.eye(sd.count))))
    res = 0.0
    a_mat = op.matrix
    for k in range(sd.count):
        v = sd.eigenvectors[:, k]
        rk = np.linalg.norm(a_mat @ v - sd.eigenvalues[k] * v) / np.linalg.norm(v)
        res = max(res, rk / (abs(sd.eigenvalues[k]) + 1.0))
    r.check("orthonormality", orth <= 1e-8, f"max deviation {orth:.3e}")
    r.check("eigen-residual", res <= 1e-8, f"max scaled residual {res:.3e}")

    window = opts.get("weyl_window")
    if window is not None:
        lo, hi = int(window[0]), int(window[1])
        slope = weyl_fit(sd, lo, hi)
        ok = abs(slope - WEYL_SLOPE) <= WEYL_TOL
        r.check("weyl-slope", ok, f"slope {slope:.4f} target {WEYL_SLOPE:.4f} +- {WEYL_TOL}")

    r.stage("outputs")
    path = lab_io.write_spectral_csv(r.out_dir / "spectral.csv", sd)
    r.add_output(path)


def _run_dn(r: _Runner):
    cfg = r.cfg
    opts = cfg.options.get("dn", {})
    lam = float(opts.get("lambda", 0.0))
    spec_b = cfg.potential_b if cfg.potential_b is not None else zero_spec()
    r.stage("assembly")
    op_a = r.operator(cfg.potential)
    op_b = r.operator(spec_b)
    dn_a = assemble_dn(op_a, lam)
    dn_b = assemble_dn(op_b, lam)

    r.stage("checks")
    m = r.grid.boundary_weight
    s = m[:, None] * dn_a.matrix
    sym = float(np.max(np.abs(s - s.T)) / max(np.max(np.abs(s)), 1e-300))
    r.check("pairing-symmetry", sym <= 1e-9, f"relative asymmetry {sym:.3e}")
    gap = dn_gap_norm(dn_a, dn_b)
    r.check("gap-nonnegative", gap >= 0.0, f"gap {gap:.6e}")
    rows = [["gap_hhalf_to_dual", gap]]
    if bool(opts.get("smoothing", True)) and cfg.potential.fingerprint() != spec_b.fingerprint():
        rep = smoothing_index(dn_a, dn_b, max_mode=opts.get("smoothing_max_mode"))
        ok = rep.exponent_gap > SMOOTHING_GAP_MIN
        r.check("smoothing-gap", ok,
                f"exponent gap {rep.exponent_gap:.3f} (diff {rep.slope_diff:.3f}, "
                f"single {rep.slope_single:.3f})")
        rows.append(["smoothing_exponent_gap", rep.exponent_gap])

    r.stage("outputs")
    checksum = lab_io.gram_checksum(r.grid)
    for name, dn in (("dn_a", dn_a), ("dn_b", dn_b)):
        for p in lab_io.write_dn_matrix(r.out_dir / name, dn, gram_checksum=checksum):
            r.add_output(p)
    path = lab_io.write_csv(r.out_dir / "gap.csv", ["quantity", "value"], rows)
    r.add_output(path)


def _run_cgo_decay(r: _Runner):
    cfg = r.cfg
    opts = cfg.options.get("cgo", {})
    kvec = np.asarray(opts.get("k", [2.0, 0.0, 0.0]), dtype=float)
    h_list = [float(h) for h in opts.get("h_list", [0.4, 0.28, 0.2, 0.14, 0.1])]
    r.stage("solves")
    op = r.operator(cfg.potential)
    rows = []
    hs, vs = [], []
    for h_t in h_list:
        probe = make_probe(kvec, rho_for_h(kvec, h_t))
        sol = cgo_solve(op, probe)
        rows.append([kvec[0], kvec[1], kvec[2], probe.rho, probe.h,
                     sol.remainder_l2, sol.remainder_h1,
                     sol.conjugated_residual, sol.equation_defect,
                     sol.interior_residual])
        hs.append(probe.h)
        vs.append(sol.remainder_l2)

    r.stage("checks")
    if len(hs) >= 3 and min(vs) > 0:
        slope = float(np.polyfit(np.log(hs), np.log(vs), 1)[0])
        ok = CGO_SLOPE_WINDOW[0] <= slope <= CGO_SLOPE_WINDOW[1]
        r.check("remainder-slope", ok,
                f"slope {slope:.4f} window {CGO_SLOPE_WINDOW}")

    r.stage("outputs")
    path = lab_io.write_csv(
        r.out_dir / "cgo_decay.csv",
        ["k1", "k2", "k3", "rho", "h", "v_l2", "v_h1",
         "conjugated_residual", "equation_defect", "interior_residual"],
        rows)
    r.add_output(path)


def _run_reconstruct(r: _Runner):
    cfg = r.cfg
    opts = cfg.options.get("reconstruct", {})
    cutoff_k = float(opts.get("cutoff_k", 4.0 * math.pi))
    h_target = float(opts.get("h_target", 0.22))
    spec_b = cfg.potential_b if cfg.potential_b is not None else zero_spec()
    r.stage("dn-maps")
    op_a = r.operator(cfg.potential)
    op_b = r.operator(spec_b)
    dn_a = assemble_dn(op_a, 0.0, materialize=False)
    dn_b = assemble_dn(op_b, 0.0, materialize=False)

    r.stage("mode-exactness")
    n_exact = int(opts.get("exactness_modes", 2))
    exact_worst = 0.0
    if n_exact > 0:
        for mvec in ([1, 0, 0], [0, 1, 1])[:n_exact]:
            kv = 2.0 * math.pi * np.asarray(mvec, dtype=float)
            probe = make_probe(kv, rho_for_h(kv, min(0.28, 0.9 * 2.0 / np.linalg.norm(kv))))
            sol_a = cgo_solve(op_a, probe, +1)
            sol_b = cgo_solve(op_b, probe, -1)
            est = estimate_mode(dn_a, dn_b, probe, sol_a, sol_b, correction="exact")
            exact_worst = max(exact_worst, abs(est.estimate - est.true_mode))
        r.check("mode-exactness", exact_worst <= MODE_EXACT_TOL,
                f"worst |estimate - quadrature mode| = {exact_worst:.3e}")

    r.stage("reconstruction")
    recon = reconstruct(dn_a, dn_b, cutoff_rho=cutoff_k ** 3, h_target=h_target)
    ok = recon.rel_error_vs_floor <= RECON_ERROR_TOL
    r.check("reconstruction-error", ok,
            f"relative L2 error vs band-limited floor {recon.rel_error_vs_floor:.4f} "
            f"(vs full field {recon.rel_error_vs_true:.4f})")

    r.stage("outputs")
    rows = []
    for m, est in sorted(recon.estimates.items()):
        rows.append([m[0], m[1], m[2],
                     est.estimate.real, est.estimate.imag,
                     est.true_mode.real, est.true_mode.imag,
                     est.rho, est.h])
    path = lab_io.write_csv(
        r.out_dir / "modes.csv",
        ["m1", "m2", "m3", "re_est", "im_est", "re_true", "im_true", "rho", "h"],
        rows)
    r.add_output(path)
    for p in lab_io.write_field(r.out_dir / "reconstruction", recon.field,
                                description="low-pass recovery of V - V_b"):
        r.add_output(p)


def _run_stability(r: _Runner):
    cfg = r.cfg
    opts = cfg.options.get("stability", {})
    base = cfg.potential
    scales = [float(s) for s in opts.get(
        "scales", list(np.geomspace(0.05, 0.8, 8)))]
    sigma = float(opts.get("sigma", base.sigma if base else 2.0))
    pairs = [(zero_spec(), base.scaled(c)) for c in scales]
    r.stage("family")
    reports, c_fit = stability_experiment(pairs, sigma, r.grid)

    r.stage("checks")
    alephs = [rep.aleph for rep in reports]
    l2s = [rep.l2_difference for rep in reports]
    psis = [rep.psi_value for rep in reports]
    order = np.argsort(l2s)
    alephs_sorted = list(np.asarray(alephs)[order])
    psis_sorted = list(np.asarray(psis)[order])
    increasing = all(b > a for a, b in zip(alephs_sorted, alephs_sorted[1:]))
    r.check("gap-strictly-increasing", increasing,
            "aleph along increasing |difference|: "
            + " ".join(f"{a:.3e}" for a in alephs_sorted))
    fitted_ok = all(c_fit * rep.l2_difference <= rep.psi_value * (1 + 1e-12)
                    for rep in reports)
    r.check("fitted-c-inequality", fitted_ok, f"C_fit = {c_fit:.6e}")
    nondec = all(b >= a * (1 - 1e-12) for a, b in zip(psis_sorted, psis_sorted[1:]))
    r.check("modulus-nondecreasing", nondec,
            "Psi_beta along the family: " + " ".join(f"{p:.3e}" for p in psis_sorted))

    r.stage("outputs")
    rows = []
    for rep in reports:
        rows.append([rep.fingerprint_a, rep.fingerprint_b, rep.aleph,
                     rep.l2_difference, rep.beta, rep.psi_value,
                     rep.rho_star, c_fit])
    path = lab_io.write_csv(
        r.out_dir / "stability.csv",
        ["pair_a", "pair_b", "aleph", "l2_diff", "beta", "psi_beta", "rho_star", "c_fit"],
        rows)
    r.add_output(path)


def _run_borg_levinson(r: _Runner):
    cfg = r.cfg
    opts = cfg.options.get("borg_levinson", {})
    lam = float(opts.get("lambda", -5.0))
    orders = [int(m) for m in opts.get("orders", [0, 1, 2, 3])]
    n_rhs = int(opts.get("n_rhs", 20))
    r.stage("eigendecomposition")
    op = r.operator(cfg.potential)
    sd = eigendecompose(op, r.grid.n_interior)
    bsd = boundary_spectral_data(sd, op)

    growth_ok = bsd.growth_exponent <= PSI_GROWTH_MAX
    r.check("psi-growth-exponent", growth_ok,
            f"fitted exponent {bsd.growth_exponent:.3f} <= {PSI_GROWTH_MAX}")

    r.stage("series-exactness")
    series_rows = []
    run_exact = bool(opts.get("series_exactness", True))
    if run_exact:
        dn = assemble_dn(op, lam)
        fs = [BoundaryField(r.grid, r.rng.standard_normal(r.grid.n_boundary))
              for _ in range(n_rhs)]

        def dn_derivative_fd(m, f):
            h = 1e-2

            def at(l):
                return assemble_dn(op, l).apply(f.values)
            if m == 1:
                return (8 * (at(lam + h) - at(lam - h))
                        - (at(lam + 2 * h) - at(lam - 2 * h))) / (12 * h)
            if m == 2:
                return (-(at(lam + 2 * h) + at(lam - 2 * h))
                        + 16 * (at(lam + h) + at(lam - h)) - 30 * at(lam)) / (12 * h * h)
            return ((at(lam + 2 * h) - at(lam - 2 * h))
                    - 2 * (at(lam + h) - at(lam - h))) / (2 * h ** 3)

        if 0 in orders:
            worst0 = 0.0
            for f in fs:
                ser = dn_derivative_series(bsd, lam, 0, f, op=op).values
                ref = dn.apply(f.values)
                rel = np.linalg.norm(ser - ref) / max(np.linalg.norm(ref), 1e-300)
                worst0 = max(worst0, float(rel))
            series_rows.append([0, lam, worst0])
            r.check("series-exactness", worst0 <= SERIES_TOL,
                    f"worst m=0 relative residual {worst0:.3e} over {n_rhs} data vectors")
        for m in [mm for mm in orders if mm >= 1]:
            f = fs[0]
            ser = dn_derivative_series(bsd, lam, m, f, op=op).values
            ref = dn_derivative_fd(m, f)
            rel = float(np.linalg.norm(ser - ref) / max(np.linalg.norm(ref), 1e-300))
            series_rows.append([m, lam, rel])
            tol = {1: 1e-8, 2: 1e-5, 3: 1e-3}.get(m, 1e-3)
            r.check(f"series-fd-m{m}", rel <= tol,
                    f"relative deviation {rel:.3e} (fd-oracle tolerance {tol})")

    tail_ks = opts.get("tail_ks")
    if tail_ks:
        r.stage("tail-rate")
        m_tail = int(opts.get("tail_order", 3))
        n_draws = int(opts.get("tail_draws", 6))
        ks = [int(k) for k in tail_ks]
        acc = np.zeros(len(ks))
        for _ in range(n_draws):
            f = BoundaryField(r.grid, r.rng.standard_normal(r.grid.n_boundary))
            tails = series_tail_norms(bsd, lam, m_tail, f, ks)
            acc += np.square(tails)
        tails = np.sqrt(acc / n_draws)
        slope = float(np.polyfit(np.log(ks), np.log(tails), 1)[0])
        target = -2.0 * (m_tail - 1) / 3.0
        ok = abs(slope - target) <= TAIL_SLOPE_TOL
        r.check("tail-slope", ok,
                f"fitted {slope:.3f}, target {target:.3f} +- {TAIL_SLOPE_TOL}")
        path = lab_io.write_csv(r.out_dir / "tail.csv", ["k_trunc", "tail_l2"],
                                [[k, t] for k, t in zip(ks, tails)])
        r.add_output(path)

    mu_list = opts.get("mu_list")
    if mu_list:
        r.stage("large-mu")
        spec_b = cfg.potential_b if cfg.potential_b is not None else zero_spec()
        op_b = r.operator(spec_b)
        gaps = large_mu_gap(op, op_b, [float(m) for m in mu_list])
        vals = [g for _, g in gaps]
        decreasing = all(b < a for a, b in zip(vals, vals[1:]))
        r.check("mu-gap-decreasing", decreasing,
                " ".join(f"{v:.3e}" for v in vals))
        slope = -float(np.polyfit(np.log([m for m, _ in gaps]),
                                  np.log(np.maximum(vals, 1e-300)), 1)[0])
        r.check("mu-gap-exponent", slope >= MU_EXPONENT_MIN,
                f"fitted decay exponent {slope:.3f} >= {MU_EXPONENT_MIN}")
        path = lab_io.write_csv(r.out_dir / "mu_gap.csv", ["mu", "gap"],
                                [[m, g] for m, g in gaps])
        r.add_output(path)

    r.stage("outputs")
    path = lab_io.write_spectral_csv(
        r.out_dir / "spectral.csv", sd, psi_norms=bsd.psi_norms)
    r.add_output(path)
    if series_rows:
        path = lab_io.write_csv(r.out_dir / "series_check.csv",
                                ["m", "lambda", "residual"], series_rows)
        r.add_output(path)


def _run_s_limit(r: _Runner):
    cfg = r.cfg
    opts = cfg.options.get("s_limit", {})
    xi = np.asarray(opts.get("xi", [2.0 * math.pi, 0.0, 0.0]), dtype=float)
    k_list = [float(k) for k in opts.get("k_list", [4, 5, 6])]
    gap_tol = float(opts.get("final_gap_tol", S_LIMIT_GAP_TOL))
    spec_b = cfg.potential_b if cfg.potential_b is not None else zero_spec()
    r.stage("sweep")
    op_a = r.operator(cfg.potential)
    op_b = r.operator(spec_b)
    records = s_limit_check(op_a, op_b, xi, k_list)

    r.stage("checks")
    gaps = [rec.gap for rec in records]
    target = records[0].target
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    r.check("gap-decreasing", decreasing, " ".join(f"{g:.4e}" for g in gaps))
    final_ok = gaps[-1] <= gap_tol * abs(target)
    r.check("final-gap", final_ok,
            f"final gap {gaps[-1]:.4e} vs {gap_tol} x |target| = {gap_tol * abs(target):.4e}")

    r.stage("outputs")
    rows = [[rec.k, rec.s_difference.real, rec.s_difference.imag,
             rec.target.real, rec.target.imag, rec.gap] for rec in records]
    path = lab_io.write_csv(
        r.out_dir / "s_limit.csv",
        ["k", "re_sdiff", "im_sdiff", "re_target", "im_target", "gap"], rows)
    r.add_output(path)


_EXPERIMENTS: dict = {
    "forward": (_run_forward, "n, [potential], [forward].modes/weyl_window",
                "seconds at n<=16, ~2 min at n=32 with 220 modes"),
    "dn": (_run_dn, "n<=16, [potential], [potential_b], [dn].lambda",
           "tens of seconds at n=16"),
    "cgo-decay": (_run_cgo_decay, "n (mult of 4), [potential], [cgo].k/h_list",
                  "~1 min at n=32 for 5 h-values"),
    "reconstruct": (_run_reconstruct,
                    "n (mult of 4), [potential], [reconstruct].cutoff_k/h_target",
                    "minutes at n=32 with cutoff 4*pi"),
    "stability": (_run_stability, "n<=16, [potential], [stability].scales/sigma",
                  "~1 min at n=8 for 8 pairs"),
    "borg-levinson": (_run_borg_levinson,
                      "n<=16, [potential], [borg_levinson].orders/mu_list/tail_ks",
                      "seconds at n=8; ~2 min at n=16 with mu sweep"),
    "s-limit": (_run_s_limit, "n (mult of 4), [potential], [s_limit].xi/k_list",
                "~1 min at n=32 for 3 k-values"),
}


def list_experiments():
    """Rows of (name, required config keys, runtime estimate)."""
    return [(name, keys, runtime)
            for name, (_, keys, runtime) in sorted(_EXPERIMENTS.items())]


def run(cfg: ExperimentConfig) -> RunManifest:
    runner = _Runner(cfg)
    fn = _EXPERIMENTS[cfg.experiment][0]
    try:
        fn(runner)
        runner.finish_stage()
    except Exception as exc:
        failed_stage = runner._stage_name or "setup"
        runner.finish_stage()
        runner.manifest.status = "error"
        runner.manifest.error = {
            "stage": failed_stage,
            "type": type(exc).__name__,
            "message": str(exc),
        }
        runner.manifest.write(runner.out_dir / "manifest.json")
        if not isinstance(exc, LabError):
            raise
        return runner.manifest
    if any(not c["passed"] for c in runner.manifest.checks):
        runner.manifest.status = "acceptance-fail"
    runner.manifest.write(runner.out_dir / "manifest.json")
    return runner.manifest
