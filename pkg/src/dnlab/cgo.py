"""Complex-geometric-optics probes, remainders, and phase validators.

A probe packages the frequency geometry behind the two-exponential
pairing trick: an orthogonal triple (k, ktilde, xi) with |ktilde| = rho,
the semiclassical parameter h = (|k|^2/4 + rho^2)^{-1/2}, and the unit
complex directions

    zeta      = h (k/2 + ktilde),      zetatilde = h (k/2 - ktilde),

so that zeta + zetatilde = h k and the product of the paired leading
exponentials collapses to exp(-i k.x).

The remainder v of u = exp(-x.(s xi + i zeta)/h)(1 + v) is obtained from
the conjugated equation on the enlarged box (-1/4, 5/4)^3 with zero
Dirichlet data.  The plain box inverse is polluted by the conjugated
symbol's characteristic sphere (it passes through the origin, so smooth
potentials carry order-one near-characteristic content, and the
zero-Dirichlet walls reflect it); the solve is therefore performed in
damped least-squares form, which selects the small-norm solution the
abstract existence argument provides and reports the equation defect it
leaves behind.  A zero potential yields an identically zero remainder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dstn

from .errors import (ConfigurationError, DomainViolationError, HWindowError,
                     SolverError)
from .fields import BoundaryField, ScalarField
from .grid import Grid3
from .operators import DiscreteOperator
from . import fields as _fields

H_WINDOW = (0.08, 0.6)
ENVELOPE_C = 1.0 + math.sqrt(3.0)     # 1 + sup_Omega |x|
DAMPING_SCALE = 0.8                   # tau = DAMPING_SCALE / h
BOX_MARGIN = 0.25


# ---------------------------------------------------------------------
# probe geometry
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyProbe:
    k: np.ndarray          # target frequency, nonzero real 3-vector
    ktilde: np.ndarray     # auxiliary frequency, |ktilde| = rho, k . ktilde = 0
    xi: np.ndarray         # unit vector orthogonal to both
    rho: float
    h: float
    zeta: np.ndarray       # h (k/2 + ktilde), unit
    zetatilde: np.ndarray  # h (k/2 - ktilde), unit

    def mirrored(self) -> "FrequencyProbe":
        """Probe for -k with the auxiliary direction flipped alongside."""
        return FrequencyProbe(-self.k, -self.ktilde, self.xi, self.rho,
                              self.h, -self.zeta, -self.zetatilde)


def make_probe(k, rho: float) -> FrequencyProbe:
    """Deterministic orthogonal completion of k at auxiliary magnitude rho.

    xi comes from Gram-Schmidt applied to the canonical basis vector
    least aligned with k (smallest index on ties); ktilde completes the
    right-handed triple.
    """
    k = np.asarray(k, dtype=float).copy()
    if k.shape != (3,):
        raise ConfigurationError("probe frequency must be a 3-vector")
    kn = float(np.linalg.norm(k))
    if kn == 0.0:
        raise ConfigurationError("probe frequency k must be nonzero")
    if rho <= 0.0:
        raise ConfigurationError("auxiliary magnitude rho must be positive")
    khat = k / kn
    i = int(np.argmin(np.abs(khat)))
    e = np.zeros(3)
    e[i] = 1.0
    xi = e - (e @ khat) * khat
    xi /= np.linalg.norm(xi)
    ktilde = rho * np.cross(khat, xi)
    h = 1.0 / math.hypot(kn / 2.0, rho)
    zeta = h * (k / 2.0 + ktilde)
    zetatilde = h * (k / 2.0 - ktilde)
    for arr in (k, ktilde, xi, zeta, zetatilde):
        arr.setflags(write=False)
    return FrequencyProbe(k, ktilde, xi, float(rho), float(h), zeta, zetatilde)


def rho_for_h(k, h_target: float) -> float:
    """Auxiliary magnitude hitting a requested h, if geometrically possible."""
    k = np.asarray(k, dtype=float)
    kn = float(np.linalg.norm(k))
    val = 1.0 / h_target ** 2 - kn ** 2 / 4.0
    if val <= 0.0:
        raise ConfigurationError(
            f"h = {h_target} unreachable for |k| = {kn:.4g} (need h < 2/|k|)")
    return math.sqrt(val)


# ---------------------------------------------------------------------
# eikonal validators
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseSpec:
    """Symbolic phase: linear(x.v), log|x-x0|, coordinate(x1), or the
    cylindrical radius about an axis parallel to x1 through x0_perp."""

    kind: str               # linear | log | coordinate | radial
    vector: Optional[tuple] = None      # for linear
    center: Optional[tuple] = None      # x0 (log) or (x2,x3) axis foot (radial)
    axis: int = 0                       # for coordinate

    def gradient(self, X, Y, Z):
        if self.kind == "linear":
            v = np.asarray(self.vector, dtype=float)
            shape = X.shape
            return (np.full(shape, v[0]), np.full(shape, v[1]), np.full(shape, v[2]))
        if self.kind == "coordinate":
            shape = X.shape
            g = [np.zeros(shape), np.zeros(shape), np.zeros(shape)]
            g[self.axis] = np.ones(shape)
            return tuple(g)
        if self.kind == "log":
            c = np.asarray(self.center, dtype=float)
            dx_, dy_, dz_ = X - c[0], Y - c[1], Z - c[2]
            r2 = dx_ ** 2 + dy_ ** 2 + dz_ ** 2
            return (dx_ / r2, dy_ / r2, dz_ / r2)
        if self.kind == "radial":
            c = np.asarray(self.center, dtype=float)
            dy_, dz_ = Y - c[0], Z - c[1]
            r = np.sqrt(dy_ ** 2 + dz_ ** 2)
            return (np.zeros_like(r), dy_ / r, dz_ / r)
        raise ConfigurationError(f"unknown phase kind {self.kind!r}")

    def sample(self, X, Y, Z):
        if self.kind == "linear":
            v = np.asarray(self.vector, dtype=float)
            return v[0] * X + v[1] * Y + v[2] * Z
        if self.kind == "coordinate":
            return (X, Y, Z)[self.axis].copy()
        if self.kind == "log":
            c = np.asarray(self.center, dtype=float)
            return 0.5 * np.log((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2)
        if self.kind == "radial":
            c = np.asarray(self.center, dtype=float)
            return np.sqrt((Y - c[0]) ** 2 + (Z - c[1]) ** 2)
        raise ConfigurationError(f"unknown phase kind {self.kind!r}")

    def check_domain(self):
        if self.kind == "log":
            c = np.asarray(self.center, dtype=float)
            if np.all((c >= 0.0) & (c <= 1.0)):
                raise DomainViolationError(
                    f"log phase center {tuple(c)} lies inside the closed cube")
        if self.kind == "radial":
            c = np.asarray(self.center, dtype=float)
            if np.all((c >= 0.0) & (c <= 1.0)):
                raise DomainViolationError(
                    f"cylinder axis foot {tuple(c)} lies inside the cube cross-section")


@dataclass(frozen=True)
class EikonalReport:
    max_norm_residual: float      # max | |grad phi|^2 - |grad psi|^2 |
    max_orth_residual: float      # max | grad phi . grad psi |
    n: int


def eikonal_check(phi: PhaseSpec, psi: PhaseSpec, grid: Grid3) -> EikonalReport:
    """Grid residuals of the limiting-weight conditions for the pair (phi, psi).

    Gradients are central finite differences at interior nodes, so smooth
    valid pairs show pure O(dx^2) residuals.
    """
    phi.check_domain()
    psi.check_domain()
    X, Y, Z = grid.full_coords()
    fphi = phi.sample(X, Y, Z)
    fpsi = psi.sample(X, Y, Z)
    inv2 = 0.5 / grid.dx

    def grad_fd(f):
        gx = (f[2:, 1:-1, 1:-1] - f[:-2, 1:-1, 1:-1]) * inv2
        gy = (f[1:-1, 2:, 1:-1] - f[1:-1, :-2, 1:-1]) * inv2
        gz = (f[1:-1, 1:-1, 2:] - f[1:-1, 1:-1, :-2]) * inv2
        return gx, gy, gz

    px, py, pz = grad_fd(fphi)
    qx, qy, qz = grad_fd(fpsi)
    norm_res = np.abs((px ** 2 + py ** 2 + pz ** 2) - (qx ** 2 + qy ** 2 + qz ** 2))
    orth_res = np.abs(px * qx + py * qy + pz * qz)
    return EikonalReport(float(norm_res.max()), float(orth_res.max()), grid.n)


# ---------------------------------------------------------------------
# CGO solve on the enlarged box
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class CgoSolution:
    probe: FrequencyProbe
    sign: int                    # s in {+1, -1}: leading phase exp(-x.(s xi + i zeta)/h)
    zeta_used: np.ndarray        # zeta for s=+1, zetatilde for s=-1
    u: ScalarField               # total field on the closed cube
    remainder: ScalarField       # v with u = phase * (1 + v)
    phase: np.ndarray            # leading exponential on the full node array
    remainder_l2: float
    remainder_h1: float
    conjugated_residual: float   # residual of the damped least-squares solve
    equation_defect: float       # || M v + V ||_2 / || V ||_2 (content removed)
    interior_residual: float     # relative residual of (-Lap_h + V) u


def _enlarged_nodes(n: int) -> int:
    if n % 4 != 0:
        raise ConfigurationError(
            f"CGO needs the margin {BOX_MARGIN} to be a whole number of "
            f"spacings: grid subdivisions divisible by 4 (got {n})")
    return 3 * n // 2 - 1


def cgo_solve(op: DiscreteOperator, probe: FrequencyProbe, sign: int = +1,
              rtol: float = 3e-9, max_iter: int = 4000) -> CgoSolution:
    """Remainder solve for u = exp(-x.(s xi + i zeta)/h)(1 + v).

    Conjugating the stencil by the exact hop factors exp(-dx eta_a / h)
    with eta = s xi + i zeta (for s = -1 the pairing convention flips
    zeta to -zetatilde, so the paired product of leading phases is
    exp(-i k.x) after conjugation) gives a well-scaled constant-coefficient
    operator; the free-phase defect constant is removed so that V = 0
    maps to v = 0 identically.
    """
    if sign not in (+1, -1):
        raise ConfigurationError("CGO sign must be +1 or -1")
    h = probe.h
    if not (H_WINDOW[0] <= h <= H_WINDOW[1]):
        raise HWindowError(
            f"h = {h:.4g} outside the conditioning window {H_WINDOW}")
    grid = op.grid
    n = grid.n
    nbox = _enlarged_nodes(n)
    dx = grid.dx
    margin = n // 4

    zeta_used = probe.zeta if sign > 0 else -probe.zetatilde
    eta = sign * probe.xi + 1j * zeta_used

    v_int = np.real(op.potential.interior)
    vbox = np.zeros((nbox, nbox, nbox))
    vbox[margin:margin + n - 1, margin:margin + n - 1, margin:margin + n - 1] = v_int

    if float(np.max(np.abs(v_int))) == 0.0:
        z = np.zeros((nbox, nbox, nbox), dtype=complex)
        conj_res = 0.0
        defect = 0.0
    else:
        z, conj_res, defect = _damped_box_solve(
            nbox, dx, eta, h, vbox, rtol=rtol, max_iter=max_iter)

    # closed unit cube occupies box nodes margin-1 .. margin+n-1
    sl = slice(margin - 1, margin + n)
    v_cube = z[sl, sl, sl].copy()

    X, Y, Z = grid.full_coords()
    phase = np.exp(-(X * eta[0] + Y * eta[1] + Z * eta[2]) / h)
    u_full = phase * (1.0 + v_cube)
    u = ScalarField(grid, u_full, has_boundary=True)
    v_field = ScalarField(grid, v_cube, has_boundary=True)

    wv = grid.volume_weights_full()
    l2 = float(np.sqrt(np.sum(np.abs(v_cube) ** 2 * wv)))
    h1 = _fields.h1_norm_full(v_field)
    int_res = op.residual(u, lam=0.0)
    return CgoSolution(probe=probe, sign=sign, zeta_used=zeta_used, u=u,
                       remainder=v_field, phase=phase,
                       remainder_l2=l2, remainder_h1=h1,
                       conjugated_residual=conj_res,
                       equation_defect=defect,
                       interior_residual=int_res)


def _damped_box_solve(nbox: int, dx: float, eta: np.ndarray, h: float,
                      vbox: np.ndarray, rtol: float, max_iter: int):
    """min ||M z + V||^2 + tau^2 ||z||^2 on the box, zero Dirichlet walls."""
    w = dx * eta / h
    kappa = np.sum(2.0 * np.cosh(w) - 2.0) / dx ** 2
    mats = []
    for a in range(3):
        t = sp.diags([-np.exp(w[a]) * np.ones(nbox - 1),
                      2.0 * np.ones(nbox),
                      -np.exp(-w[a]) * np.ones(nbox - 1)],
                     [-1, 0, 1], format="csr") / dx ** 2
        mats.append(t)
    eye = sp.identity(nbox, format="csr")
    m_op = (sp.kron(sp.kron(mats[0], eye), eye)
            + sp.kron(sp.kron(eye, mats[1]), eye)
            + sp.kron(sp.kron(eye, eye), mats[2]))
    m_op = (m_op + sp.diags((vbox + kappa).ravel())).tocsr()
    m_adj = m_op.conj().T.tocsr()

    tau = DAMPING_SCALE / h
    b = -(vbox.ravel().astype(complex))

    lam1 = 2.0 * (1.0 - np.cos(np.arange(1, nbox + 1) * np.pi / (nbox + 1))) / dx ** 2
    l3 = lam1[:, None, None] + lam1[None, :, None] + lam1[None, None, :]
    wprec = l3 ** 2 + tau ** 2

    def precond(x):
        y = dstn(x.reshape(nbox, nbox, nbox), type=1)
        y /= wprec
        return (dstn(y, type=1) / (2.0 * (nbox + 1)) ** 3).ravel()

    def normal_mv(x):
        return m_adj @ (m_op @ x) + tau ** 2 * x

    nn = nbox ** 3
    op_n = spla.LinearOperator((nn, nn), matvec=normal_mv, dtype=complex)
    op_p = spla.LinearOperator((nn, nn), matvec=precond, dtype=complex)
    rhs = m_adj @ b
    z, info = spla.cg(op_n, rhs, M=op_p, rtol=rtol, atol=0.0, maxiter=max_iter)
    if info != 0:
        raise SolverError(f"damped CGO solve failed to converge (info={info})")
    normal_res = float(np.linalg.norm(normal_mv(z) - rhs)
                       / max(np.linalg.norm(rhs), 1e-300))
    defect = float(np.linalg.norm(m_op @ z - b) / max(np.linalg.norm(b), 1e-300))
    return z.reshape(nbox, nbox, nbox), normal_res, defect


# ---------------------------------------------------------------------
# traces of CGO solutions
# ---------------------------------------------------------------------

@dataclass(frozen=True)
class TraceReport:
    trace: BoundaryField
    hhalf_norm: float
    envelope_c: float       # 1 + sup |x|
    growth_rate: float      # envelope exponent c / h


def probe_traces(sol: CgoSolution) -> TraceReport:
    g = sol.u.boundary_trace()
    nrm = _fields.norm(g, _fields.NormKind.HHALF_QUOTIENT)
    return TraceReport(trace=g, hhalf_norm=nrm, envelope_c=ENVELOPE_C,
                       growth_rate=ENVELOPE_C / sol.probe.h)
