"""Scalar and boundary fields with the lab's norm machinery.

A ScalarField stores values on the full (N+1)^3 node array; fields
without boundary data keep zeros there (zero extension) and record the
fact.  All integrals are trapezoid-class, matching the second-order
finite-difference operators.

The discrete sesquilinear form

    a_{V,lam}(u, F) = sum_edges w_e (grad u)_e conj(grad F)_e
                      + sum_nodes (V - lam) u conj(F) w_vol

is the single source of truth for energies, weak normal derivatives and
the H^{1/2} quotient norm.  Its edge part reproduces the 7-point
Laplacian exactly under interior variations, which is what makes the
boundary-pairing identities in the dn module exact linear algebra.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .grid import Grid3


@dataclass(frozen=True)
class ScalarField:
    """Complex samples on the grid; `has_boundary` marks a true extension."""

    grid: Grid3
    values: np.ndarray          # full (N+1)^3 array
    has_boundary: bool = False

    def __post_init__(self):
        if self.values.shape != self.grid.full_shape:
            raise ConfigurationError(
                f"field shape {self.values.shape} does not match grid {self.grid.full_shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("field contains non-finite entries")

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1, 1:-1, 1:-1]

    def boundary_trace(self) -> "BoundaryField":
        if not self.has_boundary:
            raise ConfigurationError("field has no boundary extension")
        return BoundaryField(self.grid, self.grid.boundary_values_from_full(self.values))

    def with_boundary(self, bf: "BoundaryField") -> "ScalarField":
        full = self.values.copy()
        self.grid.scatter_boundary(bf.values, full)
        return ScalarField(self.grid, full, has_boundary=True)

    @staticmethod
    def from_interior(grid: Grid3, interior: np.ndarray) -> "ScalarField":
        full = np.zeros(grid.full_shape, dtype=np.result_type(interior, np.float64))
        full[1:-1, 1:-1, 1:-1] = interior.reshape(grid.interior_shape)
        return ScalarField(grid, full, has_boundary=False)

    @staticmethod
    def from_full(grid: Grid3, full: np.ndarray) -> "ScalarField":
        return ScalarField(grid, np.asarray(full), has_boundary=True)


@dataclass(frozen=True)
class BoundaryField:
    """Complex samples on the boundary nodes, in grid enumeration order."""

    grid: Grid3
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.n_boundary,):
            raise ConfigurationError(
                f"boundary field length {self.values.shape} != {self.grid.n_boundary}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("boundary field contains non-finite entries")

    def to_full(self, interior_fill: complex = 0.0) -> np.ndarray:
        """Full node array with this trace scattered in, `interior_fill` elsewhere."""
        dtype = np.result_type(self.values, np.float64, type(interior_fill))
        full = np.full(self.grid.full_shape, interior_fill, dtype=dtype)
        self.grid.scatter_boundary(self.values, full)
        return full


class NormKind(Enum):
    L2 = "L2"
    LP = "Lp"
    H1 = "H1"
    H1_0 = "H1_0"
    HHALF_QUOTIENT = "Hhalf_quotient"
    HMINUSHALF_DUAL = "Hminushalf_dual"


N_LOWER = 6.0 / 5.0   # 2n/(n+2) at n=3
N_UPPER = 6.0         # 2n/(n-2) at n=3


# ---------------------------------------------------------------------
# quadrature building blocks
# ---------------------------------------------------------------------

def integrate(field: ScalarField) -> complex:
    """Trapezoid integral over the cube (zero extension if no boundary)."""
    return complex(np.sum(field.values * field.grid.volume_weights_full()))


def l2_inner(u: ScalarField, v: ScalarField) -> complex:
    """(u, v)_{L^2} with trapezoid weights, conjugating the second slot."""
    g = u.grid
    return complex(np.sum(u.values * np.conj(v.values) * g.volume_weights_full()))


def lp_norm(field: ScalarField, p: float) -> float:
    if p <= 1.0:
        raise ConfigurationError(f"Lp norm requires p > 1, got {p}")
    g = field.grid
    val = np.sum(np.abs(field.values) ** p * g.volume_weights_full())
    return float(val ** (1.0 / p))


def gradient_energy(u_full: np.ndarray, v_full: np.ndarray, grid: Grid3) -> complex:
    """sum_edges w_e (grad u)_e conj(grad v)_e over all lattice edges."""
    dx = grid.dx
    tot = 0.0 + 0.0j
    for axis in range(3):
        du = np.diff(u_full, axis=axis) / dx
        dv = np.diff(v_full, axis=axis) / dx
        tot += np.sum(du * np.conj(dv) * grid.transverse_weights(axis))
    return complex(tot)


def sesquilinear_form(u: ScalarField, f_ext: ScalarField,
                      v_pot: Optional[ScalarField] = None,
                      lam: complex = 0.0) -> complex:
    """a_{V,lam}(u, F): gradient energy plus (V - lam) mass term."""
    g = u.grid
    tot = gradient_energy(u.values, f_ext.values, g)
    w = g.volume_weights_full()
    if v_pot is not None:
        tot += np.sum(v_pot.values * u.values * np.conj(f_ext.values) * w)
    if lam != 0.0:
        tot -= lam * np.sum(u.values * np.conj(f_ext.values) * w)
    return complex(tot)


# ---------------------------------------------------------------------
# trace-space machinery
# ---------------------------------------------------------------------

def minimal_extension(f: BoundaryField) -> ScalarField:
    """Extension of f minimizing the full H^1 norm.

    The minimizer solves (-Lap_h + 1) F = 0 at interior nodes with
    trace f; one sparse solve per call.
    """
    from .operators import _boundary_rhs, _direct_solve_shifted

    g = f.grid
    rhs = _boundary_rhs(g, f.values)
    vals = _direct_solve_shifted(g, shift=1.0, rhs=rhs.ravel())
    field = ScalarField.from_interior(g, vals)
    return field.with_boundary(f)


def h1_norm_full(field: ScalarField) -> float:
    g = field.grid
    e = gradient_energy(field.values, field.values, g)
    m = np.sum(np.abs(field.values) ** 2 * g.volume_weights_full())
    return float(np.sqrt(e.real + m))


def norm(obj, kind: NormKind, p: Optional[float] = None,
         zero_extension: bool = False) -> float:
    """Dispatch for the norm kinds used across the lab.

    H1 on a ScalarField needs either a boundary extension or
    zero_extension=True; the trace norms apply to BoundaryField only.
    """
    if kind in (NormKind.HHALF_QUOTIENT, NormKind.HMINUSHALF_DUAL):
        if not isinstance(obj, BoundaryField):
            raise ConfigurationError(f"{kind.value} norm applies to boundary fields")
        if kind is NormKind.HHALF_QUOTIENT:
            return h1_norm_full(minimal_extension(obj))
        from .dn import BoundaryGrams
        return BoundaryGrams.for_grid(obj.grid).dual_norm(obj.values)

    if not isinstance(obj, ScalarField):
        raise ConfigurationError(f"{kind.value} norm applies to scalar fields")

    if kind is NormKind.L2:
        return lp_norm(obj, 2.0)
    if kind is NormKind.LP:
        if p is None:
            raise ConfigurationError("Lp norm needs an explicit p")
        return lp_norm(obj, p)
    if kind in (NormKind.H1, NormKind.H1_0):
        if kind is NormKind.H1 and not (obj.has_boundary or zero_extension):
            raise ConfigurationError(
                "H1 norm needs a boundary extension or zero_extension=True")
        return h1_norm_full(obj)
    raise ConfigurationError(f"unknown norm kind {kind!r}")


# ---------------------------------------------------------------------
# Fourier quadrature
# ---------------------------------------------------------------------

def fourier_mode(field: ScalarField, k) -> complex:
    """Trapezoid quadrature of the k-mode integral of the zero-extended field.

    k is an arbitrary real 3-vector; no lattice restriction.
    """
    k = np.asarray(k, dtype=float)
    if k.shape != (3,):
        raise ConfigurationError("frequency must be a real 3-vector")
    g = field.grid
    X, Y, Z = g.full_coords()
    phase = np.exp(-1j * (k[0] * X + k[1] * Y + k[2] * Z))
    return complex(np.sum(field.values * phase * g.volume_weights_full()))
