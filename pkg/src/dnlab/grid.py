"""Uniform grid on the unit cube with boundary bookkeeping and quadrature.

Nodes sit at (i, j, k)/N for 0 <= i, j, k <= N; the (N-1)^3 interior
nodes carry the unknowns of Dirichlet problems.  Boundary nodes are the
lattice points with at least one index in {0, N}, enumerated once in
lexicographic (i, j, k) order; a node on an edge or corner is owned by
the face of its smallest clamped axis.

Quadrature conventions used throughout the lab:

* volume: product-trapezoid weights over all (N+1)^3 nodes (interior
  weight dx^3, boundary nodes down-weighted), total exactly 1;
* surface: per-face 2D product-trapezoid weights, summed over the up to
  three faces meeting at a node, total exactly 6;
* gradient: edge-midpoint values weighted by transverse trapezoid
  weights, so that the Dirichlet energy of u(x) = x_a is exactly 1 and
  summation by parts against interior variations reproduces the 7-point
  Laplacian exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Grid3:
    """Uniform discretization of (0,1)^3 with N subdivisions per axis."""

    n: int
    dx: float
    # boundary node data, aligned arrays of length n_boundary
    boundary_ijk: np.ndarray      # (nb, 3) int lattice indices
    boundary_xyz: np.ndarray      # (nb, 3) float coordinates
    boundary_owner_axis: np.ndarray   # (nb,) int in {0,1,2}
    boundary_owner_sign: np.ndarray   # (nb,) int in {-1,+1}
    boundary_weight: np.ndarray       # (nb,) surface quadrature weights
    boundary_volume_weight: np.ndarray  # (nb,) trapezoid volume weights
    boundary_interior_neighbor: np.ndarray  # (nb,) flat interior index or -1
    _bindex: dict = field(repr=False, hash=False, default=None)

    # ---- construction ------------------------------------------------

    @property
    def n_interior(self) -> int:
        return (self.n - 1) ** 3

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_ijk)

    @property
    def interior_shape(self):
        m = self.n - 1
        return (m, m, m)

    @property
    def full_shape(self):
        return (self.n + 1, self.n + 1, self.n + 1)

    def interior_coords(self):
        """Meshgrid (X, Y, Z) over interior nodes, 'ij' indexing."""
        g = np.arange(1, self.n) * self.dx
        return np.meshgrid(g, g, g, indexing="ij")

    def full_coords(self):
        """Meshgrid (X, Y, Z) over all nodes including the boundary."""
        g = np.arange(0, self.n + 1) * self.dx
        return np.meshgrid(g, g, g, indexing="ij")

    def volume_weights_full(self) -> np.ndarray:
        """(N+1)^3 product-trapezoid volume weights, summing to 1."""
        w1 = np.full(self.n + 1, self.dx)
        w1[0] *= 0.5
        w1[-1] *= 0.5
        return w1[:, None, None] * w1[None, :, None] * w1[None, None, :]

    def transverse_weights(self, axis: int) -> np.ndarray:
        """Edge weights for gradient quadrature along `axis`.

        Shape has N entries along `axis` (one per edge) and N+1 along the
        other two, carrying the 1/2 trapezoid factor on transverse
        boundary planes.  Total weight per axis is exactly 1.
        """
        w1 = np.ones(self.n + 1)
        w1[0] = w1[-1] = 0.5
        shape = [self.n + 1] * 3
        shape[axis] = self.n
        w = np.ones(shape)
        for b in range(3):
            if b == axis:
                continue
            s = [1, 1, 1]
            s[b] = self.n + 1
            w = w * w1.reshape(s)
        return w * self.dx ** 3

    def boundary_index(self, i: int, j: int, k: int) -> int:
        return self._bindex[(i, j, k)]

    def boundary_values_from_full(self, full: np.ndarray) -> np.ndarray:
        ijk = self.boundary_ijk
        return full[ijk[:, 0], ijk[:, 1], ijk[:, 2]]

    def scatter_boundary(self, values: np.ndarray, out: np.ndarray) -> np.ndarray:
        ijk = self.boundary_ijk
        out[ijk[:, 0], ijk[:, 1], ijk[:, 2]] = values
        return out


def build_grid(n: int) -> Grid3:
    """Build the unit-cube grid with N=n subdivisions per axis.

    Requires n >= 4 so that the interior is rich enough for the quotient
    trace norm and the 7-point stencil to be nondegenerate.
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ConfigurationError(f"grid subdivisions must be an integer, got {n!r}")
    if n < 4:
        raise ConfigurationError(f"grid needs at least 4 subdivisions per axis, got {n}")
    n = int(n)
    dx = 1.0 / n

    side = np.arange(0, n + 1)
    I, J, K = np.meshgrid(side, side, side, indexing="ij")
    on_bdry = (
        (I == 0) | (I == n) | (J == 0) | (J == n) | (K == 0) | (K == n)
    )
    ijk = np.stack([I[on_bdry], J[on_bdry], K[on_bdry]], axis=1)
    # meshgrid('ij') + boolean mask already yields lexicographic order
    xyz = ijk * dx

    clamped = (ijk == 0) | (ijk == n)
    owner_axis = np.argmax(clamped, axis=1)
    owner_sign = np.where(ijk[np.arange(len(ijk)), owner_axis] == 0, -1, 1)

    # surface weights: sum of 2D trapezoid weights of every incident face
    w1 = np.ones(n + 1)
    w1[0] = w1[-1] = 0.5
    da = dx * dx
    sw = np.zeros(len(ijk))
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        on_face = clamped[:, axis]
        contrib = w1[ijk[:, others[0]]] * w1[ijk[:, others[1]]] * da
        sw += np.where(on_face, contrib, 0.0)

    wv1 = np.full(n + 1, dx)
    wv1[0] *= 0.5
    wv1[-1] *= 0.5
    wvol = wv1[ijk[:, 0]] * wv1[ijk[:, 1]] * wv1[ijk[:, 2]]

    # interior neighbor: exists only for face-interior boundary nodes
    m = n - 1
    neigh = np.full(len(ijk), -1, dtype=np.int64)
    n_clamped = clamped.sum(axis=1)
    face_only = n_clamped == 1
    for row in np.nonzero(face_only)[0]:
        a = owner_axis[row]
        p = ijk[row].copy()
        p[a] += 1 if p[a] == 0 else -1
        neigh[row] = (p[0] - 1) * m * m + (p[1] - 1) * m + (p[2] - 1)

    bindex = {tuple(t): idx for idx, t in enumerate(map(tuple, ijk.tolist()))}

    return Grid3(
        n=n,
        dx=dx,
        boundary_ijk=ijk,
        boundary_xyz=xyz,
        boundary_owner_axis=owner_axis,
        boundary_owner_sign=owner_sign,
        boundary_weight=sw,
        boundary_volume_weight=wvol,
        boundary_interior_neighbor=neigh,
        _bindex=bindex,
    )
