"""Potential library: spec objects, grid sampling, and pointwise truncation.

Kinds:
  zero                 V = 0
  constant             V = c
  gaussian-bumps       sum of Gaussian wells/bumps
  rough-sample         |x - x0|^{-alpha} singularities (alpha < 2 keeps
                       V in L^{3/2}) plus seeded pointwise noise

Every spec carries a Sobolev smoothness tag sigma >= 0; the stability
module turns it into the modulus exponent beta = min(1/2, sigma/3).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, GenerationError
from .fields import ScalarField
from .grid import Grid3

ROUGH_ALPHA_MAX = 2.0   # keeps |x|^-alpha inside L^{3/2} on the cube


@dataclass(frozen=True)
class GaussianBump:
    center: tuple
    width: float
    amplitude: float

    def __post_init__(self):
        if self.width <= 0:
            raise ConfigurationError("bump width must be positive")
        if len(self.center) != 3:
            raise ConfigurationError("bump center must be a 3-vector")


@dataclass(frozen=True)
class PotentialSpec:
    kind: str
    constant: float = 0.0
    bumps: Sequence[GaussianBump] = field(default_factory=tuple)
    seed: int = 0
    law: str = "uniform"
    singular_exponent: float = 1.5
    noise_amplitude: float = 0.0
    sigma: float = 2.0          # smoothness tag for beta = min(1/2, sigma/3)

    KINDS = ("zero", "constant", "gaussian-bumps", "rough-sample")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}")
        if self.sigma < 0:
            raise ConfigurationError("smoothness tag sigma must be >= 0")
        if self.kind == "rough-sample":
            if not (0 < self.singular_exponent < ROUGH_ALPHA_MAX):
                raise ConfigurationError(
                    f"singular exponent must lie in (0, {ROUGH_ALPHA_MAX}) "
                    f"to keep the sample in L^(3/2)")
            if self.law not in ("uniform", "normal"):
                raise ConfigurationError(f"unknown pointwise law {self.law!r}")

    def fingerprint(self) -> str:
        parts = [self.kind]
        if self.kind == "constant":
            parts.append(f"c={self.constant:.12g}")
        for b in self.bumps:
            parts.append("b=%.8g,%.8g,%.8g/%.8g/%.8g"
                         % (*b.center, b.width, b.amplitude))
        if self.kind == "rough-sample":
            parts.append(f"seed={self.seed}/a={self.singular_exponent:.6g}"
                         f"/law={self.law}/na={self.noise_amplitude:.6g}")
        parts.append(f"s={self.sigma:.6g}")
        return "|".join(parts)

    def scaled(self, factor: float) -> "PotentialSpec":
        """Same shape with all amplitudes multiplied by `factor`."""
        return PotentialSpec(
            kind=self.kind,
            constant=self.constant * factor,
            bumps=tuple(GaussianBump(b.center, b.width, b.amplitude * factor)
                        for b in self.bumps),
            seed=self.seed,
            law=self.law,
            singular_exponent=self.singular_exponent,
            noise_amplitude=self.noise_amplitude * factor,
            sigma=self.sigma,
        )


def zero() -> PotentialSpec:
    return PotentialSpec(kind="zero")


def constant(c: float, sigma: float = 2.0) -> PotentialSpec:
    return PotentialSpec(kind="constant", constant=float(c), sigma=sigma)


def gaussian(center=(0.5, 0.5, 0.5), width=0.2, amplitude=10.0,
             sigma: float = 2.0) -> PotentialSpec:
    return PotentialSpec(kind="gaussian-bumps",
                         bumps=(GaussianBump(tuple(center), width, amplitude),),
                         sigma=sigma)


def rough(seed: int, alpha: float = 1.5, law: str = "uniform",
          noise_amplitude: float = 0.0, sigma: float = 0.5) -> PotentialSpec:
    return PotentialSpec(kind="rough-sample", seed=seed, law=law,
                         singular_exponent=alpha,
                         noise_amplitude=noise_amplitude, sigma=sigma)


def sample_potential(spec: PotentialSpec, grid: Grid3) -> ScalarField:
    """Realize the spec on all grid nodes (boundary included).

    The boundary values participate in the trapezoid quadratures that
    make the boundary-pairing identities exact, so potentials are
    sampled as true extensions.
    """
    X, Y, Z = grid.full_coords()
    vals = np.zeros(grid.full_shape)

    if spec.kind == "zero":
        pass
    elif spec.kind == "constant":
        vals += spec.constant
    elif spec.kind == "gaussian-bumps":
        if not spec.bumps:
            raise ConfigurationError("gaussian-bumps spec carries no bumps")
        for b in spec.bumps:
            r2 = (X - b.center[0]) ** 2 + (Y - b.center[1]) ** 2 + (Z - b.center[2]) ** 2
            vals += b.amplitude * np.exp(-r2 / (2.0 * b.width ** 2))
    elif spec.kind == "rough-sample":
        rng = np.random.default_rng(spec.seed)
        n_sing = int(rng.integers(1, 4))
        for _ in range(n_sing):
            x0 = rng.uniform(0.2, 0.8, size=3)
            if spec.law == "uniform":
                amp = rng.uniform(0.5, 1.5)
            else:
                amp = abs(rng.normal(1.0, 0.5)) + 0.1
            r = np.sqrt((X - x0[0]) ** 2 + (Y - x0[1]) ** 2 + (Z - x0[2]) ** 2)
            # a node landing on the singularity is clipped to the
            # neighboring-node value one spacing away
            r = np.where(r < 1e-12, grid.dx, r)
            vals += amp * r ** (-spec.singular_exponent)
        if spec.noise_amplitude > 0:
            if spec.law == "uniform":
                noise = rng.uniform(-1.0, 1.0, size=grid.full_shape)
            else:
                noise = rng.normal(0.0, 1.0, size=grid.full_shape)
            vals += spec.noise_amplitude * noise

    if not np.all(np.isfinite(vals)):
        raise GenerationError(f"potential sample for {spec.kind} is non-finite")
    return ScalarField(grid, vals, has_boundary=True)


def truncate(field: ScalarField, level: float) -> ScalarField:
    """Clip to `level` where |value| exceeds it; identity elsewhere."""
    if level <= 0:
        raise ConfigurationError(f"truncation level must be positive, got {level}")
    vals = np.where(np.abs(field.values) > level, level, field.values)
    return ScalarField(field.grid, vals, has_boundary=field.has_boundary)
