"""dnlab: a desk-scale laboratory for DN-map inverse potential experiments.

Forward Schrödinger solves on the unit cube, discrete
Dirichlet-to-Neumann maps with quotient trace norms, complex-exponential
probe geometry, Fourier-mode recovery of potential differences from
boundary data, log-modulus stability sweeps, and the spectral-data route
to the DN map.
"""

from .grid import Grid3, build_grid
from .fields import (BoundaryField, NormKind, ScalarField, fourier_mode,
                     norm, sesquilinear_form)
from .potentials import (GaussianBump, PotentialSpec, constant, gaussian,
                         rough, sample_potential, truncate, zero)
from .operators import (DiscreteOperator, SpectralData, assemble,
                        closed_form_laplacian_spectrum, eigendecompose,
                        resolvent_apply, solve_dirichlet, weyl_fit)
from .dn import (BoundaryGrams, DnMatrix, assemble_dn, dn_gap_norm,
                 dn_gap_norm_dense, fractional_gap_norm, gamma0, gamma1,
                 smoothing_index)
from .cgo import (CgoSolution, FrequencyProbe, PhaseSpec, cgo_solve,
                  eikonal_check, make_probe, probe_traces, rho_for_h)
from .inverse import (ModeEstimate, Reconstruction, StabilityReport,
                      beta_from_sigma, choose_cutoff, estimate_mode, psi,
                      reconstruct, stability_experiment)
from .spectral_bl import (BoundarySpectralData, ExponentialProbe,
                          boundary_spectral_data, dn_derivative_series,
                          large_mu_gap, s_functional, s_limit_check,
                          series_tail_norms)

__version__ = "0.1.0"

__all__ = [
    "Grid3", "build_grid",
    "BoundaryField", "NormKind", "ScalarField", "fourier_mode", "norm",
    "sesquilinear_form",
    "GaussianBump", "PotentialSpec", "constant", "gaussian", "rough",
    "sample_potential", "truncate", "zero",
    "DiscreteOperator", "SpectralData", "assemble",
    "closed_form_laplacian_spectrum", "eigendecompose", "resolvent_apply",
    "solve_dirichlet", "weyl_fit",
    "BoundaryGrams", "DnMatrix", "assemble_dn", "dn_gap_norm",
    "dn_gap_norm_dense", "fractional_gap_norm", "gamma0", "gamma1",
    "smoothing_index",
    "CgoSolution", "FrequencyProbe", "PhaseSpec", "cgo_solve",
    "eikonal_check", "make_probe", "probe_traces", "rho_for_h",
    "ModeEstimate", "Reconstruction", "StabilityReport", "beta_from_sigma",
    "choose_cutoff", "estimate_mode", "psi", "reconstruct",
    "stability_experiment",
    "BoundarySpectralData", "ExponentialProbe", "boundary_spectral_data",
    "dn_derivative_series", "large_mu_gap", "s_functional", "s_limit_check",
    "series_tail_norms",
    "__version__",
]
