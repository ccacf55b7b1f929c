"""Typicality of observables in two-mode boson systems.

Exact Fock-space numerics, the overlap-integral typicality calculus, exact
(N, n) polynomials for ensemble moments, and Monte Carlo checks.
"""

from .correlations import (
    CorrelationObservable,
    assemble_C_k,
    classical_pattern,
    kernel_observable,
    mean_C2_leading,
    second_moment,
)
from .fock import (
    BandMatrix,
    NormalMonomial,
    OperatorError,
    StateVector,
    SystemParams,
    TwoModeOperator,
    ensemble_variance_exact,
    expectation,
    microcanonical_trace,
    to_band_matrix,
    variance_components,
)
from .modes import FarFieldGaussian, PlaneWave, Tabulated, convolution_profile, parse_modes, phi_m
from .montecarlo import (
    EnsembleConfig,
    ensemble_statistics,
    empirical_C2,
    rng_stream,
    sample_state,
    scaling_scan,
    simulate_pattern,
)
from .poly import BivariatePoly, moment_sum, power_sum
from .typicality import (
    DeltaComb,
    GridKernel,
    NotTypicalError,
    TypicalityReport,
    classify_regime,
    coefficient_D_2k0,
    coefficient_D_2k2,
    integral_I,
    integral_J,
    integral_table,
    parse_kernel,
    typicality_report,
    variance_polynomial,
)

__version__ = "0.1.0"
