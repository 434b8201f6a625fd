"""Spectral flow of paths of self-adjoint Fredholm operators at matrix scale."""

from .doi import (
    DOIKernel,
    ScalarFunction,
    apply_doi,
    divided_difference,
    divided_difference_kernel,
    interpolation_gap,
    perturbation_residual,
    trace_duality_residual,
    vartheta,
    vartheta_derivative,
)
from .errors import SpecflowError
from .flow import (
    SFReport,
    loop_integral,
    relative_index,
    retract,
    sf_crossing,
    sf_integral_bounded,
    sf_integral_unbounded,
    sf_partition,
)
from .operators import (
    EigenSystem,
    FramedOperator,
    Interval,
    apply_function,
    eigensystem,
    essential_data,
    phase,
    spectral_projection,
    trace_functionals,
)
from .paths import (
    OperatorPath,
    concatenate,
    gamma_derivative_residual,
    make_line_path,
    make_phase_rectangle_loop,
    make_quadratic_path,
    make_random_quadratic_path,
    make_trig_loop,
    make_trig_path,
    reverse,
    sample,
    vartheta_path,
)
from .quadrature import QuadResult, integrate_adaptive, integrate_line
from .weights import (
    BumpWeight,
    GaussianWeight,
    PullbackWeight,
    ResolventWeight,
    SpectralWeight,
    boundary_f,
    boundary_term,
    evaluate,
    make_weight,
)

__version__ = "0.1.0"
