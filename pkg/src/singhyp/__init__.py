"""singhyp: singular hyperbolic metrics on the marked sphere.

Exact-arithmetic stability of the associated rank-2 parabolic Higgs bundle,
a grafted damped-Newton solver for the scalar self-duality equation, and
quadratic-differential deformations with full diagnostics.
"""

__version__ = "0.1.0"

from .bundle import (
    PHI0,
    HiggsSpec,
    StabilityReport,
    TwistVariant,
    Verdict,
    build_parabolic,
    filtration_jumps,
    norm_exponent,
    parabolic_degrees,
    quad_diff_space_degree,
    quad_diff_space_dim,
    stability,
)
from .exact import INFINITY, MobiusMap, QQi
from .surfaces import (
    ConeParameter,
    Configuration,
    Divisor,
    InadmissibleError,
    MarkedPoint,
    admissible,
    configuration,
    divisors,
    euler_char,
    gauss_bonnet_area,
    load_configuration,
    mobius_normalize,
)

__all__ = [
    "__version__",
    "INFINITY",
    "MobiusMap",
    "QQi",
    "ConeParameter",
    "Configuration",
    "Divisor",
    "InadmissibleError",
    "MarkedPoint",
    "admissible",
    "configuration",
    "divisors",
    "euler_char",
    "gauss_bonnet_area",
    "load_configuration",
    "mobius_normalize",
    "PHI0",
    "HiggsSpec",
    "StabilityReport",
    "TwistVariant",
    "Verdict",
    "build_parabolic",
    "filtration_jumps",
    "norm_exponent",
    "parabolic_degrees",
    "quad_diff_space_degree",
    "quad_diff_space_dim",
    "stability",
]
