"""Path attribution toolkit.

Canonical linear-path integrated gradients, an optimized feature-absence
baseline search, validity-filtered multi-baseline integration, an exact
piecewise-linear oracle, executable axiom checks, and the insertion/
deletion and Sensitivity-N evaluation protocols -- all deterministic and
verifiable at desk scale.
"""

from .axioms import (
    AxiomReport,
    check_completeness,
    check_dummy,
    check_same_region_consistency,
    demo_consistent_baseline,
    demo_zero_baseline,
    probe_weak_dependence,
)
from .baselines import (
    BaselineResult,
    BaselineSearchError,
    BaselineSpec,
    compute_baseline,
    enforce_min_gap,
    fixed_baseline,
    gaussian_blur,
    make_baseline,
)
from .metrics import (
    Curve,
    EvalReport,
    InsDelResult,
    RankedOrder,
    auc_trapezoid,
    insertion_deletion_score,
    pearson,
    rank_features,
    sensitivity_n,
)
from .model import (
    Model,
    ModelFormatError,
    ModelSpec,
    ShapeError,
    finite_diff_oracle,
    kink_flags,
    load_model,
    save_model,
)
from .netpbm import ImageFormatError, read_image, write_image
from .paths import (
    AttributionMap,
    LogitFunction,
    NonFiniteGradientError,
    RiemannConfig,
    expected_gradients,
    path_point,
    riemann_ig,
)
from .pwl import (
    Halfspace,
    PwlModel,
    PwlPiece,
    RegionOverlapError,
    builtin_pwl,
    evaluate_pwl,
    exact_path_attribution,
    segment_path,
)
from .tensor import TensorF, as_tensor
from .train import TrainResult, blob_dataset, blob_net_spec, cnn16_spec, shapes16_dataset, train_toy
from .valid_path import (
    IntegrationTrace,
    ProposedConfig,
    attribute_proposed,
    integrate_single_baseline,
    validity_check,
    validity_mask,
)

__version__ = "0.1.0"
