"""aoqkd: free-space CVQKD key-rate lab with an adaptive-optics simulator.

The package couples three layers:

* a Gaussian-modulation secret-key-rate chain with visibility-scaled
  transmittance (:mod:`aoqkd.skr`),
* homodyne trace statistics and noise estimation (:mod:`aoqkd.traces`),
* a Shack-Hartmann / deformable-mirror closed-loop simulator that
  characterises turbulence by slope variance (:mod:`aoqkd.wavefront`,
  :mod:`aoqkd.aoloop`) and maps residuals to visibility
  (:mod:`aoqkd.visibility`).

The ``aoqkd`` command line drives bundled 60 cm and 30 m channel fixtures
through sweeps and reports (:mod:`aoqkd.cli`).
"""

from .skr import (
    DetectionScheme,
    DomainError,
    OptimalModulation,
    SkrResult,
    SystemParams,
    TwoModeCovariance,
    bob_variance_model,
    build_covariance,
    compute_skr,
    correlation_coefficient,
    g_function,
    holevo_bound,
    lambda3,
    max_tolerable_excess_noise,
    mutual_information,
    optimize_modulation_variance,
    symplectic_spectrum,
)
from .traces import (
    Trace,
    TraceKind,
    TraceSet,
    WindowedVariances,
    excess_noise_estimate,
    fringe_visibility,
    inferred_visibility,
    normalize_to_snu,
    synthesize_traceset,
)
from .visibility import (
    LockStatus,
    VisibilityMap,
    VisibilityPoint,
    calibrate_map,
    lock_status,
    visibility_from_residual,
)
from .wavefront import (
    SlopeStats,
    TurbulenceGenerator,
    TurbulenceSetting,
    WfsFrame,
    frame_mean_slope,
    generate_turbulence_frame,
    preset_setting,
    slope_variance,
    spot_slope,
)
from .aoloop import (
    AoLoopState,
    DeformableMirror,
    build_reconstructor,
    calibrate_interaction_matrix,
    closed_loop_step,
    make_loop,
    run_characterization,
)
from .config import CM60, M30, ScenarioConfig, load_config

__version__ = "0.1.0"
