"""lensalign: Monte Carlo lens-system simulator and benchmark suite for
active optical alignment."""

from .config import AppConfig, ConfigError, load_config
from .env import (
    AlignmentEnv,
    EnvConfig,
    EnvState,
    NoiseLevel,
    Pose,
    PoseRangeMap,
    VarianceBundle,
    build_reference,
    calibrate_threshold,
    landscape_slice,
    make_env_config,
    reset,
    reward,
    rmse,
    sample_variances,
    step,
)
from .optics import (
    LensElement,
    LensSurface,
    LensSystem,
    Ray,
    apply_pose,
    paraxial_properties,
)
from .patterns import Bitmap, chessboard, siemens_star, uniform
from .render import RenderParams, SensorImage, intersect_sphere, refract, render, trace_backward
from .search import ALGORITHMS, BayesOpt, RandomSearch, SearchBox, bo_step, random_propose, run_episode
from .surrogates import (
    GPModel,
    ObjectiveSample,
    RFModel,
    expected_improvement,
    gp_fit,
    gp_predict,
    rf_fit,
    rf_predict,
)

__version__ = "0.1.0"
