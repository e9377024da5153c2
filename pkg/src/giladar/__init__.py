"""Three-dimensional ghost-imaging ladar: speckle illumination, time-resolved
bucket returns, per-slice fluctuation correlation and 3-D assembly."""

from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    GILadarError,
    InsufficientDataError,
    MeasurementError,
)
from .forward import NoiseModel, PulseShape, bin_trace, run_campaign, simulate_return
from .geometry import (
    GridSpec,
    OpticsConfig,
    axial_bin_depth,
    fov_on_target,
    load_config,
    scale_factor,
    slice_to_depth,
    target_footprint,
)
from .metrics import MetricsReport, depth_accuracy, evaluate, lateral_resolution
from .pipeline import replay_record, simulate_campaign
from .reconstruction import CorrelationAccumulator, SliceStack, normalize_slices, reconstruct_slice
from .scene import Scene, load_scene, make_test_scene
from .speckle import SpeckleFrame, frame_ensemble_stats, generate_frame, sample_on_target
from .tomography import DepthMap, assemble_3d, depth_histogram, export_pointcloud

__version__ = "0.1.0"
