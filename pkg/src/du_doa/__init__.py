"""Single-source DOA estimation and tracking with diagonal-unloading SRP."""

from .array import (
    ArrayGeometry,
    ArrayKind,
    Direction,
    DirectionGrid,
    build_grid,
    load_geometry,
    propagation_delays,
    steering_table,
    steering_vector,
)
from .config import PipelineConfig, load_config, preset_config
from .evaluation import ScoreReport, angular_error, rmse
from .localizer import DoaEstimate, DuLocalizer, SrpMap, argmax_doa, broadband_srp, du_power
from .pipeline import Pipeline, run_pipeline
from .scene import SceneSpec, Trajectory, ground_truth_at, synthesize
from .spectral import CpsdStack, MultichannelBuffer, SpectralFrame, StftConfig, estimate_cpsd, hann_window, stft
from .tracker import SmoothedEstimate, Tracker, TrackerConfig, TrackState, correct, initialize, predict, step
from .vad import VadDecision, detect

__version__ = "0.1.0"
