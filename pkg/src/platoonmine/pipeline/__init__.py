"""Pipeline orchestration: config, grid resampling, stages and full runs."""

from .config import PipelineConfig, load_config
from .stages import PipelineError, run_pipeline
