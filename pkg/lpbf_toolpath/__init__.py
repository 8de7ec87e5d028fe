"""
LPBF Toolpath - deep Q-learning scan patterns for laser powder bed fusion
Uniform domain sampling, a three-strategy RL environment, a numpy DQN,
baseline patterns and an analytic melt-pool simulator
"""

__version__ = "1.0.0"

from .config import AppConfig, load_config
from .errors import (ConfigError, DegenerateDomainError, EpisodeDoneError, ModelFormatError,
                     NonFiniteLossError, ToolpathError)
from .geometry import PolygonDomain, SampleGrid, rectangle, regular_polygon, sample_uniform
from .toolpath import Move, Toolpath
from .thermal import ThermalSimulator, calibrate_absorptivity, depth_stats
from .env import ToolpathEnv, detect_sensitive_regions
from .learner import QNetwork, greedy_rollout, load_model, save_model, train
from .baselines import BaselineSpec, atg_greedy, chessboard, zigzag
from .pathplan import export_gcode, finetune_gcode, plan_islands

__all__ = [
    'AppConfig',
    'load_config',
    'ToolpathError',
    'ConfigError',
    'DegenerateDomainError',
    'EpisodeDoneError',
    'ModelFormatError',
    'NonFiniteLossError',
    'PolygonDomain',
    'SampleGrid',
    'rectangle',
    'regular_polygon',
    'sample_uniform',
    'Move',
    'Toolpath',
    'ThermalSimulator',
    'calibrate_absorptivity',
    'depth_stats',
    'ToolpathEnv',
    'detect_sensitive_regions',
    'QNetwork',
    'train',
    'greedy_rollout',
    'save_model',
    'load_model',
    'BaselineSpec',
    'zigzag',
    'chessboard',
    'atg_greedy',
    'finetune_gcode',
    'export_gcode',
    'plan_islands',
]
