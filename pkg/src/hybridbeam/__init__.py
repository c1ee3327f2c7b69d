"""Hybrid analog/digital mmWave receivers with phase shifters and switches.

Power modeling, compressive channel estimation and hybrid combiner design
for six receiver architectures (A1-A6).
"""

from .architectures import Architecture, PowerModel, full_digital_power, is_feasible, receiver_power
from .channel import ArrayGeometry, ChannelParams, make_dictionary, nmse, sample_channel
from .combining import (
    CombinerDesign,
    build_dictionary,
    exhaustive_combiner,
    hybrid_antenna_selection,
    mutual_information,
    optimal_unconstrained,
    somp_combiner,
    waterfilling,
)
from .config import ConfigError, ExperimentSpec, SystemConfig, load_config
from .estimation import EstimateResult, exhaustive_search_estimate, ls_estimate, omp
from .experiments import ResultTable, run_experiment
from .training import TrainingPlan, greedy_training, ls_orthogonal_training, random_training, sensing_matrix

__version__ = "0.1.0"
