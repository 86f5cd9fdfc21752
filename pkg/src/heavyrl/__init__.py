"""Heavy-tailed linear bandits and linear MDPs via adaptive Huber regression."""

from .bandit import (BanditInstance, HeavyOFUL, MedianOfMeansOFUL, NoiseModel, OFUL,
                     TruncatedOFUL, heavy_tail_instance, run_bandit)
from .ellipsoid import PrecisionState, new_precision, rank_one_update
from .huber import HuberScheduleConfig, default_schedule, huber_grad, huber_loss
from .linear_mdp import (LinearMDPSpec, MDPConfig, exact_dp_oracle, make_tabular_linear_mdp,
                         run_mdp)
from .regression import HuberRegressor, RidgeRegressor
from .solver import SolveProblem, solve

__version__ = "0.1.0"
