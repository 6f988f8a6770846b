"""Reinforcement learning for mixed systems with augmented samples."""
from .asg import PseudoStateSampler, asg, gaussian_fit, truncated_geometric, uniform_box
from .baselines import (MaxWeightPolicy, PriorityPolicy, RandomPolicy, build_truncated_mdp, policy_value,
                        value_iteration)
from .config import ExperimentConfig
from .core import (ContractError, Dataset, DatasetValidationError, MixedEnvironment, OccupancyBehavior,
                   PolicyTable, ProductBehavior, StochasticState, Transition, collect_dataset, rollout)
from .envs import (CrissCross, CrissCrossConfig, FiniteMixedEnv, GeneralJobCrissCross, GeneralJobConfig, TwoPhaseConfig,
                   TwoPhaseCrissCross, WirelessDownlink, WirelessDownlinkConfig, make_env)
from .evaluation import gap_sweep, mc_policy_value, mixture_check
from .learners import FqiConfig, QLearnConfig, TabularQ, batch_fqi_asg, fqi_fit, q_learning
from .seeding import derive_rng

__version__ = "0.1.0"
