"""Tabular simulator for KL-regularized preference learning under label local differential privacy.

Modules: ``core`` (rewards, policies, privacy channel, exact objectives),
``offline`` (pessimistic learner), ``online`` (optimistic learner),
``instances`` (hard and random instances, data simulation), ``harness``
(seeded sweeps and CSV output) and ``invariants`` (property checks).
"""

from .core import (
    FunctionClass,
    Instance,
    PolicyTable,
    PrivacyParams,
    PrivateDataset,
    RewardTable,
    StateDistribution,
    gibbs_policy,
    make_rng,
    objective_J,
    suboptimality,
)
from .instances import HardInstanceSpec, hard_instance, offline_dataset_gen, random_instance
from .offline import BonusMode, OfflineParams, ppkl_run
from .online import OnlineParams, RunTrace, pokl_run

__version__ = "0.1.0"

__all__ = [
    "BonusMode",
    "FunctionClass",
    "HardInstanceSpec",
    "Instance",
    "OfflineParams",
    "OnlineParams",
    "PolicyTable",
    "PrivacyParams",
    "PrivateDataset",
    "RewardTable",
    "RunTrace",
    "StateDistribution",
    "gibbs_policy",
    "hard_instance",
    "make_rng",
    "objective_J",
    "offline_dataset_gen",
    "pokl_run",
    "ppkl_run",
    "random_instance",
    "suboptimality",
]
