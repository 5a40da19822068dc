"""Kernel neural operator: operator learning with trainable kernel integral layers."""
from .errors import ConditioningError, ContractError, KnoError, NumericError
from .model import KnoModel, ModelConfig, build_model, count_parameters, forward, predict
from .training import TrainConfig, evaluate, freeze_train, train

__version__ = "0.1.0"
