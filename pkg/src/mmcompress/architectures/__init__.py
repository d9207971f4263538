"""Synthetic (JE, control, CM) and robot (default, AES) pipelines."""

from .robot import (
    AesPreEncoder,
    ConfigError,
    RobotNetConfig,
    RobotPipeline,
    RobotPredictors,
    train_aes_pre,
    train_robot_cm,
    train_robot_default,
    train_robot_predictors,
)
from .synthetic import (
    Autoencoder,
    CMPipeline,
    ControlPipeline,
    CrossModalPredictors,
    JEPipeline,
    build_pipeline,
    encode_cm,
    train_cm,
    train_control,
    train_cross_modal,
    train_je,
)

__all__ = [
    "AesPreEncoder", "ConfigError", "RobotNetConfig", "RobotPipeline", "RobotPredictors",
    "train_aes_pre", "train_robot_cm", "train_robot_default", "train_robot_predictors",
    "Autoencoder", "CMPipeline", "ControlPipeline", "CrossModalPredictors", "JEPipeline",
    "build_pipeline", "encode_cm", "train_cm", "train_control", "train_cross_modal", "train_je",
]
