from .env import Environment, HorizonExhausted, NoiseModel, deviation, step
from .trace import RegretTrace

__all__ = ["Environment", "HorizonExhausted", "NoiseModel", "RegretTrace", "deviation", "step"]
