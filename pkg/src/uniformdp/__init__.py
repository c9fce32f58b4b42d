"""Long-run values, uniform-value certificates and belief lifts for deterministic dynamic programs."""

from .model import BudgetExceeded, Model, ModelError, Play, dumps_model, load_model

__version__ = "0.1.0"

__all__ = ["BudgetExceeded", "Model", "ModelError", "Play", "dumps_model", "load_model", "__version__"]
