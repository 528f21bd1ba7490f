"""Continual semi-supervised learning on drifting streams.

Supervised warm-up, session-chained self-training over an unlabelled stream
and contemporary-model evaluation, with synthetic drifting data generators
and linear learners.
"""
from .errors import ConfigError, CSSLError, InputError, ParseError, SchemaError, TrainingError

__version__ = "0.1.0"

__all__ = ["ConfigError", "CSSLError", "InputError", "ParseError", "SchemaError",
           "TrainingError", "__version__"]
