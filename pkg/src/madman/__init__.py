"""Synthetic object-attribute binding benchmark for tiny CLIP-style models."""
from .errors import MadmanError

__version__ = "0.1.0"
__all__ = ["MadmanError", "__version__"]
