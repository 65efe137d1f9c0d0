"""GraphERE: joint event-event relation extraction with graph-enhanced
event embeddings, on a self-contained float64 autodiff engine."""

from .autodiff import Tensor

__all__ = ["Tensor"]
__version__ = "0.1.0"
