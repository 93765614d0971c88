"""Multi-perspective co-attention commenting model over a small autodiff core."""

__version__ = "0.1.0"
