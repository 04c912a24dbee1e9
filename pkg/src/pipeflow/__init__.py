"""Motion-aware, pipelined two-stage video processing engine."""

__version__ = "0.1.0"
