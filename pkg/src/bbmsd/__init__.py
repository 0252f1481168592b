"""Magic state distillation factories compiled onto bivariate bicycle codes."""

__version__ = "0.1.0"
