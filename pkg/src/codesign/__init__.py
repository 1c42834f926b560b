"""Joint evolutionary search over MLP architectures and systolic-array accelerator configurations."""

__version__ = "0.1.0"
