"""Sharp bounds for causal effects in networks under a misspecified exposure mapping."""

__version__ = "0.1.0"
