"""Kicked long-range Ising chain with stochastic resetting."""

__version__ = "0.1.0"

from .core import ModelParams, build_couplings, kac_normalization, rng_stream  # noqa: E402

__all__ = ["ModelParams", "build_couplings", "kac_normalization", "rng_stream", "__version__"]
