"""mixkin: exact peak-height likelihoods for DNA mixtures with related contributors."""

__version__ = "0.1.0"
