"""Joint output distributions of ML surrogates under coupled input and model
uncertainty, via decoupling into independent standard normal variables."""

__version__ = "0.1.0"
