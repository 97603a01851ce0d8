"""Strong-stability analysis of linear ODEs with almost periodic coefficients."""

__version__ = "0.1.0"
