"""Para-Hermitian and para-Kähler geometry toolkit on coordinate charts."""

__version__ = "0.1.0"
