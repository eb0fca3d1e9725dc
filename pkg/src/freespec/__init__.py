"""freespec: free-probability spectral analysis of covariance polynomials."""

__version__ = "0.1.0"
