"""Second-order fluctuations of outlier eigenvalues and eigenvector projections
in spiked sample covariance matrices."""

__version__ = "0.1.0"
