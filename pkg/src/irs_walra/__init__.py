"""Power-measurement-based autocorrelation estimation and IRS coverage design."""

__version__ = "0.1.0"
