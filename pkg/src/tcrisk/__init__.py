"""Portfolio tail-risk estimation under the t-copula with MC and RQMC."""

__version__ = "0.1.0"
