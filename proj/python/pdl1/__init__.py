"""PD-L1 whole slide image scoring: ROI, histogram and autoencoder pipelines."""

from ._pdl1 import *  # noqa: F401,F403
from ._pdl1 import __version__  # noqa: F401
