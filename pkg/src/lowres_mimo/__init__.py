"""Link-level simulation of a massive-MIMO uplink with low-resolution ADCs."""

from .errors import CapacityError, NumericError

__version__ = "0.1.0"

__all__ = ["CapacityError", "NumericError", "__version__"]
