"""Spectral analysis, stability certificates and simulation for neutral
stochastic heat equations with distributed delays."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.1.0"

from .charfn import NeutralSystem, example_system, from_concrete, no_delay  # noqa: E402

__all__ = ["NeutralSystem", "example_system", "from_concrete", "no_delay", "__version__"]
