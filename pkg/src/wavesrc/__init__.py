"""Reconstruction of stationary acoustic source supports from first-arrival times.

Pipeline: :mod:`~wavesrc.geometry` supports radiate a :mod:`~wavesrc.signal`
through :func:`wavesrc.forward.simulate`; :mod:`~wavesrc.measurement` adds
noise and picks arrivals; :mod:`~wavesrc.reconstruct` evaluates sampling
indicators or carves balls.  :mod:`~wavesrc.scenario` ties the stages together.
"""

__version__ = "0.1.0"

from ._accel import backend, set_threads  # noqa: E402
from .errors import ValidationError  # noqa: E402

__all__ = ["__version__", "backend", "set_threads", "ValidationError"]
