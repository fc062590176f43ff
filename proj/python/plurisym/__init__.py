"""Python access to the Hermitian-symplectic flow lab."""

import json

from . import _core
from ._core import PositivityLostError, fit_polynomial, flow_columns, ruled_surface_a2, surface_obstruction

__all__ = [
    "PositivityLostError",
    "analyze_volume",
    "fit_polynomial",
    "flow_columns",
    "initial_summary",
    "ruled_surface_a2",
    "run_flow",
    "surface_obstruction",
    "verify",
]


def _dump(config):
    return json.dumps(config or {})


def run_flow(config=None):
    """Integrate the flow; `records` is an array with one row per sample."""
    return _core.run_flow(_dump(config))


def initial_summary(config=None):
    return _core.initial_summary(_dump(config))


def verify(config=None, inject_fault=False):
    return _core.verify(_dump(config), inject_fault)


def analyze_volume(config=None):
    return _core.analyze_volume(_dump(config))
