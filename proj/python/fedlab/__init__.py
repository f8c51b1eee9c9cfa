"""Python bindings for the fedlab experiment library."""

import json as _json

from ._fedlab import (
    PenaltyLedger,
    __version__,
    bounds,
    cluster_updates,
    fedavg,
    median,
    multi_krum,
    standard_normal_cdf,
    ward_distance,
)
from ._fedlab import run as _run


def run(config, out, seed=None):
    """Run an experiment. ``config`` is a dict or a JSON string."""
    text = config if isinstance(config, str) else _json.dumps(config, indent=2)
    return _run(text, str(out), seed)


__all__ = [
    "PenaltyLedger",
    "__version__",
    "bounds",
    "cluster_updates",
    "fedavg",
    "median",
    "multi_krum",
    "run",
    "standard_normal_cdf",
    "ward_distance",
]
