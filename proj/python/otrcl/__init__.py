"""Optimal-transport label correction and cross-modal alignment."""

import json as _json

from ._otrcl import *  # noqa: F401,F403
from ._otrcl import __version__, _run_experiment  # noqa: F401


def run_experiment(config):
    """Run one experiment from a config dict (same keys as the JSON config
    files) and return the metrics report as a dict."""
    return _json.loads(_run_experiment(_json.dumps(config)))
