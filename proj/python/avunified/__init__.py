"""Python access to the avunified core: feature bundles, synthetic data,
training, prediction and the gradient suite.

Configs are plain dicts in the run-config layout (``scene``, ``model``,
``train`` sections plus ``seed``); missing keys keep their defaults.
"""

import json

from . import _core
from ._core import AvuError, Bundle, TASKS, max_workers, set_max_workers

__all__ = [
    "AvuError", "Bundle", "Model", "TASKS", "evaluate", "gradient_suite",
    "max_workers", "set_max_workers", "synth", "train",
]


def _dump(config):
    return "" if config is None else json.dumps(config)


class Model:
    """Wraps the core model. ``Model(config)`` builds fresh parameters."""

    def __init__(self, config=None, _core_model=None):
        self._m = _core_model if _core_model is not None else _core.Model(_dump(config))

    @classmethod
    def load(cls, path):
        return cls(_core_model=_core.Model.load(str(path)))

    def save(self, path):
        self._m.save(str(path))

    @property
    def config(self):
        return json.loads(self._m.config)

    @property
    def num_parameters(self):
        return self._m.num_parameters

    def check(self, bundle):
        self._m.check(bundle)

    def loss(self, bundle):
        return self._m.loss(bundle)

    def predict(self, bundle):
        """Dict with the decoded program and, per task, heatmap or masks."""
        return self._m.predict(bundle)


def synth(n, task, stream, config=None):
    """``n`` synthetic bundles of ``task`` drawn from scene stream ``stream``."""
    return _core.synth(_dump(config), n, task, stream)


def train(model, bundles, config=None):
    """Trains in place; returns (iteration, task, loss, lr) per step."""
    return _core.train(model._m, list(bundles), _dump(config))


def evaluate(model, bundles):
    return dict(_core.evaluate(model._m, list(bundles)))


def gradient_suite(seed=1):
    return _core.gradient_suite(seed)
