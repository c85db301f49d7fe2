"""Python access to the medpred C++ core.

Structured results come back as plain dicts and lists.
"""

import json as _json
import os as _os

from . import _medpred
from ._medpred import MedpredError, classify_heading, normalize_tokens

MEDICATIONS = list(_medpred.medications)

__all__ = [
    "MEDICATIONS",
    "MedpredError",
    "classify_heading",
    "normalize_tokens",
    "parse_note",
    "synthetic_notes",
    "evaluate",
    "pmi",
    "tsne",
    "zero_model_loss",
    "default_config",
    "load_config",
    "train",
    "evaluate_seed",
    "analyze",
    "report",
    "run",
]


def _cfg(config):
    return config if isinstance(config, str) else _json.dumps(config)


def parse_note(visit_id, text):
    """Parsed note as a dict, or None when the note has no target medication."""
    out = _medpred.parse_note(visit_id, text)
    return None if out is None else _json.loads(out)


def synthetic_notes(spec=None, seed=0, raw=False):
    text = _medpred.synthetic_notes(_json.dumps(spec or {}), seed, raw)
    return [_json.loads(line) for line in text.splitlines() if line]


def evaluate(preds, labels):
    return _json.loads(_medpred.evaluate([list(p) for p in preds], [list(l) for l in labels]))


def pmi(labels, normalized=False):
    return _json.loads(_medpred.pmi([list(l) for l in labels], normalized))


def tsne(X, **config):
    return _json.loads(_medpred.tsne([list(map(float, r)) for r in X], _json.dumps(config)))


def zero_model_loss(labels):
    return _medpred.zero_model_loss([list(l) for l in labels])


def default_config():
    return _json.loads(_medpred.default_config())


def load_config(path="", overrides=()):
    return _json.loads(_medpred.load_config(_os.fspath(path), list(overrides)))


def train(config, seed):
    return _json.loads(_medpred.train(_cfg(config), seed))


def evaluate_seed(config, seed, split="test"):
    return _json.loads(_medpred.evaluate_seed(_cfg(config), seed, split))


def analyze(config, seed):
    _medpred.analyze(_cfg(config), seed)


def report(config, split="test"):
    return _json.loads(_medpred.report(_cfg(config), split))


def run(config):
    return _json.loads(_medpred.run(_cfg(config)))
