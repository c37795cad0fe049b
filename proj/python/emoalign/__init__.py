"""Python bindings for the emoalign C++ core."""

import json

from . import _core
from ._core import (
    BackendError,
    ConfigError,
    ContractError,
    DimensionError,
    Error,
    IoError,
    NumericError,
    ParseError,
    __version__,
    adapter_output_length,
    offline_judge,
    read_corpus,
    render_template,
    rubric_empathy,
    rubric_quality,
    sha256_hex,
    template_names,
    template_placeholders,
)

__all__ = [
    "BackendError",
    "ConfigError",
    "ContractError",
    "DimensionError",
    "Error",
    "IoError",
    "NumericError",
    "ParseError",
    "__version__",
    "adapter_output_length",
    "config_hash",
    "datagen",
    "evaluate",
    "load_checkpoint",
    "load_run_config",
    "offline_judge",
    "parse_emotion_label",
    "read_corpus",
    "render_template",
    "report",
    "rubric_empathy",
    "rubric_quality",
    "score_ser",
    "sha256_hex",
    "template_names",
    "template_placeholders",
    "train",
]


def parse_emotion_label(text):
    """Emotion name found in ``text``, or None."""
    return _core.parse_emotion_label(text) or None


def score_ser(truth, predicted):
    return json.loads(_core.score_ser(list(truth), list(predicted)))


def load_checkpoint(path):
    """Returns (metadata dict, {name: ndarray})."""
    meta, tensors = _core.load_checkpoint(str(path))
    return json.loads(meta), tensors


def load_run_config(path):
    return json.loads(_core.load_run_config(str(path)))


def config_hash(path):
    return _core.config_hash(str(path))


def datagen(config, workers=1):
    return json.loads(_core.datagen(str(config), workers))


def train(config, stage, mode=None, init=None, workers=1):
    return json.loads(_core.train(str(config), stage, mode, None if init is None else str(init), workers))


def evaluate(config, suite, checkpoints, workers=1):
    return json.loads(_core.evaluate(str(config), suite, [str(c) for c in checkpoints], workers))


def report(run_dir):
    return _core.report(str(run_dir))
