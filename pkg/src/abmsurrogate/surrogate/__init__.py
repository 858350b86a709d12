import json

from .boosting import (
    Hyperparams,
    TreeEnsemble,
    fit_boosted,
    importance,
    predict,
    predict_margin,
    with_calibrator,
)
from .calibration import ConvergenceError, LogitModel, apply_platt, fit_logit, platt_calibrate
from .tuning import FoldError, tune

__all__ = [
    "ConvergenceError",
    "FoldError",
    "Hyperparams",
    "LogitModel",
    "TreeEnsemble",
    "apply_platt",
    "fit_boosted",
    "fit_logit",
    "load_model",
    "model_output",
    "importance",
    "platt_calibrate",
    "predict",
    "predict_margin",
    "save_model",
    "tune",
    "with_calibrator",
]


def load_model(path):
    """Read a saved tree ensemble or logit model, whichever the file holds."""
    with open(path) as fh:
        text = fh.read()
    fmt = json.loads(text).get("format", "")
    if fmt.startswith("abmsurrogate.tree_ensemble"):
        return TreeEnsemble.from_json(text)
    if fmt.startswith("abmsurrogate.logit"):
        return LogitModel.from_json(text)
    raise ValueError(f"{path}: unrecognised model format {fmt!r}")


def save_model(model, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(model.to_json())


def model_output(model, X):
    """Probability (classifiers) or predicted value (regressors) per row."""
    if isinstance(model, LogitModel):
        return model.predict(X)
    return predict(model, X)
