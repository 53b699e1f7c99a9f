"""Experiment configuration: parsing, defaults, validation and run snapshots."""

from __future__ import annotations

import copy
import enum
import json
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path

from .. import __version__
from ..distributions import InvalidMeasureError, MeasureSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


class ExperimentKind(enum.Enum):
    EXACT_POLY = "ExactPoly"
    GENERALIZE_ADMISSIBLE = "GeneralizeAdmissible"
    TEACHER_STUDENT = "TeacherStudent"
    SELF_REGULARIZATION = "SelfRegularization"
    COVERING_EVENT = "CoveringEvent"
    COND_NUMBER = "CondNumber"
    MNIST_CONV = "MnistConv"
    NOISE_ROBUSTNESS = "NoiseRobustness"


_UNIFORM = {"kind": "uniform"}

DEFAULTS = {
    ExperimentKind.EXACT_POLY: {
        "d": 3, "L": 1, "m": 4, "activation": {"kind": "polynomial", "coeffs": [0, 0, 1]},
        "seeds": 20, "n_test": 1000, "student_factor": 4, "measure": _UNIFORM,
    },
    ExperimentKind.GENERALIZE_ADMISSIBLE: {
        "d": 4, "L": 1, "m": 10, "activation": "relu", "epsilon": 0.05, "layer_budget": 4.0,
        "M": None, "n_multipliers": [2, 8, 32], "seeds": 10, "n_test": 20000,
        "measure": _UNIFORM, "student_width": None,
    },
    ExperimentKind.TEACHER_STUDENT: {
        "d": 4, "L": 1, "m": 5, "activation": "relu", "epsilon": 0.05, "layer_budget": 4.0,
        "width_factors": [1, 4, 16], "n_multiplier": 8, "seeds": 5, "n_test": 10000,
        "measure": _UNIFORM,
    },
    ExperimentKind.SELF_REGULARIZATION: {
        "d": 2, "N": None, "trials": 200, "m": 5, "kappa": 1, "z": 1, "nu": 10.0,
        "student_factor": 2, "measure": _UNIFORM,
    },
    ExperimentKind.COVERING_EVENT: {"d": 2, "N": None, "trials": 200, "measure": _UNIFORM},
    ExperimentKind.COND_NUMBER: {
        "measures": [{"kind": "rademacher"}, {"kind": "discrete", "support": [-1, 0, 1]}],
        "d": [2, 3, 4], "k": [1, 2, 3],
    },
    ExperimentKind.MNIST_CONV: {
        "train_images": None, "train_labels": None, "test_images": None, "test_labels": None,
        "n_batches": 50, "batch_size": 1000, "r": 2, "curve": True,
    },
    ExperimentKind.NOISE_ROBUSTNESS: {
        "train_images": None, "train_labels": None, "test_images": None, "test_labels": None,
        "model": None, "n_batches": 50, "batch_size": 1000, "r": 2,
        "sigmas": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
        "areas": [0, 10, 25, 40, 55, 70, 100], "n_eval": None,
    },
}

_PATH_KEYS = ("train_images", "train_labels", "test_images", "test_labels")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: ExperimentKind
    params: dict
    seed: int = 0
    out: str = "runs/latest"
    workers: int = 1

    def __getitem__(self, key):
        return self.params[key]

    def measure(self, key: str = "measure") -> MeasureSpec:
        return MeasureSpec.from_config(self.params[key])

    def resolved(self) -> dict:
        return {"kind": self.kind.value, "seed": self.seed, "out": self.out,
                "workers": self.workers, **copy.deepcopy(self.params)}


def read_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _check_positive_int(name, value):
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")


def parse_config(raw: dict, seed=None, out=None, workers=None) -> ExperimentConfig:
    """Merge ``raw`` over the defaults of its kind and validate before any compute."""
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("config must be an object with a 'kind' field")
    try:
        kind = ExperimentKind(raw["kind"])
    except ValueError:
        raise ConfigError(f"unknown experiment kind {raw['kind']!r}") from None
    params = copy.deepcopy(DEFAULTS[kind])
    meta = {"kind", "seed", "out", "workers"}
    unknown = set(raw) - set(params) - meta
    if unknown:
        raise ConfigError(f"unknown keys for {kind.value}: {sorted(unknown)}")
    params.update({k: v for k, v in raw.items() if k not in meta})
    cfg = ExperimentConfig(
        kind, params,
        seed=int(seed if seed is not None else raw.get("seed", 0)),
        out=str(out if out is not None else raw.get("out", f"runs/{kind.value}")),
        workers=int(workers if workers is not None else raw.get("workers", 1)),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    p = cfg.params
    for key in ("d", "L", "m", "seeds", "trials", "n_test", "n_batches", "batch_size"):
        if key in p and not isinstance(p[key], list):
            _check_positive_int(key, p[key])
    if "epsilon" in p and not (0 < float(p["epsilon"]) <= 1):
        raise ConfigError("epsilon must lie in (0, 1]")
    for key in ("measure",):
        if key in p:
            try:
                cfg.measure(key)
            except InvalidMeasureError as exc:
                raise ConfigError(str(exc)) from exc
    if cfg.kind is ExperimentKind.COND_NUMBER:
        for m in p["measures"]:
            try:
                MeasureSpec.from_config(m)
            except InvalidMeasureError as exc:
                raise ConfigError(str(exc)) from exc
    if cfg.kind is ExperimentKind.EXACT_POLY:
        act = p["activation"]
        if not (isinstance(act, dict) and act.get("kind") == "polynomial"):
            raise ConfigError("ExactPoly needs a polynomial activation")
        if cfg.measure().is_discrete:
            raise ConfigError("ExactPoly needs a continuous measure")
    if cfg.kind in (ExperimentKind.GENERALIZE_ADMISSIBLE, ExperimentKind.TEACHER_STUDENT):
        act = p["activation"]
        name = act if isinstance(act, str) else act.get("kind")
        if name not in ("relu", "sigmoid"):
            raise ConfigError(f"{cfg.kind.value} needs a relu or sigmoid teacher")
    if cfg.kind in (ExperimentKind.SELF_REGULARIZATION, ExperimentKind.COVERING_EVENT):
        if cfg.measure().is_discrete:
            raise ConfigError("the covering event needs a continuous measure")
    if cfg.kind is ExperimentKind.MNIST_CONV:
        missing = [k for k in _PATH_KEYS if not p.get(k)]
        if missing:
            raise ConfigError(f"missing dataset paths: {missing}")
    if cfg.kind is ExperimentKind.NOISE_ROBUSTNESS:
        need = ["test_images", "test_labels"]
        if not p.get("model"):
            need += ["train_images", "train_labels"]
        missing = [k for k in need if not p.get(k)]
        if missing:
            raise ConfigError(f"missing dataset paths: {missing}")


def version_string() -> str:
    """Package version, suffixed with ``git describe`` output when available."""
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                              cwd=Path(__file__).resolve().parent, capture_output=True,
                              text=True, timeout=5)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__
