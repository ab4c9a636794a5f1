"""Problem and trainer-config files.

Problems are JSON with row-major matrices written as arrays of rows::

    {
      "n": 1, "m": 1,
      "F": [[0.9]], "G": [[1.0]],
      "Q": [[1.0]], "R": [[1.0]], "Qf": [[1.0]],
      "p": 0.1
    }

Adding ``H`` (plus optional ``k``, ``OmegaXi``, ``OmegaZeta``, ``Sigma1``,
``xhat1``) turns the file into a partially observed problem.
"""

import dataclasses
import json

import numpy as np

from .agents import TrainerConfig, validate_config
from .model import LqProblem, LqgProblem, validate, validate_lqg


class ProblemFormatError(ValueError):
    """The file is not parseable as a problem/config description."""


class ValidationError(ValueError):
    """Parsed fine but violates problem or config invariants."""

    def __init__(self, issues):
        super().__init__("; ".join(issues))
        self.issues = list(issues)


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ProblemFormatError(f"{path}: {exc.strerror}") from exc


def _matrix(data, key, path):
    if key not in data:
        raise ProblemFormatError(f"{path}: missing required key '{key}'")
    try:
        return np.array(data[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ProblemFormatError(f"{path}: key '{key}' is not a numeric array") from exc


def load_problem(path):
    """Parse and validate a problem file; the observation map selects the variant."""
    data = _load_json(path)
    for key in ("n", "m", "p"):
        if key not in data:
            raise ProblemFormatError(f"{path}: missing required key '{key}'")
    base = LqProblem(
        F=_matrix(data, "F", path),
        G=_matrix(data, "G", path),
        Q=_matrix(data, "Q", path),
        R=_matrix(data, "R", path),
        Qf=_matrix(data, "Qf", path),
        p=float(data["p"]),
    )
    if int(data["n"]) != base.n or int(data["m"]) != base.m:
        raise ValidationError(
            [f"declared sizes n={data['n']}, m={data['m']} do not match "
             f"F {base.F.shape} / G {base.G.shape}"]
        )
    if "H" not in data:
        report = validate(base)
        if not report.ok:
            raise ValidationError(report.issues)
        return base
    H = _matrix(data, "H", path)
    k = int(data.get("k", H.shape[0]))
    n = base.n
    prob = LqgProblem(
        base=base,
        H=H,
        OmegaXi=_matrix(data, "OmegaXi", path) if "OmegaXi" in data else np.zeros((n, n)),
        OmegaZeta=_matrix(data, "OmegaZeta", path) if "OmegaZeta" in data else np.zeros((k, k)),
        xhat1=np.array(data.get("xhat1", np.zeros(n)), dtype=float),
        Sigma1=_matrix(data, "Sigma1", path) if "Sigma1" in data else np.zeros((n, n)),
    )
    if k != prob.k:
        raise ValidationError([f"declared k={k} does not match H {H.shape}"])
    report = validate_lqg(prob)
    if not report.ok:
        raise ValidationError(report.issues)
    return prob


_CONFIG_KEYS = {f.name for f in dataclasses.fields(TrainerConfig)}


def config_from_dict(data, **overrides):
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ProblemFormatError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(data)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    config = TrainerConfig(**merged)
    issues = validate_config(config)
    if issues:
        raise ValidationError(issues)
    return config


def load_config(path, **overrides):
    data = _load_json(path)
    if not isinstance(data, dict):
        raise ProblemFormatError(f"{path}: config must be a JSON object")
    try:
        return config_from_dict(data, **overrides)
    except ProblemFormatError as exc:
        raise ProblemFormatError(f"{path}: {exc}") from exc


def config_digest(problem_path, config):
    """Short stable hash identifying a (problem, config) cell."""
    import hashlib

    with open(problem_path, "rb") as fh:
        problem_bytes = fh.read()
    payload = json.dumps(
        {"config": dataclasses.asdict(config)}, sort_keys=True
    ).encode() + problem_bytes
    return hashlib.sha256(payload).hexdigest()[:16]
