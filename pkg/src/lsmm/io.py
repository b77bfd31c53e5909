"""JSON model/config files and CSV output."""

import csv
import json

import numpy as np

from .linear import ReducedModel, ReductionParams, StateSpace

__all__ = [
    "ConfigError",
    "matrix_to_json",
    "matrix_from_json",
    "save_model",
    "load_model",
    "load_system",
    "load_json",
    "write_csv",
    "read_csv",
]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def matrix_to_json(M):
    """Nested row-major lists; complex arrays become ``{"re": .., "im": ..}``.

    Python's float repr is the shortest string that round-trips, so
    re-reading reproduces every entry bit for bit.
    """
    M = np.asarray(M)
    if np.iscomplexobj(M):
        return {"re": M.real.tolist(), "im": M.imag.tolist()}
    return M.astype(float).tolist()


def matrix_from_json(obj, name="matrix"):
    try:
        if isinstance(obj, dict):
            return np.array(obj["re"], float) + 1j * np.array(obj["im"], float)
        M = np.array(obj, dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: not a numeric matrix ({exc})") from None
    if M.ndim > 2:
        raise ConfigError(f"{name}: more than two dimensions")
    if not np.all(np.isfinite(M)):
        raise ConfigError(f"{name}: non-finite entry")
    return M


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def model_to_dict(model):
    out = {"F": matrix_to_json(model.F), "G": matrix_to_json(model.G), "H": matrix_to_json(model.H)}
    p = model.provenance
    if p is not None:
        out.update(P=matrix_to_json(p.P), Delta=matrix_to_json(p.Delta), T=matrix_to_json(p.T))
        if p.Q is not None:
            out["Q"] = matrix_to_json(p.Q)
    return out


def model_from_dict(d):
    try:
        F, G, H = (matrix_from_json(d[k], k) for k in ("F", "G", "H"))
    except KeyError as exc:
        raise ConfigError(f"model file lacks {exc.args[0]}") from None
    prov = None
    if all(k in d for k in ("P", "Delta", "T")):
        Q = matrix_from_json(d["Q"], "Q") if "Q" in d else None
        prov = ReductionParams(
            matrix_from_json(d["P"], "P"), matrix_from_json(d["Delta"], "Delta"), matrix_from_json(d["T"], "T"), Q
        )
    return ReducedModel(F, G, H, prov)


def save_model(model, path, report=None):
    data = model_to_dict(model)
    if report is not None:
        data["report"] = report
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1)


def load_model(path):
    return model_from_dict(load_json(path))


def load_system(obj):
    """A StateSpace from ``{"A", "B", "C"}``, or from ``{"F", "G", "H"}``."""
    keys = ("A", "B", "C") if "A" in obj else ("F", "G", "H")
    try:
        mats = [matrix_from_json(obj[k], k) for k in keys]
    except KeyError as exc:
        raise ConfigError(f"system lacks {exc.args[0]}") from None
    try:
        return StateSpace(*mats)
    except ValueError as exc:
        raise ConfigError(f"inconsistent system matrices: {exc}") from None


def _fmt(x):
    return format(float(x), ".17g")


def write_csv(path, header, columns):
    """Comma-separated file with a header row and 17 significant digits."""
    cols = [np.asarray(c) for c in columns]
    rows = zip(*cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(v if isinstance(v, str) else _fmt(v) for v in row)


def read_csv(path):
    """``(header, rows)`` with numeric cells parsed as floats."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = []
        for row in r:
            parsed = []
            for v in row:
                try:
                    parsed.append(float(v))
                except ValueError:
                    parsed.append(v)
            rows.append(parsed)
    return header, rows
