"""Plain-text matrix files.

A file is a header of ``# key: value`` metadata lines followed by one or
more ``[name]`` sections, each holding a square matrix written row by row
with 17 significant digits (enough to round-trip float64 exactly)::

    # macggm-matrix v1
    # kind: model
    # d: 3
    [precision]
    1 0 0
    ...
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .estimators import CovarianceEstimate
from .errors import IncoherenceError, ModelError
from .model import CONSTANTS_MAX_DIM, GgmModel, compute_constants

MAGIC = "# macggm-matrix v1"


def format_matrix(m: np.ndarray) -> str:
    return "\n".join(" ".join(f"{v:.17g}" for v in row) for row in np.asarray(m, dtype=float))


def dumps(sections: dict[str, np.ndarray], meta: dict | None = None) -> str:
    lines = [MAGIC]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}: {value}")
    for name, mat in sections.items():
        lines.append(f"[{name}]")
        lines.append(format_matrix(mat))
    return "\n".join(lines) + "\n"


def loads(text: str) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    meta: dict[str, str] = {}
    sections: dict[str, list[list[float]]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, value = body.split(":", 1)
                meta[key.strip()] = value.strip()
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections[current] = []
            continue
        if current is None:
            raise ValueError("matrix row before any [section] header")
        sections[current].append([float(tok) for tok in line.split()])
    out = {}
    for name, rows in sections.items():
        arr = np.array(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"section [{name}] is not a square matrix")
        out[name] = arr
    return out, meta


def model_to_text(model: GgmModel) -> str:
    meta = {
        "kind": "model",
        "d": model.d,
        "seed": "none" if model.seed is None else model.seed,
        "max_degree": model.max_degree,
        "theta_min": f"{model.theta_min:.17g}",
    }
    if model.d <= CONSTANTS_MAX_DIM:
        try:
            meta["alpha"] = f"{compute_constants(model).alpha:.17g}"
        except (IncoherenceError, ModelError):
            meta["alpha"] = "violated"
    return dumps({"precision": model.precision, "covariance": model.covariance}, meta)


def model_from_text(text: str) -> GgmModel:
    sections, meta = loads(text)
    if "precision" not in sections:
        raise ValueError("model file needs a [precision] section")
    theta = sections["precision"]
    cov = sections.get("covariance")
    if cov is None:
        cov = np.linalg.inv(theta)
    seed = meta.get("seed", "none")
    return GgmModel(theta, cov, seed=None if seed == "none" else int(seed))


def estimate_to_text(est: CovarianceEstimate) -> str:
    meta = {"kind": "estimate", "provenance": est.provenance, "d": est.d,
            "n_used": est.n_used, "clamps": est.clamps}
    return dumps({"covariance": est.matrix}, meta)


def estimate_from_text(text: str) -> CovarianceEstimate:
    sections, meta = loads(text)
    mat = sections.get("covariance")
    if mat is None:
        raise ValueError("estimate file needs a [covariance] section")
    return CovarianceEstimate(
        mat,
        meta.get("provenance", "original"),
        int(meta.get("n_used", 0)),
        int(meta.get("clamps", 0)),
    )


def read_any_covariance(path: str | Path) -> np.ndarray:
    """First matrix usable as solver input: [covariance], else the only section."""
    sections, _ = loads(Path(path).read_text())
    if "covariance" in sections:
        return sections["covariance"]
    if len(sections) == 1:
        return next(iter(sections.values()))
    raise ValueError(f"{path}: no [covariance] section")


def save(path: str | Path, text: str) -> None:
    Path(path).write_text(text)

