"""JSON/CSV readers and writers for measures, plans, variations, functionals and constraints.

References to other files inside functional or constraint JSON (``"ref": "ref.json"``) are
resolved relative to the directory of the JSON file that mentions them.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ValidationError
from .measures import DiscreteMeasure, canonicalize
from .transport import TransportPlan

PathLike = Union[str, Path]


def _float(x) -> float:
    """Plain float for JSON; non-finite values become strings."""
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, repr-exact floats)."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def measure_to_dict(m: DiscreteMeasure) -> dict:
    return {
        "dim": int(m.dim),
        "points": [[float(x) for x in p] for p in m.points],
        "weights": [float(w) for w in m.weights],
    }


def measure_from_dict(d: dict, canonical: bool = True) -> DiscreteMeasure:
    if not isinstance(d, dict) or "points" not in d or "weights" not in d:
        raise ValidationError("measure JSON needs 'points' and 'weights'", field="measure")
    try:
        pts = np.asarray(d["points"], dtype=float)
        w = np.asarray(d["weights"], dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("measure entries must be numbers", field="points") from None
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if "dim" in d and pts.size and pts.shape[1] != int(d["dim"]):
        raise ValidationError(f"declared dim {d['dim']} but points have dim {pts.shape[1]}", field="dim")
    m = DiscreteMeasure(pts, w)
    return canonicalize(m) if canonical else m


def _read_csv_rows(path: Path) -> list[list[float]]:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row if c.strip() != ""]
            if not cells or cells[0].startswith("#"):
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                if not rows and lineno == 1:
                    continue  # header line
                raise ValidationError(f"{path}: non-numeric entry on line {lineno}", field=str(path)) from None
    if not rows:
        raise ValidationError(f"{path}: no data rows", field=str(path))
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path}: rows have different lengths", field=str(path))
    return rows


def load_points(path: PathLike) -> np.ndarray:
    """Point cloud from CSV (one row per point) or JSON (list of points or a measure)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}", field=str(path))
    if path.suffix.lower() == ".json":
        data = _read_json(path)
        if isinstance(data, dict):
            data = data.get("points", data.get("data"))
        arr = np.asarray(data, dtype=float)
        return arr.reshape(-1, 1) if arr.ndim == 1 else arr
    return np.asarray(_read_csv_rows(path), dtype=float)


def load_measure(path: PathLike) -> DiscreteMeasure:
    """Measure from JSON ({"dim","points","weights"}) or CSV (weight in the last column)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}", field=str(path))
    if path.suffix.lower() == ".csv":
        rows = np.asarray(_read_csv_rows(path), dtype=float)
        if rows.shape[1] < 2:
            raise ValidationError(f"{path}: need at least one coordinate and a weight column", field=str(path))
        return canonicalize(DiscreteMeasure(rows[:, :-1], rows[:, -1]))
    return measure_from_dict(_read_json(path))


def _read_json(path: Path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})", field=str(path)) from None


def plan_from_dict(d: dict, source: DiscreteMeasure, target: DiscreteMeasure, cost_name: str = "sqeuclidean") -> TransportPlan:
    entries = np.asarray(d["entries"], dtype=float).reshape(-1, 3)
    phi = d.get("phi")
    psi = d.get("psi")
    return TransportPlan(
        source,
        target,
        entries[:, 0].astype(np.int64),
        entries[:, 1].astype(np.int64),
        entries[:, 2],
        float(d["value"]),
        None if phi is None else np.asarray(phi, dtype=float),
        None if psi is None else np.asarray(psi, dtype=float),
        cost_name,
    )


def variation_from_dict(d: dict, base: Optional[Path] = None):
    from .tangent import variation

    anchor = d["anchor"]
    anchor = load_measure(_resolve(anchor, base)) if isinstance(anchor, str) else measure_from_dict(anchor)
    arrows = [(int(a["k"]), a["v"], float(a["mass"])) for a in d["arrows"]]
    return variation(anchor, arrows)


def _resolve(ref: str, base: Optional[Path]) -> Path:
    p = Path(ref)
    if not p.is_absolute() and base is not None:
        p = base / p
    return p


def _measure_ref(value, base: Optional[Path]) -> DiscreteMeasure:
    if isinstance(value, str):
        return load_measure(_resolve(value, base))
    return measure_from_dict(value)


def _points_ref(value, base: Optional[Path]) -> np.ndarray:
    if isinstance(value, str):
        return load_points(_resolve(value, base))
    arr = np.asarray(value, dtype=float)
    return arr.reshape(-1, 1) if arr.ndim == 1 else arr


def _potential(value):
    from . import potentials

    if isinstance(value, str):
        return potentials.from_catalog(value)
    return potentials.from_dict(value)


def functional_from_dict(d: dict, base: Optional[Path] = None):
    """Parse a functional description; ``base`` is the directory for relative references."""
    from . import functionals as F
    from .transport import cost_from_name

    if not isinstance(d, dict) or "type" not in d:
        raise ValidationError("functional JSON needs a 'type' field", field="J")
    kind = d["type"]
    try:
        if kind == "expected_value":
            return F.ExpectedValue(_potential(d["V"]))
        if kind == "variance":
            return F.Variance(_potential(d["V"]))
        if kind == "mean_variance":
            return F.MeanVariance(d["theta"], float(d.get("rho", 0.0)), int(d.get("sign", -1)))
        if kind == "w2sq":
            return F.W2Squared(_measure_ref(d["ref"], base), float(d.get("scale", 0.5)))
        if kind == "ot":
            return F.OTDiscrepancy(_measure_ref(d["ref"], base), cost_from_name(d.get("cost", "sqeuclidean")))
        if kind == "interaction":
            return F.Interaction(_potential(d["W"]), float(d.get("scale", 0.5)))
        if kind == "gmm_nll":
            return F.GaussianMixtureNLL(_points_ref(d["data"], base))
        if kind == "linear_combination":
            return F.LinearCombination(
                [(float(t["coef"]), functional_from_dict(t["J"], base)) for t in d["terms"]]
            )
    except KeyError as exc:
        raise ValidationError(f"functional {kind!r} is missing field {exc.args[0]!r}", field=exc.args[0]) from None
    raise ValidationError(f"unknown functional type {kind!r}", field="type")


def constraint_from_dict(d: dict, base: Optional[Path] = None):
    from . import constraints as C

    if not isinstance(d, dict) or "type" not in d:
        raise ValidationError("constraint JSON needs a 'type' field", field="C")
    kind = d["type"]
    try:
        if kind == "full":
            return C.FullSpace()
        if kind == "w2ball":
            return C.WassersteinBall(_measure_ref(d["ref"], base), float(d["eps"]))
        if kind == "moment2":
            return C.SecondMomentBall(float(d["eps"]))
        if kind == "sublevel":
            return C.Sublevel(functional_from_dict(d["J"], base), float(d["c"]))
    except KeyError as exc:
        raise ValidationError(f"constraint {kind!r} is missing field {exc.args[0]!r}", field=exc.args[0]) from None
    raise ValidationError(f"unknown constraint type {kind!r}", field="type")


def load_functional(path: PathLike):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}", field=str(path))
    return functional_from_dict(_read_json(path), path.parent)


def load_constraint(path: PathLike):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}", field=str(path))
    return constraint_from_dict(_read_json(path), path.parent)


def load_variation(path: PathLike):
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}", field=str(path))
    return variation_from_dict(_read_json(path), path.parent)


def write_points_csv(path: PathLike, points: np.ndarray, weights: np.ndarray, extra: Optional[dict] = None) -> None:
    """Support-point table: x1..xd, weight, then any extra per-point columns."""
    points = np.atleast_2d(points)
    extra = extra or {}
    header = [f"x{i + 1}" for i in range(points.shape[1])] + ["weight"] + list(extra)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(points.shape[0]):
            row = [repr(float(x)) for x in points[k]] + [repr(float(weights[k]))]
            row += [repr(float(np.asarray(col)[k])) for col in extra.values()]
            w.writerow(row)
