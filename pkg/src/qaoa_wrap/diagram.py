"""Performance diagrams over the (delta, p) plane: sweeps, contours, export, heatmaps."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .engine import Schedule, evolve, ramp_schedule, sampled_schedule
from .errors import BudgetError, ValidationError
from .model import HamiltonianPair

DEFAULT_BUDGET = 10**10
METRICS = ("ground_overlap_sq", "expected_cost", "log_infidelity", "excited_overlap_sq")
# log_infidelity is capped so that perfect overlap still gives a finite cell
_MISS_FLOOR = 1e-300

# Colormap anchors (value fraction -> RGB). Luminance increases strictly from
# dark blue through teal and green to yellow, so the map is monotone.
COLORMAP_ANCHORS = (
    (0.00, (48, 18, 59)),
    (0.25, (38, 93, 160)),
    (0.50, (32, 151, 140)),
    (0.75, (122, 200, 80)),
    (1.00, (253, 231, 37)),
)
NAN_COLOR = (128, 128, 128)


def _lut() -> np.ndarray:
    xs = np.array([a for a, _ in COLORMAP_ANCHORS])
    rgb = np.array([c for _, c in COLORMAP_ANCHORS], dtype=float)
    t = np.linspace(0.0, 1.0, 256)
    return np.stack([np.interp(t, xs, rgb[:, i]) for i in range(3)], axis=1).round().astype(np.uint8)


def log_p_axis(p_min: int, p_max: int, n: int) -> np.ndarray:
    """Log-uniform integer p values; rounding duplicates are removed.

    Denser log samples are drawn until ``n`` distinct integers remain (or all
    integers in range are used).
    """
    if p_min < 1 or p_max < p_min or n < 1:
        raise ValidationError("need 1 <= p_min <= p_max and n >= 1")
    n = min(n, int(p_max - p_min + 1))
    m = n
    while True:
        axis = np.unique(np.round(np.geomspace(p_min, p_max, m)).astype(int))
        if axis.size >= n:
            return axis
        m += 1


def parse_metric(metric: str):
    """'excited_overlap_sq:7' or 'excited_overlap_sq(7)' -> (name, 7)."""
    name, index = metric, None
    for sep in (":", "("):
        if sep in metric:
            name, rest = metric.split(sep, 1)
            index = int(rest.rstrip(")"))
    if name not in METRICS:
        raise ValidationError(f"unknown metric {metric!r}; choose from {METRICS}")
    if name == "excited_overlap_sq" and index is None:
        raise ValidationError("excited_overlap_sq needs an eigenstate index, e.g. excited_overlap_sq:7")
    return name, index


@dataclass
class DiagramGrid:
    delta_axis: np.ndarray
    p_axis: np.ndarray
    metric: str
    values: np.ndarray  # (len(delta_axis), len(p_axis))
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.delta_axis = np.asarray(self.delta_axis, dtype=float)
        self.p_axis = np.asarray(self.p_axis, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.delta_axis.size, self.p_axis.size):
            raise ValidationError(
                f"values shape {self.values.shape} does not match axes ({self.delta_axis.size}, {self.p_axis.size})")

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.delta_axis, self.p_axis.astype(np.int64), self.values):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(self.metric.encode())
        return h.hexdigest()[:12]

    def filename(self, suffix: str = "csv") -> str:
        label = str(self.metadata.get("label", "pair")).replace(" ", "-").replace("/", "-")
        metric = self.metric.replace(":", "-").replace("(", "-").replace(")", "")
        return f"{label}_{metric}_{self.digest()}.{suffix}"

    def to_json(self) -> dict:
        return {
            "metric": self.metric,
            "delta_axis": self.delta_axis.tolist(),
            "p_axis": self.p_axis.tolist(),
            "values": self.values.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DiagramGrid":
        try:
            return cls(obj["delta_axis"], obj["p_axis"], obj["metric"], obj["values"], obj.get("metadata", {}))
        except KeyError as exc:
            raise ValidationError(f"diagram JSON missing field {exc}") from None


def _cell_value(pair, schedule, name, index, ground_idx):
    res = evolve(pair, schedule, per_eigenstate=name == "excited_overlap_sq")
    if name == "ground_overlap_sq":
        return res.ground_overlap_sq
    if name == "expected_cost":
        return res.expected_cost
    if name == "log_infidelity":
        return -math.log(max(abs(1.0 - res.ground_overlap_sq), _MISS_FLOOR))
    return float(res.per_eigenstate_overlap_sq[index])


def sweep(pair: HamiltonianPair, delta_axis, p_axis, metric: str = "ground_overlap_sq",
          schedule="ramp", budget: float = DEFAULT_BUDGET, seed=None) -> DiagramGrid:
    """Evaluate ``metric`` on every (delta, p) cell.

    ``schedule`` is "ramp" or a pair of functions (gamma_fn, beta_fn) of
    (f, delta); each cell is an independent evolution.
    """
    delta_axis = np.asarray(delta_axis, dtype=float).ravel()
    p_axis = np.asarray(p_axis).ravel()
    if delta_axis.size == 0 or p_axis.size == 0:
        raise ValidationError("diagram axes must be nonempty")
    if np.any(p_axis < 0) or np.any(p_axis != np.round(p_axis)):
        raise ValidationError("p axis must hold non-negative integers")
    p_axis = p_axis.astype(int)
    name, index = parse_metric(metric)
    if index is not None and not 0 <= index < pair.dim:
        raise ValidationError(f"eigenstate index {index} out of range for dimension {pair.dim}")
    work = float(p_axis.max()) * pair.dim**2
    if work > budget:
        raise BudgetError(f"max p * dim^2 = {work:.3g} exceeds budget {budget:.3g}")
    ground_idx = pair.cost_ground_indices()
    values = np.empty((delta_axis.size, p_axis.size))
    for i, d in enumerate(delta_axis):
        for j, p in enumerate(p_axis):
            if schedule == "ramp":
                sch = ramp_schedule(float(d), int(p))
            elif isinstance(schedule, Schedule):
                raise ValidationError("a fixed Schedule cannot be swept; pass angle functions")
            else:
                gfn, bfn = schedule
                sch = sampled_schedule(lambda f, d=d: gfn(f, d), lambda f, d=d: bfn(f, d), int(p))
            values[i, j] = _cell_value(pair, sch, name, index, ground_idx)
    meta = {
        "label": pair.label,
        "schedule": "ramp" if schedule == "ramp" else "sampled",
        "seed": seed,
        "version": __version__,
    }
    return DiagramGrid(delta_axis, p_axis, metric, values, meta)


# ---------------------------------------------------------------------------
# contours


@dataclass(frozen=True)
class Polyline:
    points: np.ndarray  # (n, 2) columns delta, p
    closed: bool
    index_points: np.ndarray  # fractional (row, col) positions in the grid


def _axis_interp(axis: np.ndarray, pos: np.ndarray) -> np.ndarray:
    return np.interp(pos, np.arange(axis.size), axis.astype(float))


def contour(grid: DiagramGrid, level: float) -> list:
    """Level set of the grid by marching squares with linear interpolation."""
    from skimage.measure import find_contours

    vals = grid.values
    if vals.shape[0] < 2 or vals.shape[1] < 2:
        return []
    out = []
    for c in find_contours(vals, level):
        closed = bool(np.allclose(c[0], c[-1]))
        pts = np.column_stack([_axis_interp(grid.delta_axis, c[:, 0]), _axis_interp(grid.p_axis, c[:, 1])])
        out.append(Polyline(pts, closed, c))
    return out


# ---------------------------------------------------------------------------
# export


def export_csv(grid: DiagramGrid, path) -> Path:
    """Write delta,p,value rows plus a JSON sidecar with axes and metadata."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "p", "value"])
        for i, d in enumerate(grid.delta_axis):
            for j, p in enumerate(grid.p_axis):
                w.writerow([repr(float(d)), int(p), repr(float(grid.values[i, j]))])
    side = {"metric": grid.metric, "metadata": grid.metadata, "shape": list(grid.values.shape)}
    path.with_suffix(".meta.json").write_text(json.dumps(side, indent=2, sort_keys=True))
    return path


def parse_csv(path) -> DiagramGrid:
    path = Path(path)
    rows = []
    with path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["delta", "p", "value"]:
            raise ValidationError(f"{path}: expected header delta,p,value")
        for row in reader:
            if row:
                rows.append((float(row[0]), int(row[1]), float(row[2])))
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    deltas = list(dict.fromkeys(r[0] for r in rows))
    ps = list(dict.fromkeys(r[1] for r in rows))
    if len(rows) != len(deltas) * len(ps):
        raise ValidationError(f"{path}: rows do not form a full grid")
    di = {d: i for i, d in enumerate(deltas)}
    pj = {p: j for j, p in enumerate(ps)}
    values = np.full((len(deltas), len(ps)), np.nan)
    for d, p, v in rows:
        values[di[d], pj[p]] = v
    side = path.with_suffix(".meta.json")
    metric, meta = "value", {}
    if side.exists():
        obj = json.loads(side.read_text())
        metric, meta = obj.get("metric", metric), obj.get("metadata", {})
    return DiagramGrid(deltas, ps, metric, values, meta)


def export_json(grid: DiagramGrid, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(grid.to_json(), indent=2))
    return path


def parse_json(path) -> DiagramGrid:
    return DiagramGrid.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# heatmap


def rasterize(grid: DiagramGrid, scale: str = "linear", cell: int = 4, vmin=None, vmax=None):
    """RGB image array with delta along x and p increasing upward."""
    if scale not in ("linear", "log"):
        raise ValidationError("scale must be 'linear' or 'log'")
    if cell < 1:
        raise ValidationError("cell size must be at least 1 pixel")
    v = grid.values.astype(float).T[::-1]  # rows: p descending, cols: delta
    if scale == "log":
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(v > 0, np.log10(v), np.nan)
    finite = v[np.isfinite(v)]
    lo = float(vmin if vmin is not None else (finite.min() if finite.size else 0.0))
    hi = float(vmax if vmax is not None else (finite.max() if finite.size else 1.0))
    span = hi - lo if hi > lo else 1.0
    frac = np.clip((v - lo) / span, 0.0, 1.0)
    idx = np.where(np.isfinite(frac), np.round(frac * 255), 0).astype(np.uint8)
    img = _lut()[idx]
    img[~np.isfinite(v)] = NAN_COLOR
    img = np.repeat(np.repeat(img, cell, axis=0), cell, axis=1)
    return img, (lo, hi)


def render_heatmap(grid: DiagramGrid, png_path, scale: str = "linear", cell: int = 4) -> dict:
    """Write a PNG heatmap and a sidecar JSON with axis ticks and the colormap."""
    from PIL import Image

    img, (lo, hi) = rasterize(grid, scale, cell)
    png_path = Path(png_path)
    Image.fromarray(img, mode="RGB").save(png_path)
    side = {
        "metric": grid.metric,
        "scale": scale,
        "value_range": [lo, hi],
        "cell_pixels": cell,
        "x_axis": {"name": "delta", "ticks": grid.delta_axis.tolist()},
        "y_axis": {"name": "p", "ticks": grid.p_axis.tolist(), "direction": "up"},
        "colormap_anchors": [[a, list(c)] for a, c in COLORMAP_ANCHORS],
        "nan_color": list(NAN_COLOR),
        "buffer_sha256": hashlib.sha256(img.tobytes()).hexdigest(),
        "metadata": grid.metadata,
    }
    png_path.with_suffix(".json").write_text(json.dumps(side, indent=2))
    return side
