"""Eigenvalue and eigenvector flow of the QAOA unitary over the (f, delta) plane.

Curves are tracked by matching eigenvectors between neighbouring samples.
When two tracked phases pass through each other between samples, the local
minimum distance between them decides whether this was a true crossing
(labels keep following the diabatic states) or an avoided crossing too
narrow for the sampling (labels are swapped so they follow the adiabatic
branch).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.linalg import schur
from scipy.optimize import linear_sum_assignment

from .engine import qaoa_unitaries, qaoa_unitary
from .errors import InapplicableError, RefinementError, ValidationError
from .model import HamiltonianPair

log = logging.getLogger(__name__)

TAU_DEG = 1e-9
TAU_ISO = 1e-12
MATCH_MIN = 0.9
MAX_REFINE = 12
MAX_PHASE_STEP = math.pi / 4
ASSIGN_MAX_DIM = 64
TWO_PI = 2.0 * math.pi
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def wrap_phase(x):
    """Map angles to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi
    if np.ndim(y) == 0:
        return math.pi if y == -math.pi else float(y)
    y[y == -math.pi] = math.pi
    return y


def phases(lam) -> np.ndarray:
    """theta = -arg(lambda) in (-pi, pi]."""
    th = -np.angle(lam)
    if np.ndim(th) == 0:
        return math.pi if th == -math.pi else float(th)
    th[th == -math.pi] = math.pi
    return th


def golden_minimize(fn, a: float, b: float, tol: float = 0.0, maxiter: int = 200):
    """Golden-section search on [a, b]; stops at floating-point resolution."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(maxiter):
        if abs(b - a) <= max(tol, 4 * np.finfo(float).eps * max(1.0, abs(a), abs(b))):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fn(d)
    return (c, fc) if fc < fd else (d, fd)


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class ParameterPath:
    """A path through (f, delta) space sampled uniformly in arclength.

    ``kind`` is ``polyline`` (piecewise linear through ``vertices``) or
    ``arc`` (circular arc described by ``arc`` = (f0, d0, radius, phi0, phi1)).
    """

    vertices: tuple = ()
    samples: int = 201
    closed: bool = False
    kind: str = "polyline"
    arc: tuple = ()

    def __post_init__(self):
        if self.samples < 2:
            raise ValidationError("a path needs at least 2 samples")
        if self.kind == "polyline":
            verts = tuple((float(f), float(d)) for f, d in self.vertices)
            if len(verts) < 2:
                raise ValidationError("a polyline path needs at least 2 vertices")
            if self.closed and verts[0] != verts[-1]:
                verts = verts + (verts[0],)
            object.__setattr__(self, "vertices", verts)
            for f, d in verts:
                if not (-0.1 - 1e-12 <= f <= 1.1 + 1e-12) or d < 0:
                    raise ValidationError(f"path vertex ({f}, {d}) outside f in [-0.1, 1.1], delta >= 0")

    @classmethod
    def fixed_delta(cls, delta: float, samples: int = 201, f0: float = 0.0, f1: float = 1.0):
        return cls(((f0, delta), (f1, delta)), samples)

    @classmethod
    def polyline(cls, vertices, samples: int = 201, closed: bool = False):
        return cls(tuple(vertices), samples, closed)

    @classmethod
    def semicircle(cls, edge: int, delta_star: float, radius: float, samples: int = 201):
        """Half circle of ``radius`` around (edge, delta_star) lying inside f in [0, 1].

        It starts below the centre (delta_star - radius) and ends above it.
        """
        return cls(samples=samples, kind="arc", arc=(float(edge), float(delta_star), float(radius), 0.0, math.pi))

    def point(self, t):
        """(f, delta) at arclength fraction t in [0, 1]."""
        t = np.asarray(t, dtype=float)
        if self.kind == "arc":
            edge, d0, r, a0, a1 = self.arc
            phi = a0 + t * (a1 - a0)
            sign = -1.0 if edge >= 0.5 else 1.0
            return edge + sign * r * np.sin(phi), d0 - r * np.cos(phi)
        verts = np.asarray(self.vertices)
        seg = np.hypot(*np.diff(verts, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        s = t * cum[-1]
        f = np.interp(s, cum, verts[:, 0])
        d = np.interp(s, cum, verts[:, 1])
        return f, d

    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.samples)


# ---------------------------------------------------------------------------
# eigen solver and matching


def unitary_eig(u: np.ndarray):
    """Eigenvalues and orthonormal eigenvectors of a unitary via complex Schur form."""
    tri, vecs = schur(u, output="complex", check_finite=False)
    lam = np.diag(tri).copy()
    return lam / np.abs(lam), vecs


def _eig_at(pair, path, t):
    f, d = path.point(t)
    return unitary_eig(qaoa_unitary(pair, float(f), float(d)))


def _clusters(lam: np.ndarray, tol: float):
    """Groups of indices whose eigenvalues chain together within ``tol`` chordal distance."""
    d = lam.size
    order = np.argsort(phases(lam))
    if d < 2:
        return []
    ring = lam[order]
    close = np.abs(ring - np.append(ring[1:], ring[0])) < tol
    if not close.any():
        return []
    root = list(range(d))

    def find(i):
        while root[i] != i:
            root[i] = root[root[i]]
            i = root[i]
        return i

    for k in np.flatnonzero(close):
        root[find(int(order[k]))] = find(int(order[(k + 1) % d]))
    groups = {}
    for i in range(d):
        groups.setdefault(find(i), []).append(i)
    return [g for g in groups.values() if len(g) > 1]


def _align_clusters(lam, vecs, reference, tol):
    """Rotate vectors inside degenerate clusters to best match ``reference`` columns."""
    vecs = vecs.copy()
    for group in _clusters(lam, tol):
        sub = vecs[:, group]
        weight = np.sum(np.abs(sub.conj().T @ reference) ** 2, axis=0)
        pick = np.argsort(-weight, kind="stable")[: len(group)]
        proj = sub @ (sub.conj().T @ reference[:, np.sort(pick)])
        u, _, vh = np.linalg.svd(proj, full_matrices=False)
        vecs[:, group] = u @ vh
    return vecs


def _assign(ov: np.ndarray) -> np.ndarray:
    """perm[j] = new column matched to old label j, maximizing |overlap|^2."""
    d = ov.shape[0]
    if d <= ASSIGN_MAX_DIM:
        _, cols = linear_sum_assignment(-ov)
        return cols
    perm = np.full(d, -1)
    used = np.zeros(d, dtype=bool)
    flat = np.argsort(-ov, axis=None, kind="stable")
    for idx in flat:
        i, j = divmod(int(idx), d)
        if perm[i] < 0 and not used[j]:
            perm[i] = j
            used[j] = True
    return perm


@dataclass(frozen=True)
class Crossing:
    t: float
    f: float
    delta: float
    labels: tuple
    gap: float
    kind: str  # "crossing" (labels kept) or "avoided" (labels swapped)


@dataclass
class SpectralFlow:
    t: np.ndarray
    f: np.ndarray
    delta: np.ndarray
    lam: np.ndarray
    theta: np.ndarray
    unwound: np.ndarray
    order: np.ndarray
    vectors: np.ndarray | None
    min_overlap: np.ndarray
    crossings: list = field(default_factory=list)
    refinements: int = 0
    warnings: list = field(default_factory=list)
    start_vectors: np.ndarray | None = None
    end_vectors: np.ndarray | None = None

    def to_csv(self, path) -> None:
        d = self.theta.shape[1]
        head = ["t", "f", "delta"] + [f"theta_{j + 1}" for j in range(d)] + [f"label_{j + 1}" for j in range(d)]
        rows = np.column_stack([self.t, self.f, self.delta, self.theta, self.order + 1])
        with open(path, "w") as fh:
            fh.write(",".join(head) + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row[: 3 + d]))
                fh.write("," + ",".join(str(int(v)) for v in row[3 + d:]) + "\n")


class _FlowBuilder:
    def __init__(self, pair, path, strict, tau_deg, keep_vectors):
        self.pair, self.path = pair, path
        self.strict, self.tau_deg, self.keep = strict, tau_deg, keep_vectors
        self.t, self.lam, self.th, self.vecs, self.order, self.min_ov = [], [], [], [], [], []
        self.crossings, self.warnings = [], []
        self.refinements = 0
        self.start_vecs = None
        self._diff_cache = (-1, None)

    def run(self, t_grid):
        lam0, v0 = _eig_at(self.pair, self.path, t_grid[0])
        if _clusters(lam0, self.tau_deg):
            probe = t_grid[0] + 1e-4 * (t_grid[1] - t_grid[0])
            _, vp = _eig_at(self.pair, self.path, probe)
            v0 = _align_clusters(lam0, v0, vp, self.tau_deg)
        self._push(t_grid[0], lam0, v0, np.arange(lam0.size), 1.0)
        # build grid unitaries in batches; refinement points are computed on demand
        batch = max(1, 2**18 // (lam0.size * lam0.size))
        for start in range(1, len(t_grid), batch):
            ts = t_grid[start:start + batch]
            f, d = self.path.point(ts)
            mats = qaoa_unitaries(self.pair, f, d)
            for tb, u in zip(ts, mats):
                self._advance(tb, unitary_eig(u), 0)

    def _push(self, t, lam, vecs, order, ov, th=None):
        if self.start_vecs is None:
            self.start_vecs = vecs
        self.t.append(float(t))
        self.lam.append(lam)
        self.th.append(phases(lam) if th is None else th)
        self.vecs.append(vecs)
        self.order.append(order)
        self.min_ov.append(ov)
        if not self.keep and len(self.vecs) > 2:
            self.vecs[-3] = None

    def _match(self, raw):
        prev = self.vecs[-1]
        lam, vecs = raw
        vecs = _align_clusters(lam, vecs, prev, self.tau_deg)
        ov = np.abs(prev.conj().T @ vecs) ** 2
        perm = _assign(ov)
        lam, vecs = lam[perm], vecs[:, perm]
        inner = np.einsum("ij,ij->j", prev.conj(), vecs)
        vecs = vecs * np.exp(-1j * np.angle(inner))[None, :]
        min_ov = float(np.sqrt(ov[np.arange(ov.shape[0]), perm].min()))
        th = phases(lam)
        step = np.abs(wrap_phase(th - self.th[-1])).max()
        return lam, vecs, perm, min_ov, step, th

    def _advance(self, tb, raw, depth):
        ta = self.t[-1]
        lam, vecs, perm, min_ov, step, th = self._match(raw)
        if (min_ov < MATCH_MIN or step > MAX_PHASE_STEP) and depth < MAX_REFINE:
            self.refinements += 1
            tm = 0.5 * (ta + tb)
            self._advance(tm, _eig_at(self.pair, self.path, tm), depth + 1)
            self._advance(tb, raw, depth + 1)
            return
        if min_ov < MATCH_MIN:
            f, d = self.path.point(0.5 * (ta + tb))
            msg = f"eigenvector matching unresolved near f={float(f):.12g}, delta={float(d):.12g} (overlap {min_ov:.3f})"
            if self.strict:
                raise RefinementError(msg, location=(float(f), float(d)))
            self.warnings.append(msg)
        lam, vecs, th = self._resolve_crossings(ta, tb, lam, vecs, th)
        self._push(tb, lam, vecs, perm, min_ov, th)

    @staticmethod
    @lru_cache(maxsize=None)
    def _upper(d):
        return np.triu(np.ones((d, d), dtype=bool), 1)

    def _resolve_crossings(self, ta, tb, lam, vecs, th1):
        prev_vecs = self.vecs[-1]
        d0 = self._pair_diff(len(self.th) - 1)
        handled = set()
        for _ in range(lam.size * lam.size):
            d1 = wrap_phase(th1[:, None] - th1[None, :])
            cand = (np.sign(d0) * np.sign(d1) < 0) & (np.abs(d0) + np.abs(d1) < math.pi)
            cand &= self._upper(lam.size)
            pairs = [(int(a), int(b)) for a, b in zip(*np.nonzero(cand)) if (int(a), int(b)) not in handled]
            if not pairs:
                break
            a, b = pairs[0]
            handled.add((a, b))
            span = np.column_stack([prev_vecs[:, [a, b]], vecs[:, [a, b]]])
            gap, tmin = local_pair_gap(self.pair, self.path, ta, tb, span)
            f, d = self.path.point(tmin)
            if gap > self.tau_deg:
                lam = lam.copy()
                vecs = vecs.copy()
                th1 = th1.copy()
                lam[[a, b]] = lam[[b, a]]
                th1[[a, b]] = th1[[b, a]]
                vecs[:, [a, b]] = vecs[:, [b, a]]
                kind = "avoided"
            else:
                kind = "crossing"
            self.crossings.append(Crossing(float(tmin), float(f), float(d), (a, b), float(gap), kind))
        else:
            d1 = None
        self._diff_cache = (len(self.th), d1)
        return lam, vecs, th1

    def _pair_diff(self, i):
        """Pairwise wrapped phase differences at stored sample i."""
        key, val = self._diff_cache
        if key == i and val is not None:
            return val
        th = self.th[i]
        return wrap_phase(th[:, None] - th[None, :])


def local_pair_gap(pair, path, ta, tb, span, scan: int = 9):
    """Minimum distance between the two eigenvalues living in ``span`` over [ta, tb]."""
    q, r = np.linalg.qr(span)
    keep = np.abs(np.diag(r)) > 1e-8
    q = q[:, keep]

    def dist(t):
        lam, vecs = _eig_at(pair, path, t)
        w = np.sum(np.abs(q.conj().T @ vecs) ** 2, axis=0)
        i, j = np.argsort(-w, kind="stable")[:2]
        return float(abs(lam[i] - lam[j]))

    ts = np.linspace(ta, tb, scan)
    vals = [dist(t) for t in ts]
    k = int(np.argmin(vals))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, scan - 1)]
    t, g = golden_minimize(dist, lo, hi)
    if vals[k] < g:
        t, g = ts[k], vals[k]
    return g, t


def spectral_flow(pair: HamiltonianPair, path: ParameterPath, strict: bool = True,
                  tau_deg: float = TAU_DEG, keep_vectors: bool = False, offsets=None) -> SpectralFlow:
    """Track the eigen-curves of the QAOA unitary along ``path``.

    ``offsets`` optionally sets the starting value of the unwound phases
    (per label); by default they start at the wrapped phases.
    """
    builder = _FlowBuilder(pair, path, strict, tau_deg, keep_vectors)
    builder.run(path.grid())
    t = np.array(builder.t)
    f, d = path.point(t)
    lam = np.array(builder.lam)
    theta = phases(lam)
    steps = wrap_phase(np.diff(theta, axis=0))
    start = theta[0] if offsets is None else np.asarray(offsets, dtype=float)
    unwound = np.vstack([start, start + np.cumsum(steps, axis=0)])
    vectors = np.array(builder.vecs) if keep_vectors else None
    return SpectralFlow(
        t=t, f=np.asarray(f), delta=np.asarray(d), lam=lam, theta=theta, unwound=unwound,
        order=np.array(builder.order), vectors=vectors, min_overlap=np.array(builder.min_ov),
        crossings=builder.crossings, refinements=builder.refinements, warnings=builder.warnings,
        start_vectors=builder.start_vecs,
        end_vectors=builder.vecs[-1],
    )


# ---------------------------------------------------------------------------
# derived flows


@dataclass(frozen=True)
class GeneratorCurves:
    f: np.ndarray
    qaoa: np.ndarray  # continuous eigenvalues of the QAOA generator, one column per curve
    inst: np.ndarray  # eigenvalues of (1-f) H_mix + f H_cost, ascending
    mixer_index: np.ndarray  # mixer eigenstate each curve starts from


def unwrap_generator_curves(pair: HamiltonianPair, delta: float, samples: int = 201, strict: bool = True) -> GeneratorCurves:
    """Continuous eigenvalue curves of the QAOA generator at fixed delta."""
    if delta <= 0:
        raise ValidationError("unwrapping needs delta > 0")
    path = ParameterPath.fixed_delta(delta, samples)
    flow = spectral_flow(pair, path, strict=strict, keep_vectors=False)
    em = pair.mixer_eigensystem
    start = flow.start_vectors
    ov = np.abs(em.vectors.conj().T @ start) ** 2
    _, mixer_idx = linear_sum_assignment(-ov.T)
    offsets = delta * em.values[mixer_idx]
    # Shift the starting branch so the first sample matches delta * mixer eigenvalue.
    shift = offsets - flow.theta[0]
    shift = shift - wrap_phase(shift)
    qaoa = (flow.unwound + shift[None, :]) / delta
    f = np.asarray(flow.f)[:, None, None]
    inst = np.linalg.eigvalsh((1 - f) * pair.mixer[None] + f * pair.cost[None])
    return GeneratorCurves(flow.f, qaoa, inst, mixer_idx)


@dataclass(frozen=True)
class Transport:
    final_vector: np.ndarray
    cost_overlaps: np.ndarray
    profile: np.ndarray
    label: int
    flow: SpectralFlow


def transport_eigenvector(pair: HamiltonianPair, path: ParameterPath, start, strict: bool = True) -> Transport:
    """Carry one eigenvector of the QAOA unitary continuously along ``path``.

    ``start`` is a state vector or an integer index into the eigenvectors of
    the unitary at the first path point, sorted by phase.
    """
    flow = spectral_flow(pair, path, strict=strict, keep_vectors=True)
    v0 = flow.vectors[0]
    if np.isscalar(start):
        label = int(np.argsort(flow.theta[0], kind="stable")[int(start)])
    else:
        label = int(np.argmax(np.abs(v0.conj().T @ np.asarray(start, dtype=complex))))
    vc = pair.cost_eigensystem.vectors
    profile = np.abs(np.einsum("ij,tik->tjk", vc.conj(), flow.vectors[:, :, [label]])[..., 0]) ** 2
    final = flow.vectors[-1][:, label].copy()
    return Transport(final, profile[-1], profile, label, flow)


@dataclass(frozen=True)
class ConnectionMap:
    perm: np.ndarray
    ambiguous: tuple
    max_overlap: np.ndarray


def connection_map(pair: HamiltonianPair, delta: float, samples: int = 201, strict: bool = True) -> ConnectionMap:
    """Which cost eigenstate each mixer eigenstate is carried to at fixed delta."""
    flow = spectral_flow(pair, ParameterPath.fixed_delta(delta, samples), strict=strict)
    em, ec = pair.mixer_eigensystem, pair.cost_eigensystem
    start = np.abs(em.vectors.conj().T @ flow.start_vectors) ** 2
    _, label_of_mixer = linear_sum_assignment(-start)
    end = np.abs(ec.vectors.conj().T @ flow.end_vectors) ** 2
    _, cost_of_label = linear_sum_assignment(-end.T)
    perm = cost_of_label[label_of_mixer]
    best = end.T[label_of_mixer, perm]
    ambiguous = tuple(int(i) for i in np.flatnonzero(best < 0.5))
    return ConnectionMap(perm, ambiguous, best)


@dataclass(frozen=True)
class GapMeasurement:
    t: float
    f: float
    delta: float
    gap: float
    phase_gap: float


def _min_pair_distance(lam):
    th = np.sort(phases(lam))
    diffs = np.diff(np.concatenate([th, [th[0] + TWO_PI]]))
    k = int(np.argmin(diffs))
    return 2.0 * math.sin(diffs[k] / 2.0), float(diffs[k])


def min_gap_on_path(pair: HamiltonianPair, path: ParameterPath, states=None, edge_vectors=None) -> GapMeasurement:
    """Smallest eigenvalue distance along a path, refined by golden-section search.

    With ``states`` = (x, y) (indices into the cost eigensystem, or columns of
    ``edge_vectors`` when given) only the two eigenvalues whose eigenvectors
    carry the most weight on those states are compared; otherwise all pairs.
    """
    if states is not None:
        basis = pair.cost_eigensystem.vectors if edge_vectors is None else edge_vectors
        q = basis[:, list(states)]

        def dist(t):
            lam, vecs = _eig_at(pair, path, t)
            w = np.sum(np.abs(q.conj().T @ vecs) ** 2, axis=0)
            i, j = np.argsort(-w, kind="stable")[:2]
            return float(abs(lam[i] - lam[j]))
    else:
        def dist(t):
            f, d = path.point(t)
            lam = np.linalg.eigvals(qaoa_unitary(pair, float(f), float(d)))
            return _min_pair_distance(lam / np.abs(lam))[0]

    ts = path.grid()
    vals = np.array([dist(t) for t in ts])
    k = int(np.argmin(vals))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, ts.size - 1)]
    t, g = golden_minimize(dist, lo, hi)
    if vals[k] <= g:
        t, g = float(ts[k]), float(vals[k])
    if g < 1e-14:
        g = 0.0
    f, d = path.point(t)
    return GapMeasurement(float(t), float(f), float(d), g, 2.0 * math.asin(min(1.0, g / 2.0)))


def degeneracy_map(pair: HamiltonianPair, f_grid, delta_grid) -> np.ndarray:
    """Minimum chordal distance between eigenvalues for each (delta, f) cell.

    Rows follow ``delta_grid`` and columns follow ``f_grid``.
    """
    f_grid = np.asarray(f_grid, dtype=float)
    delta_grid = np.asarray(delta_grid, dtype=float)
    if f_grid.size > 2000 or delta_grid.size > 2000:
        raise ValidationError("degeneracy grids are limited to 2000 x 2000")
    out = np.empty((delta_grid.size, f_grid.size))
    for i, d in enumerate(delta_grid):
        lam = np.linalg.eigvals(qaoa_unitaries(pair, f_grid, d))
        th = np.sort(phases(lam), axis=1)
        gaps = np.diff(np.concatenate([th, th[:, :1] + TWO_PI], axis=1), axis=1)
        out[i] = 2.0 * np.sin(gaps.min(axis=1) / 2.0)
    return out


def refine_degeneracy(pair: HamiltonianPair, f: float, delta: float, half_width: float,
                      levels: int = 8, points: int = 9):
    """Zoom into the best cell around (f, delta); returns per-level minima and the best point."""
    best_f, best_d = f, delta
    best = float(degeneracy_map(pair, [f], [delta])[0, 0])
    history = [best]
    w = half_width
    for _ in range(levels):
        fs = best_f + np.linspace(-w, w, points)
        ds = np.clip(best_d + np.linspace(-w, w, points), 0.0, None)
        grid = degeneracy_map(pair, fs, ds)
        i, j = np.unravel_index(int(np.argmin(grid)), grid.shape)
        if grid[i, j] <= best:
            best, best_f, best_d = float(grid[i, j]), float(fs[j]), float(ds[i])
        history.append(best)
        w *= 2.0 / (points - 1)
    return np.array(history), (best_f, best_d)


# ---------------------------------------------------------------------------
# wrap-around events


@dataclass(frozen=True)
class WrapEvent:
    """Two eigenvalues of an edge unitary meeting on the unit circle.

    ``x`` and ``y`` index clusters of the edge Hamiltonian's sorted
    eigenvalues (cost at edge 1, mixer at edge 0); ``x`` is the lower one.
    """

    delta_star: float
    edge: int
    x: int
    y: int
    energy_x: float
    energy_y: float
    diag_x: float
    diag_y: float
    winding: int
    mult_x: int = 1
    mult_y: int = 1
    ground: bool = False
    wrap_multiplicity: int = 0
    pushed_out: bool = False
    k: int | None = None
    c_eff: complex | None = None
    gamma: float | None = None
    isolated: bool | None = None
    ring_gap: float | None = None
    flags: tuple = ()

    def to_json(self) -> dict:
        out = {}
        for key, val in self.__dict__.items():
            if isinstance(val, complex):
                val = [val.real, val.imag]
            elif isinstance(val, tuple):
                val = list(val)
            elif isinstance(val, (np.floating, np.integer, np.bool_)):
                val = val.item()
            out[key] = val
        return out


def _energy_clusters(values: np.ndarray, rel_tol: float = 1e-9):
    span = max(float(values[-1] - values[0]), 1e-300)
    groups = [[0]]
    for i in range(1, values.size):
        if values[i] - values[groups[-1][0]] <= rel_tol * span:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def edge_basis(pair: HamiltonianPair, edge: int):
    """(energies, vectors, other Hamiltonian) for the wrap edge f = edge."""
    if edge == 1:
        return pair.cost_eigensystem.values, pair.cost_eigensystem.vectors, pair.mixer
    return pair.mixer_eigensystem.values, pair.mixer_eigensystem.vectors, pair.cost


def wrap_events(pair: HamiltonianPair, delta_max: float, analyze: bool = True, ground_only: bool = False,
                isolation: bool = True) -> list[WrapEvent]:
    """All wrap-around events with delta* <= delta_max on both edges, sorted by delta*."""
    if delta_max <= 0:
        raise ValidationError("delta_max must be positive")
    events = []
    for edge in (1, 0):
        values, vecs, other = edge_basis(pair, edge)
        groups = _energy_clusters(values)
        centers = [float(np.mean(values[g])) for g in groups]
        diag = np.real(np.einsum("ij,ik,kj->j", vecs.conj(), other, vecs))
        for a in range(len(groups)):
            if ground_only and a > 0:
                break
            for b in range(a + 1, len(groups)):
                gap = centers[b] - centers[a]
                m = 1
                while TWO_PI * m / gap <= delta_max * (1 + 1e-12):
                    events.append(WrapEvent(
                        delta_star=TWO_PI * m / gap, edge=edge, x=groups[a][0], y=groups[b][0],
                        energy_x=centers[a], energy_y=centers[b],
                        diag_x=float(np.mean(diag[groups[a]])), diag_y=float(np.mean(diag[groups[b]])),
                        winding=m, mult_x=len(groups[a]), mult_y=len(groups[b]), ground=(a == 0),
                    ))
                    m += 1
    events.sort(key=lambda e: (e.delta_star, -e.edge, e.x, e.y))
    events = [_with_multiplicity(e, events) for e in events]
    if analyze:
        from . import gaps

        events = [gaps.annotate_event(pair, e) for e in events]
        if isolation:
            events = [classify_isolation(pair, e, events) for e in events]
    return events


def _with_multiplicity(event: WrapEvent, events) -> WrapEvent:
    if not event.ground:
        return event
    same = [e for e in events if e.ground and e.edge == event.edge
            and abs(e.delta_star - event.delta_star) <= 1e-12 * event.delta_star]
    wrap_mult = sum(e.mult_y for e in same)
    return replace(event, wrap_multiplicity=wrap_mult, pushed_out=wrap_mult > event.mult_x)


def default_ring_radius(event: WrapEvent, events) -> float:
    others = [abs(e.delta_star - event.delta_star) for e in events
              if e.edge == event.edge and abs(e.delta_star - event.delta_star) > 1e-12 * event.delta_star]
    nearest = min(others) if others else math.inf
    return min(1e-2, nearest / 4.0)


def ring_gap(pair: HamiltonianPair, event: WrapEvent, radius: float, samples: int = 65) -> float:
    """Smallest distance between the wrapping eigenvalues on a half ring around the event."""
    values, vecs, _ = edge_basis(pair, event.edge)
    px = vecs[:, event.x:event.x + event.mult_x]
    py = vecs[:, event.y:event.y + event.mult_y]
    path = ParameterPath.semicircle(event.edge, event.delta_star, radius, samples)

    def dist(t):
        lam, v = _eig_at(pair, path, t)
        wx = np.sum(np.abs(px.conj().T @ v) ** 2, axis=0)
        wy = np.sum(np.abs(py.conj().T @ v) ** 2, axis=0)
        pick = np.argsort(-(wx + wy), kind="stable")[: event.mult_x + event.mult_y]
        # Split by rank: near the gap both vectors are even mixtures.
        pick = sorted(pick, key=lambda i: wy[i] - wx[i])
        xs, ys = pick[: event.mult_x], pick[event.mult_x:]
        return float(np.abs(lam[xs][:, None] - lam[ys][None, :]).min())

    ts = path.grid()
    vals = np.array([dist(t) for t in ts])
    best = float(vals.min())
    for k in np.argsort(vals)[:3]:
        lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, ts.size - 1)]
        _, g = golden_minimize(dist, lo, hi)
        best = min(best, g)
    return best


def is_isolated(pair: HamiltonianPair, event: WrapEvent, radius: float | None = None,
                tau_iso: float = TAU_ISO, events=None) -> bool:
    return bool(classify_isolation(pair, event, events, radius, tau_iso).isolated)


def classify_isolation(pair: HamiltonianPair, event: WrapEvent, events=None, radius: float | None = None,
                       tau_iso: float = TAU_ISO) -> WrapEvent:
    """Ring test for isolation, cross-checked against the effective coupling."""
    if radius is None:
        if events is None:
            events = wrap_events(pair, event.delta_star * 1.5 + 1e-9, analyze=False)
        radius = default_ring_radius(event, events)
    gap = ring_gap(pair, event, radius)
    isolated = gap > tau_iso
    flags = list(event.flags)
    if event.c_eff is not None and "c_eff_unreliable" not in flags:
        coupled = "c_eff_zero" not in flags
        if coupled != isolated:
            flags.append("isolation_mismatch")
            log.warning("ring test and effective coupling disagree for event at delta*=%.12g", event.delta_star)
    return replace(event, isolated=isolated, ring_gap=gap, flags=tuple(flags))


def delta_crit(pair: HamiltonianPair, delta_bound: float | None = None) -> float:
    """Smallest delta* of an isolated wrap-around involving a ground state."""
    if delta_bound is None:
        spans = [np.ptp(pair.cost_eigensystem.values), np.ptp(pair.mixer_eigensystem.values)]
        positive = [s for s in spans if s > 0]
        if not positive:
            raise InapplicableError("both Hamiltonians are multiples of the identity; no wrap-around")
        delta_bound = 8 * TWO_PI / min(positive)
    events = wrap_events(pair, delta_bound, analyze=False, ground_only=True)
    for ev in events:
        if ev.ground and is_isolated(pair, ev, events=events):
            return ev.delta_star
    raise InapplicableError(f"no isolated ground wrap-around below delta={delta_bound:.6g}")
