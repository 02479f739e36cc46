"""Perturbative gap theory for wrap-around events.

Couplings between the two wrapping edge states are built from paths through
the graph of nonzero matrix elements of the other Hamiltonian. Everything
here works from element oracles so structured mixers never need a dense
matrix.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from math import factorial

import numpy as np

from .errors import InapplicableError, ValidationError
from .model import HamiltonianPair, build_transverse_field_mixer, sample_sparse_ising
from .spectral import TWO_PI, WrapEvent, edge_basis

PATH_CAP = 10**6
COT_LIMIT = 1e12
ZERO_RTOL = 1e-12


# ---------------------------------------------------------------------------
# element oracles


class DenseOracle:
    """Matrix elements of a dense Hermitian matrix; tiny entries count as zero."""

    def __init__(self, matrix: np.ndarray, rtol: float = 1e-12):
        self.matrix = np.asarray(matrix, dtype=complex)
        scale = max(float(np.abs(self.matrix).max()), 1e-300)
        off = self.matrix.copy()
        np.fill_diagonal(off, 0)
        self._nz = np.abs(off) > rtol * scale
        self.dim = self.matrix.shape[0]

    def neighbors(self, i: int):
        idx = np.flatnonzero(self._nz[i])
        return idx, self.matrix[i, idx]

    def element(self, i: int, j: int) -> complex:
        return complex(self.matrix[i, j])

    def diagonal(self, i: int) -> float:
        return float(self.matrix[i, i].real)


class XMixerOracle:
    """sum_q (a I - b X_q) on n qubits, in computational order or a relabelled order.

    ``order[j]`` is the computational index of state j when a permutation is given.
    """

    def __init__(self, n: int, a: float, b: float, order=None):
        self.n, self.a, self.b = n, a, b
        self.dim = 2**n
        self.order = None if order is None else np.asarray(order)
        self.inverse = None if order is None else np.argsort(order)

    def _comp(self, i):
        return i if self.order is None else int(self.order[i])

    def _label(self, c):
        return c if self.inverse is None else int(self.inverse[c])

    def neighbors(self, i: int):
        if self.b == 0:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=complex)
        c = self._comp(i)
        idx = np.array([self._label(c ^ (1 << q)) for q in range(self.n)])
        return idx, np.full(self.n, -self.b, dtype=complex)

    def element(self, i: int, j: int) -> complex:
        ci, cj = self._comp(i), self._comp(j)
        if ci == cj:
            return complex(self.n * self.a)
        x = ci ^ cj
        return complex(-self.b) if x and not x & (x - 1) else 0j

    def diagonal(self, i: int) -> float:
        return float(self.n * self.a)


def edge_oracle(pair: HamiltonianPair, edge: int):
    """Energies (sorted) and an element oracle of the other Hamiltonian in that eigenbasis."""
    values, vecs, other = edge_basis(pair, edge)
    if edge == 1 and pair.mixer_spec.kind == "x_mixer" and pair.cost_spec.diagonal() is not None:
        spec = pair.mixer_spec.params
        order = np.argsort(pair.cost_spec.diagonal(), kind="stable")
        return values, XMixerOracle(spec["n"], spec["a"], spec["b"], order)
    return values, DenseOracle(vecs.conj().T @ other @ vecs)


# ---------------------------------------------------------------------------
# coupling paths


@dataclass(frozen=True)
class CouplingPath:
    states: tuple  # x, s_1, ..., s_{k-1}
    product: complex

    @property
    def k(self) -> int:
        return len(self.states)


def _bfs(oracle, source: int, stop: int | None = None, limit: int | None = None):
    dist = {source: 0}
    queue = deque([source])
    while queue:
        s = queue.popleft()
        if stop is not None and stop in dist and dist[s] >= dist[stop]:
            break
        if limit is not None and dist[s] >= limit:
            continue
        idx, _ = oracle.neighbors(s)
        for t in idx:
            t = int(t)
            if t not in dist:
                dist[t] = dist[s] + 1
                queue.append(t)
    return dist


def shortest_path_layers(oracle, x: int, y: int):
    """Layers of the DAG formed by all shortest paths x -> y, or None if uncoupled."""
    if x == y:
        raise ValidationError("coupling needs two distinct states")
    from_x = _bfs(oracle, x, stop=y)
    if y not in from_x:
        return None
    k = from_x[y]
    from_y = _bfs(oracle, y, limit=k)
    layers = [[] for _ in range(k + 1)]
    for s, d in from_x.items():
        if d <= k and from_y.get(s, math.inf) == k - d:
            layers[d].append(s)
    return [sorted(layer) for layer in layers]


def coupling_distance_and_paths(oracle, x: int, y: int, cap: int = PATH_CAP):
    """Shortest coupling distance k and every shortest path from x to y."""
    layers = shortest_path_layers(oracle, x, y)
    if layers is None:
        raise InapplicableError(f"states {x} and {y} are uncoupled")
    k = len(layers) - 1
    nxt = [set(layer) for layer in layers]
    paths = []

    def walk(prefix, product):
        s = prefix[-1]
        depth = len(prefix) - 1
        if depth == k - 1:
            w = oracle.element(s, y)
            if w != 0:
                paths.append(CouplingPath(tuple(prefix), product * w))
                if len(paths) > cap:
                    raise InapplicableError(f"more than {cap} coupling paths")
            return
        idx, vals = oracle.neighbors(s)
        for t, w in sorted(zip(idx.tolist(), vals.tolist())):
            if t in nxt[depth + 1]:
                walk(prefix + [t], product * w)

    walk([x], 1.0 + 0j)
    return k, paths


def q_poly(b) -> complex:
    """Q^n(b_1..b_n) from its recursion with Q^0 = 1."""
    b = [float(v) for v in b]
    n = len(b)
    q = [1.0 + 0j]  # q[r] = Q^r(b_{n-r+1}..b_n)
    for r in range(1, n + 1):
        tail = b[n - r:]
        val = 1.0 / factorial(r + 1)
        for m in range(1, r + 1):
            val -= (1 + 1j * tail[m - 1]) / (2 * factorial(m)) * q[r - m]
        q.append(val)
    return q[n]


def reduced_cot(angle: float) -> float:
    """cot with argument reduction; returns inf when |cot| exceeds the singular limit."""
    r = math.remainder(angle, math.pi)
    s = math.sin(r)
    if s == 0 or abs(math.cos(r) / s) > COT_LIMIT:
        return math.inf
    return math.cos(r) / s


@dataclass(frozen=True)
class Coupling:
    k: int
    c_eff: complex
    scale: float
    n_paths: int
    singular: tuple = ()

    @property
    def is_zero(self) -> bool:
        return abs(self.c_eff) <= ZERO_RTOL * self.scale


def _a_value(energies, s, x, delta_star):
    return reduced_cot(0.5 * delta_star * (energies[s] - energies[x]))


def effective_coupling_paths(energies, oracle, x: int, y: int, delta_star: float, cap: int = PATH_CAP) -> Coupling:
    """Effective coupling by explicit enumeration of every shortest path."""
    k, paths = coupling_distance_and_paths(oracle, x, y, cap)
    total, scale, singular = 0j, 0.0, set()
    for path in paths:
        a = [_a_value(energies, s, x, delta_star) for s in path.states[1:]]
        bad = [s for s, v in zip(path.states[1:], a) if not math.isfinite(v)]
        if bad:
            singular.update(bad)
            continue
        term = path.product * q_poly(a)
        total += term
        scale += abs(term)
    return Coupling(k, total, scale, len(paths), tuple(sorted(singular)))


def effective_coupling_dag(energies, oracle, x: int, y: int, delta_star: float) -> Coupling:
    """Effective coupling by dynamic programming over the shortest-path DAG.

    Uses the Q recursion to fold the path sum layer by layer, so the cost is
    polynomial in the number of DAG nodes rather than the number of paths.
    """
    layers = shortest_path_layers(oracle, x, y)
    if layers is None:
        raise InapplicableError(f"states {x} and {y} are uncoupled")
    k = len(layers) - 1
    pos = [{s: i for i, s in enumerate(layer)} for layer in layers]
    hops = []
    for j in range(k):
        mat = np.zeros((len(layers[j]), len(layers[j + 1])), dtype=complex)
        for s in layers[j]:
            idx, vals = oracle.neighbors(s)
            for t, w in zip(idx.tolist(), vals.tolist()):
                col = pos[j + 1].get(t)
                if col is not None:
                    mat[pos[j][s], col] = w
        hops.append(mat)
    a = [np.array([_a_value(energies, s, x, delta_star) for s in layer]) for layer in layers]
    singular = sorted(s for j in range(1, k) for s, v in zip(layers[j], a[j]) if not np.isfinite(v))
    npaths = np.ones(1)
    for mat in hops:
        npaths = npaths @ (mat != 0)
    # Paths through singular nodes are dropped, as in the enumeration route.
    for j in range(1, k):
        hops[j - 1][:, ~np.isfinite(a[j])] = 0
    coef = [None] + [1 + 1j * np.where(np.isfinite(a[j]), a[j], 0.0) for j in range(1, k)] + [None]
    g = [None] * (k + 1)
    gabs = [None] * (k + 1)
    for j in range(k - 1, -1, -1):
        n_rem = k - 1 - j
        reach = np.eye(len(layers[j]), dtype=complex)
        reach_abs = np.eye(len(layers[j]))
        val = np.zeros(len(layers[j]), dtype=complex)
        val_abs = np.zeros(len(layers[j]))
        for m in range(1, n_rem + 1):
            reach = reach @ hops[j + m - 1]
            reach_abs = reach_abs @ np.abs(hops[j + m - 1])
            val -= reach @ (coef[j + m] * g[j + m]) / (2 * factorial(m))
            val_abs += reach_abs @ (np.abs(coef[j + m]) * gabs[j + m]) / (2 * factorial(m))
        reach = reach @ hops[k - 1]
        reach_abs = reach_abs @ np.abs(hops[k - 1])
        g[j] = val + reach[:, 0] / factorial(n_rem + 1)
        gabs[j] = val_abs + reach_abs[:, 0] / factorial(n_rem + 1)
    return Coupling(k, complex(g[0][0]), float(gabs[0][0]), int(round(float(npaths[0]))), tuple(singular))


def effective_coupling(pair: HamiltonianPair, event: WrapEvent, method: str = "dag") -> Coupling:
    """Effective coupling for a non-degenerate two-state wrap event."""
    if event.mult_x != 1 or event.mult_y != 1:
        raise InapplicableError("effective coupling is only defined for non-degenerate wrap-around")
    energies, oracle = edge_oracle(pair, event.edge)
    if method == "paths":
        return effective_coupling_paths(energies, oracle, event.x, event.y, event.delta_star)
    return effective_coupling_dag(energies, oracle, event.x, event.y, event.delta_star)


def xmixer_couplings(energies: np.ndarray, n: int, x: int, targets, b: float = 1.0, return_scale: bool = False):
    """Effective couplings from x to many targets under the X-mixer, vectorized.

    With the X-mixer, intermediate states of a shortest path are x with a
    subset of the differing bits flipped, and the path sum collapses to a
    recursion over subsets: g(S) = 1 - 1/2 sum_{T > S, T != full} (1 + i a_T) g(T),
    c_eff = (-b)^k g(empty). All targets must share one Hamming distance k.
    Singular cotangents give nan. With ``return_scale`` the same recursion on
    absolute values is returned too, as a size reference for cancellation.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        return np.zeros(0, dtype=complex)
    diff = targets ^ x
    bits = np.array([[q for q in range(n) if (int(v) >> q) & 1] for v in diff])
    k = bits.shape[1]
    full = (1 << k) - 1
    masks = np.arange(1 << k)
    flip = np.zeros((targets.size, masks.size), dtype=np.int64)
    for col in range(k):
        on = ((masks >> col) & 1).astype(bool)
        flip[:, on] ^= (np.int64(1) << bits[:, col])[:, None]
    states = x ^ flip
    delta_star = TWO_PI / np.abs(energies[targets] - energies[x])
    angle = 0.5 * delta_star[:, None] * (energies[states] - energies[x])
    r = np.remainder(angle + 0.5 * math.pi, math.pi) - 0.5 * math.pi
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.cos(r) / np.sin(r)
    a[np.abs(a) > COT_LIMIT] = np.nan
    h = np.zeros_like(a, dtype=complex)
    g = np.zeros_like(a, dtype=complex)
    habs = np.zeros_like(a)
    gabs = np.zeros_like(a)
    popcount = np.array([bin(int(m)).count("1") for m in masks])
    for mask in sorted(masks.tolist(), key=lambda m: -popcount[m]):
        if mask == full:
            continue
        acc = np.zeros(targets.size, dtype=complex)
        acc_abs = np.zeros(targets.size)
        sup = (mask + 1) | mask
        while sup < full:
            acc += h[:, sup]
            acc_abs += habs[:, sup]
            sup = (sup + 1) | mask
        g[:, mask] = 1 - 0.5 * acc
        gabs[:, mask] = 1 + 0.5 * acc_abs
        if mask:
            h[:, mask] = (1 + 1j * a[:, mask]) * g[:, mask]
            habs[:, mask] = np.abs(1 + 1j * a[:, mask]) * gabs[:, mask]
    c = (-b) ** k * g[:, 0]
    if return_scale:
        return c, abs(b) ** k * gabs[:, 0]
    return c


# ---------------------------------------------------------------------------
# event annotation and gap formulas


def annotate_event(pair: HamiltonianPair, event: WrapEvent) -> WrapEvent:
    """Fill k, c_eff and Gamma for an event where the formulas apply."""
    flags = list(event.flags)
    gamma = None
    if event.energy_x != event.energy_y:
        gamma = (event.diag_x - event.diag_y) / (event.energy_x - event.energy_y)
    if event.mult_x != 1 or event.mult_y != 1:
        flags.append("degenerate")
        return replace(event, gamma=gamma, flags=tuple(flags))
    try:
        coupling = effective_coupling(pair, event)
    except InapplicableError:
        flags.append("uncoupled")
        flags.append("c_eff_zero")
        return replace(event, gamma=gamma, c_eff=0j, flags=tuple(flags))
    if coupling.singular:
        flags.append("c_eff_unreliable")
    elif coupling.is_zero:
        flags.append("c_eff_zero")
    return replace(event, k=coupling.k, c_eff=coupling.c_eff, gamma=gamma, flags=tuple(flags))


def _require(event: WrapEvent):
    if event.c_eff is None or event.k is None or event.gamma is None:
        raise InapplicableError("event has no effective coupling (degenerate or uncoupled)")
    if abs(event.gamma - 1.0) < 1e-6:
        raise InapplicableError("Gamma is within 1e-6 of 1; gap formula inapplicable")


@dataclass(frozen=True)
class GapPrediction:
    event: WrapEvent
    delta: float
    gap: float
    epsilon: float
    f_star: float
    regime: str

    def to_json(self) -> dict:
        return {"event": self.event.to_json(), "delta": self.delta, "gap": self.gap,
                "epsilon": self.epsilon, "f_star": self.f_star, "regime": self.regime}


def gap_prediction(event: WrapEvent, delta: float) -> GapPrediction:
    """Lowest-order gap size and location for a distance ``delta`` past the event."""
    _require(event)
    c = abs(event.c_eff)
    gm1 = event.gamma - 1.0
    ds = event.delta_star
    if event.k == 1:
        de = event.energy_x - event.energy_y
        u = delta * gm1 / (gm1**2 + (2 * c / de) ** 2)
        gap = math.sqrt(((u * gm1 - delta) * de) ** 2 + (2 * u * c) ** 2)
        eps = u / ds
        regime = "k=1"
    else:
        gap = 2 * c * abs(delta / gm1) ** event.k
        eps = delta / (ds * gm1)
        regime = "k>=2"
    f_star = 1.0 + eps if event.edge == 1 else -eps
    return GapPrediction(event, float(delta), float(gap), float(eps), float(f_star), regime)


def swap_interval(event: WrapEvent, delta: float, ratio_sq: float) -> float:
    """Width in f over which the swapping eigenvector moves between the two states.

    ``ratio_sq`` is |c_x|^2 / |c_x^0|^2 (pass the raw |c_x|^2 for the
    unnormalized form).
    """
    _require(event)
    if not 0.0 < ratio_sq < 1.0:
        raise ValidationError("overlap ratio must lie strictly between 0 and 1")
    denom = abs((event.energy_x - event.diag_x) - (event.energy_y - event.diag_y))
    if denom == 0:
        raise InapplicableError("energy differences coincide; swap interval undefined")
    big = event.delta_star + delta
    c = math.sqrt(ratio_sq)
    shape = abs(2 * ratio_sq - 1) / (c * math.sqrt(1 - ratio_sq))
    return 2 * abs(event.c_eff) / (big * denom) * shape * abs(delta / (event.gamma - 1.0)) ** event.k


def eigenvector_correction(pair: HamiltonianPair, event: WrapEvent, f_star: float, delta: float | None = None):
    """Estimated weight |c_x^0|^2 of the edge state x in its eigenvector at f_star.

    Returns (value, flagged) where flagged lists states whose sine
    denominator is near zero (those terms are skipped).
    """
    big = event.delta_star + (0.0 if delta is None else delta)
    energies, vecs, other = edge_basis(pair, event.edge)
    row = (vecs[:, event.x].conj() @ other @ vecs)
    toward = f_star if event.edge == 1 else 1.0 - f_star
    total, flagged = 0.0, []
    for j in range(energies.size):
        if j in (event.x, event.y) or abs(row[j]) < 1e-14:
            continue
        s = math.sin(big * toward * (energies[j] - energies[event.x]) / 2)
        if abs(s) < 1e-12:
            flagged.append(j)
            continue
        total += abs(big * (1 - toward) * row[j] / (2 * s)) ** 2
    return 1.0 - total, tuple(flagged)


# ---------------------------------------------------------------------------
# coupling distribution experiment


@dataclass(frozen=True)
class CouplingSample:
    n: int
    seeds: tuple
    log10_ceff: np.ndarray
    zero_count: int
    singular_count: int


def ceff_distribution(n: int, count: int, seed: int = 0, b: float = 0.5) -> CouplingSample:
    """log10 |c_eff| between the ground state and every state n/2 flips away.

    Costs are random sparse Ising instances; the mixer is sum_q (a I - b X_q)
    (a does not enter). The default b = 0.5 matches the 0.5 sum (I - X)
    normalization of the eight-level example. Couplings that vanish by
    cancellation are counted separately.
    """
    if n < 2 or n % 2:
        raise ValidationError("ceff distribution needs an even n >= 2")
    build_transverse_field_mixer(n, 0.0, b)  # validates n
    seeds = tuple(int(s.generate_state(1, dtype=np.uint32)[0]) for s in np.random.SeedSequence(seed).spawn(count))
    idx = np.arange(2**n)
    weight = np.array([bin(i).count("1") for i in idx])
    logs, zeros, singular = [], 0, 0
    for s in seeds:
        energies = sample_sparse_ising(n, s).energies()
        x = int(np.argmin(energies))
        ordered = np.sort(energies)
        if ordered[1] - ordered[0] <= 1e-12 * max(1.0, np.ptp(energies)):
            continue
        targets = idx[weight[idx ^ x] == n // 2]
        c, scale = xmixer_couplings(energies, n, x, targets, b, return_scale=True)
        bad = ~np.isfinite(c)
        singular += int(bad.sum())
        mag = np.abs(c[~bad])
        # zero by cancellation when far below the sum of absolute terms
        nonzero = mag > 1e3 * ZERO_RTOL * scale[~bad]
        zeros += int((~nonzero).sum())
        logs.append(np.log10(mag[nonzero]))
    vals = np.concatenate(logs) if logs else np.zeros(0)
    return CouplingSample(n, seeds, vals, zeros, singular)
