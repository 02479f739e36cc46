"""Discrete Landau-Zener predictions for wrap-around gaps.

A ramp that crosses the avoided crossing born of a wrap-around event either
follows the swapping eigenvector (adiabatic) or stays on the diabatic branch.
Staying diabatic returns the state to the edge state x, which for ground
events is what the optimizer wants; its probability is exp(-B0 delta^2k p / ...).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .engine import propagate, qaoa_unitary
from .errors import InapplicableError, ValidationError
from .gaps import _require, gap_prediction
from .model import HamiltonianPair
from .spectral import ParameterPath, WrapEvent, edge_basis, min_gap_on_path, unitary_eig, wrap_events


def b0(event: WrapEvent) -> float:
    """Positive constant in the exponent of the diabatic probability."""
    _require(event)
    c = abs(event.c_eff)
    gm1 = abs(1.0 - event.gamma)
    if event.k == 1:
        de = event.energy_x - event.energy_y
        return c * c / ((gm1**2 + (2 * c / de) ** 2) * gm1)
    return c * c / gm1 ** (2 * event.k + 1)


def _exponent_rate(event: WrapEvent, delta: float) -> float:
    """-ln P per step of p."""
    if delta <= 0:
        raise ValidationError(f"delta must be positive past the event, got {delta}")
    return b0(event) * delta ** (2 * event.k) / (event.winding * (1.0 + delta / event.delta_star))


def dlz_probability(event: WrapEvent, delta: float, p: float) -> float:
    """Probability of a diabatic passage through the gap after ``p`` ramp steps."""
    if p < 0:
        raise ValidationError("p must be non-negative")
    return math.exp(-_exponent_rate(event, delta) * p)


def p_for_probability(event: WrapEvent, delta: float, target: float) -> float:
    """Steps at which the diabatic probability falls to ``target``."""
    if not 0.0 < target < 1.0:
        raise ValidationError(f"target probability must lie in (0, 1), got {target}")
    return -math.log(target) / _exponent_rate(event, delta)


def combined_p(p_values) -> float:
    """Harmonic combination of per-gap p values; infinite entries do not contribute."""
    p = np.asarray(p_values, dtype=float)
    finite = p[np.isfinite(p)]
    if finite.size == 0:
        raise InapplicableError("no gap contributes at this delta")
    if np.any(finite <= 0):
        raise ValidationError("per-gap p values must be positive")
    if finite.size == 1:
        return float(finite[0])
    return float(1.0 / np.sum(1.0 / finite))


def _tracking_objective(p, p_comb, target, p_ref, miss_ref):
    return p / p_comb * math.log(target) + math.log1p(-miss_ref ** (p / p_ref)) - math.log(target)


def tracking_band(p_values, target: float, p_ref: float, p_ref_probability: float):
    """Lower and upper p at which gap losses and poor tracking give exactly ``target``.

    Solves target = prod target^(p/p_s) * (1 - (1 - P_ref)^(p/p_ref)) on
    both sides of its maximum. Raises if the maximum stays below target.
    """
    if not 0.0 < target < 1.0:
        raise ValidationError("target probability must lie in (0, 1)")
    if not 0.0 < p_ref_probability < 1.0:
        raise ValidationError("calibration probability must lie in (0, 1)")
    if p_ref <= 0:
        raise ValidationError("calibration p must be positive")
    p_comb = combined_p(p_values)
    miss = 1.0 - p_ref_probability
    fn = lambda p: _tracking_objective(p, p_comb, target, p_ref, miss)
    # maximize on a log scale; the floor keeps the tracking factor representable
    lo, hi = math.log(min(p_ref, p_comb)) - 20.0, math.log(p_comb)
    res = minimize_scalar(lambda u: -fn(math.exp(u)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    p_max = math.exp(res.x)
    if fn(p_max) < 0:
        raise InapplicableError("tracking-corrected probability never reaches the target")
    upper = brentq(fn, p_max, p_comb, xtol=1e-12, rtol=1e-10) if fn(p_comb) < 0 else p_comb
    lower = brentq(fn, math.exp(lo), p_max, xtol=1e-12, rtol=1e-10) if fn(math.exp(lo)) < 0 else math.exp(lo)
    return lower, upper


def tracking_corrected_p(p_values, target: float, p_ref: float, p_ref_probability: float) -> float:
    """Upper p of the ridge after correcting for imperfect tracking at small p."""
    return tracking_band(p_values, target, p_ref, p_ref_probability)[1]


def p_epsilon(P0: float, p0: float, epsilon: float) -> float:
    """p needed for a (1 - epsilon) overlap given one measured (p0, P0) point."""
    if not 0.0 < P0 < 1.0:
        raise ValidationError("P0 must lie in (0, 1)")
    if p0 <= 0 or not 0.0 < epsilon < 1.0:
        raise ValidationError("need p0 > 0 and 0 < epsilon < 1")
    return -epsilon * p0 / math.log(P0)


# ---------------------------------------------------------------------------
# ridge envelope


MODES = ("single", "combined", "corrected")


@dataclass
class RidgeEnvelope:
    delta: np.ndarray
    p: np.ndarray
    per_event: np.ndarray  # (n_delta, n_events), inf where an event does not contribute
    events: list
    mode: str
    target: float
    calibration: tuple | None = None
    flags: list = field(default_factory=list)

    def contributing(self, i: int) -> list:
        return [j for j in range(len(self.events)) if np.isfinite(self.per_event[i, j])]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "p_predicted", "mode", "contributing_events"])
        for i, d in enumerate(self.delta):
            val = "" if not np.isfinite(self.p[i]) else repr(float(self.p[i]))
            w.writerow([repr(float(d)), val, self.mode, ";".join(str(j) for j in self.contributing(i))])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "target": self.target,
            "calibration": None if self.calibration is None else list(self.calibration),
            "delta": self.delta.tolist(),
            "p": [float(v) if np.isfinite(v) else None for v in self.p],
            "per_event": [[float(v) if np.isfinite(v) else None for v in row] for row in self.per_event],
            "events": [e.to_json() for e in self.events],
            "flags": list(self.flags),
        }


def envelope_events(pair: HamiltonianPair, delta_max: float) -> list:
    """Isolated ground events with a usable gap formula."""
    out = []
    for ev in wrap_events(pair, delta_max, ground_only=True):
        if not ev.isolated or ev.c_eff is None or ev.gamma is None or abs(ev.gamma - 1) < 1e-6:
            continue
        if "c_eff_zero" in ev.flags or "c_eff_unreliable" in ev.flags:
            continue
        out.append(ev)
    return out


def ridge_envelope(pair: HamiltonianPair, delta_grid, target: float = 0.95, mode: str = "single",
                   calibration: tuple | None = None, events=None) -> RidgeEnvelope:
    """Predicted upper p of the high-overlap region for each delta.

    ``single`` reports the smallest single-gap p, ``combined`` the harmonic
    combination, ``corrected`` the tracking-corrected solve (needs
    ``calibration`` = (p_ref, P_ref)).
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    if mode == "corrected" and calibration is None:
        raise ValidationError("corrected mode needs a calibration (p_ref, P_ref)")
    grid = np.asarray(delta_grid, dtype=float).ravel()
    if events is None:
        events = envelope_events(pair, float(grid.max()) if grid.size else 0.0)
    flags = []
    if any(e.edge == 0 for e in events):
        flags.append("edge0_by_symmetry")
    per = np.full((grid.size, len(events)), np.inf)
    for i, d in enumerate(grid):
        for j, ev in enumerate(events):
            if d > ev.delta_star:
                per[i, j] = p_for_probability(ev, d - ev.delta_star, target)
    p = np.full(grid.size, np.inf)
    for i in range(grid.size):
        if not np.isfinite(per[i]).any():
            continue
        if mode == "single":
            p[i] = per[i].min()
        elif mode == "combined":
            p[i] = combined_p(per[i])
        else:
            try:
                p[i] = tracking_corrected_p(per[i], target, *calibration)
            except InapplicableError:
                p[i] = np.nan
    return RidgeEnvelope(grid, p, per, list(events), mode, float(target),
                         None if calibration is None else tuple(calibration), flags)


# ---------------------------------------------------------------------------
# simulated diabatic fraction


@dataclass(frozen=True)
class DiabaticMeasurement:
    p: int
    probability: float
    f_gap: float
    window: tuple
    steps: int
    protocol: str = ("start in the x-like eigenvector of U just before the gap; "
                     "report overlap with the x-like eigenvector just after it")


def _x_like(pair, f, delta, vx):
    _, vecs = unitary_eig(qaoa_unitary(pair, f, delta))
    w = np.abs(vx.conj() @ vecs) ** 2
    return vecs[:, int(np.argmax(w))]


def locate_gap(pair: HamiltonianPair, event: WrapEvent, delta: float, half_width: float | None = None):
    """Measured gap (location and size) at fixed delta near the predicted location."""
    pred = gap_prediction(event, delta)
    if half_width is None:
        half_width = min(max(abs(pred.f_star - event.edge), 1e-3), 0.05)
    d = event.delta_star + delta
    lo = max(pred.f_star - half_width, -0.1)
    hi = min(pred.f_star + half_width, 1.1)
    path = ParameterPath.polyline([(lo, d), (hi, d)], samples=201)
    _, vecs, _ = edge_basis(pair, event.edge)
    return min_gap_on_path(pair, path, states=(event.x, event.y), edge_vectors=vecs)


def diabatic_fraction(pair: HamiltonianPair, event: WrapEvent, delta: float, p: int,
                      width: float = 30.0, gap=None) -> DiabaticMeasurement:
    """Simulated probability of staying on the diabatic branch through the gap.

    Only ramp steps inside a window around the measured gap are applied; the
    window half-width is ``width`` times the larger of the gap and the
    Landau-Zener time scale, both in units of f.
    """
    if event.edge != 1:
        raise InapplicableError("windowed simulation is implemented for ramps ending at the edge event (f=1)")
    gap = gap if gap is not None else locate_gap(pair, event, delta)
    d = event.delta_star + delta
    rate = d * abs((event.energy_x - event.energy_y) - (event.diag_x - event.diag_y))
    half = width * max(gap.gap / rate, 1.0 / math.sqrt(p * rate))
    f_a, f_b = gap.f - half, gap.f + half
    j_a = max(1, math.ceil(f_a * (p + 1)))
    j_b = min(p, math.floor(f_b * (p + 1)))
    if j_b <= j_a:
        raise InapplicableError("window contains no ramp steps; increase p or width")
    _, evecs, _ = edge_basis(pair, event.edge)
    vx = evecs[:, event.x]
    f_lo, f_hi = (j_a - 0.5) / (p + 1), (j_b + 0.5) / (p + 1)
    start = _x_like(pair, f_lo, d, vx)
    steps = j_b - j_a + 1
    state = start
    block = 2**22
    for s in range(j_a, j_b + 1, block):
        j = np.arange(s, min(s + block, j_b + 1))
        f = j / (p + 1)
        state = propagate(pair, d * f, d * (1 - f), state)
    end = _x_like(pair, f_hi, d, vx)
    prob = float(abs(np.vdot(end, state)) ** 2)
    return DiabaticMeasurement(int(p), prob, float(gap.f), (float(f_lo), float(f_hi)), int(steps))


def regress_slope(ps, probs) -> float:
    """Least-squares slope of -ln P against p through the origin-free line."""
    ps = np.asarray(ps, dtype=float)
    y = -np.log(np.asarray(probs, dtype=float))
    return float(np.polyfit(ps, y, 1)[0])


def dlz_rate(event: WrapEvent, delta: float) -> float:
    """Predicted slope of -ln P against p."""
    return _exponent_rate(event, delta)


def envelope_json(env: RidgeEnvelope) -> str:
    return json.dumps(env.to_json(), indent=2)


__all__ = [
    "b0", "dlz_probability", "p_for_probability", "combined_p", "tracking_band",
    "tracking_corrected_p", "p_epsilon", "RidgeEnvelope", "ridge_envelope", "envelope_events",
    "diabatic_fraction", "locate_gap", "regress_slope", "dlz_rate", "DiabaticMeasurement",
]
