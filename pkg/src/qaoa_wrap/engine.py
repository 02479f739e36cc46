"""Schedules, QAOA state propagation and output-state metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .model import HamiltonianPair

# Above this many levels small systems are propagated by multiplying step
# matrices in batches, which is much faster than a Python loop over steps.
_BATCH_MAX_DIM = 32
_BATCH_MIN_STEPS = 64
_BATCH_ELEMENTS = 2**21


@dataclass(frozen=True)
class Schedule:
    gammas: np.ndarray
    betas: np.ndarray
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float).ravel()
        b = np.asarray(self.betas, dtype=float).ravel()
        if g.shape != b.shape:
            raise ValidationError(f"gamma/beta length mismatch: {g.size} vs {b.size}")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "betas", b)

    @property
    def p(self) -> int:
        return self.gammas.size


def ramp_fractions(p: int) -> np.ndarray:
    """f_j = j / (p + 1) for j = 1..p."""
    return np.arange(1, p + 1) / (p + 1)


def ramp_schedule(delta: float, p: int) -> Schedule:
    """Linear ramp gamma_j = delta f_j, beta_j = delta (1 - f_j)."""
    if p < 0 or int(p) != p:
        raise ValidationError(f"level count must be a non-negative integer, got {p}")
    if delta < 0:
        raise ValidationError(f"ramp scale must be non-negative, got {delta}")
    p = int(p)
    f = ramp_fractions(p)
    gammas = delta * f
    betas = delta * (1.0 - f)
    return Schedule(gammas, betas, {"kind": "ramp", "delta": float(delta), "p": p})


def sampled_schedule(gamma_fn: Callable, beta_fn: Callable, p: int) -> Schedule:
    """Sample arbitrary angle functions of f at the ramp fractions f_j."""
    f = ramp_fractions(int(p))
    gammas = np.array([gamma_fn(x) for x in f], dtype=float)
    betas = np.array([beta_fn(x) for x in f], dtype=float)
    return Schedule(gammas, betas, {"kind": "sampled", "p": int(p)})


def qaoa_unitary(pair: HamiltonianPair, f: float, delta: float) -> np.ndarray:
    """exp(-i delta (1-f) H_mix) exp(-i delta f H_cost)."""
    return pair.mixer_eigensystem.exp(delta * (1.0 - f)) @ pair.cost_eigensystem.exp(delta * f)


def qaoa_unitaries(pair: HamiltonianPair, f, delta) -> np.ndarray:
    """Stack of QAOA unitaries for broadcastable arrays of f and delta."""
    f, delta = np.broadcast_arrays(np.asarray(f, dtype=float), np.asarray(delta, dtype=float))
    vm, lm = pair.mixer_eigensystem.vectors, pair.mixer_eigensystem.values
    vc, lc = pair.cost_eigensystem.vectors, pair.cost_eigensystem.values
    beta = (delta * (1.0 - f)).ravel()
    gamma = (delta * f).ravel()
    left = vm[None] * np.exp(-1j * beta[:, None] * lm[None])[:, None, :]
    right = (vc[None] * np.exp(-1j * gamma[:, None] * lc[None])[:, None, :]) @ vc.conj().T
    out = (left @ vm.conj().T) @ right
    return out.reshape(f.shape + (pair.dim, pair.dim))


def qaoa_step(pair: HamiltonianPair, beta: float, gamma: float, state: np.ndarray) -> np.ndarray:
    """Apply exp(-i beta H_mix) exp(-i gamma H_cost) to a state."""
    state = np.asarray(state, dtype=complex)
    if state.shape != (pair.dim,):
        raise ValidationError(f"state has shape {state.shape}, expected ({pair.dim},)")
    ec, em = pair.cost_eigensystem, pair.mixer_eigensystem
    out = ec.vectors @ (np.exp(-1j * gamma * ec.values) * (ec.vectors.conj().T @ state))
    return em.vectors @ (np.exp(-1j * beta * em.values) * (em.vectors.conj().T @ out))


def _tree_product(mats: np.ndarray) -> np.ndarray:
    """mats[-1] @ ... @ mats[0] by pairwise reduction."""
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            head = mats[1::2] @ mats[0:-1:2]
            mats = np.concatenate([head, mats[-1:]], axis=0)
        else:
            mats = mats[1::2] @ mats[0::2]
    return mats[0]


def propagate(pair: HamiltonianPair, gammas, betas, state: np.ndarray) -> np.ndarray:
    """Apply the steps (gamma_j, beta_j) in order to ``state``."""
    gammas = np.asarray(gammas, dtype=float).ravel()
    betas = np.asarray(betas, dtype=float).ravel()
    if gammas.size == 0:
        return np.array(state, dtype=complex)
    em, ec = pair.mixer_eigensystem, pair.cost_eigensystem
    w = em.vectors.conj().T @ ec.vectors
    wh = w.conj().T
    amp = em.vectors.conj().T @ np.asarray(state, dtype=complex)
    d = pair.dim
    if d <= _BATCH_MAX_DIM and gammas.size >= _BATCH_MIN_STEPS:
        chunk = max(_BATCH_MIN_STEPS, _BATCH_ELEMENTS // (d * d))
        for start in range(0, gammas.size, chunk):
            g = gammas[start:start + chunk]
            b = betas[start:start + chunk]
            mats = (np.exp(-1j * b[:, None] * em.values[None])[:, :, None] * w[None]) * np.exp(
                -1j * g[:, None] * ec.values[None]
            )[:, None, :]
            mats = mats @ wh
            amp = _tree_product(mats) @ amp
    else:
        for g, b in zip(gammas, betas):
            amp = np.exp(-1j * b * em.values) * (w @ (np.exp(-1j * g * ec.values) * (wh @ amp)))
    return em.vectors @ amp


@dataclass(frozen=True)
class QaoaResult:
    final_state: np.ndarray
    ground_overlap_sq: float
    expected_cost: float
    log_infidelity: float
    per_eigenstate_overlap_sq: np.ndarray | None = None


def measure(pair: HamiltonianPair, state: np.ndarray, per_eigenstate: bool = False) -> QaoaResult:
    """Metrics of a state against the cost eigensystem."""
    ec = pair.cost_eigensystem
    probs = np.abs(ec.vectors.conj().T @ state) ** 2
    ground = float(min(1.0, probs[pair.cost_ground_indices()].sum()))
    cost = float(np.dot(probs, ec.values) / probs.sum())
    cost = float(np.clip(cost, ec.values[0], ec.values[-1]))
    miss = abs(1.0 - ground)
    log_inf = float(-np.log(miss)) if miss > 0 else float("inf")
    return QaoaResult(state, ground, cost, log_inf, probs if per_eigenstate else None)


def _initial_state(pair: HamiltonianPair, initial) -> np.ndarray:
    if isinstance(initial, str):
        if initial != "mixer_ground":
            raise ValidationError(f"unknown initial state {initial!r}")
        return pair.mixer_ground_state()
    state = np.asarray(initial, dtype=complex)
    if state.shape != (pair.dim,):
        raise ValidationError(f"initial state has shape {state.shape}, expected ({pair.dim},)")
    norm = np.linalg.norm(state)
    if abs(norm - 1.0) > 1e-10:
        raise ValidationError(f"initial state is not normalized (norm {norm})")
    return state


def evolve(pair: HamiltonianPair, schedule: Schedule, initial="mixer_ground", per_eigenstate: bool = False) -> QaoaResult:
    """Run the QAOA circuit described by ``schedule`` and measure the output."""
    state = propagate(pair, schedule.gammas, schedule.betas, _initial_state(pair, initial))
    return measure(pair, state, per_eigenstate)


def evolve_general(pair: HamiltonianPair, gamma_fn: Callable, beta_fn: Callable, p: int,
                   initial="mixer_ground", per_eigenstate: bool = False) -> QaoaResult:
    return evolve(pair, sampled_schedule(gamma_fn, beta_fn, p), initial, per_eigenstate)
