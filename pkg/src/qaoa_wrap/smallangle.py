"""Leading small-angle behaviour of the expected cost.

To second order in the angles, starting from a mixer eigenstate,

    <C>_p = <C>_0 - (sum_{i, j >= i} gamma_i beta_j) <[C, [B, C]]>_0

where C is the cost and B the mixer. The first-order term vanishes because
the start state is an eigenstate of B.
"""

from __future__ import annotations

import numpy as np

from .engine import Schedule
from .errors import ValidationError
from .model import HamiltonianPair, IsingInstance


def angle_sum_ramp(p: int, delta: float) -> float:
    """Closed form of sum_{i, j >= i} gamma_i beta_j for the linear ramp."""
    if p < 1:
        raise ValidationError("p must be at least 1")
    return p * (6 + 5 * p + p * p) / (24 * (1 + p)) * delta * delta


def angle_sum_generic(gammas, betas) -> float:
    """sum_{i, j >= i} gamma_i beta_j by direct summation."""
    g = np.asarray(gammas, dtype=float).ravel()
    b = np.asarray(betas, dtype=float).ravel()
    if g.shape != b.shape:
        raise ValidationError(f"angle lists differ in length: {g.size} vs {b.size}")
    # suffix sums of beta: sum_{j >= i} beta_j
    tail = np.cumsum(b[::-1])[::-1]
    return float(np.dot(g, tail))


def commutator_expectation(pair: HamiltonianPair, state, mixer_sign: int = 1) -> float:
    """<state| [C, [B, C]] |state> with B scaled by ``mixer_sign``."""
    if mixer_sign not in (1, -1):
        raise ValidationError("mixer_sign must be +1 or -1")
    c = pair.cost
    b = mixer_sign * pair.mixer
    bc = b @ c - c @ b
    double = c @ bc - bc @ c
    state = np.asarray(state, dtype=complex)
    return float(np.real(np.vdot(state, double @ state)))


def leading_expected_cost(pair: HamiltonianPair, state, schedule: Schedule, mixer_sign: int = 1) -> float:
    """Expected cost to leading order in the angles.

    ``mixer_sign = -1`` evaluates the series as if the mixer were negated,
    which is the same as flipping the sign of every beta.
    """
    state = np.asarray(state, dtype=complex)
    c0 = float(np.real(np.vdot(state, pair.cost @ state)))
    s = angle_sum_generic(schedule.gammas, schedule.betas)
    return c0 - s * commutator_expectation(pair, state, mixer_sign)


def ising_field_sum(inst: IsingInstance) -> float:
    """sum h_i^2 + 2 sum_{i<j} J_ij^2."""
    return float(np.sum(np.square(inst.h)) + 2.0 * sum(w * w for _, _, w in inst.J))


def ising_commutator_closed_form(inst: IsingInstance, b: float = 1.0) -> float:
    """<+|[C, [B, C]]|+> for B = sum_q (a I - b X_q) and an Ising cost C."""
    return 4.0 * b * ising_field_sum(inst)


def ising_leading_closed_form(inst: IsingInstance, p: int, delta: float, b: float = 1.0) -> float:
    """Leading-order <C>_p for a ramp from the uniform superposition.

    <C>_0 vanishes for an Ising cost without a constant term, so this equals
    the correction itself; for b = 1 it is
    -p(6+5p+p^2)/(6(1+p)) delta^2 (sum h^2 + 2 sum J^2).
    """
    return -angle_sum_ramp(p, delta) * ising_commutator_closed_form(inst, b)


def class_average_leading(n: int, p: int, delta: float) -> float:
    """Leading term averaged over fully connected Ising costs with <h^2> = <J^2> = 1/3."""
    return -delta**2 * n**2 * p * (p * p + 5 * p + 6) / (18 * (p + 1))


def class_average_leading_large_p(n: int, p: float, delta: float) -> float:
    """Large-p limit -n^2 (delta p)^2 / 18 of the class-averaged leading term."""
    return -(n**2) * (delta * p) ** 2 / 18


def class_average_second_large_p(n: int, p: float, delta: float) -> float:
    """Large-p class-averaged second term n^3 (delta p)^4 / 504."""
    return n**3 * (delta * p) ** 4 / 504


def sparse_average_leading_large_p(n: int, m: float, p: float, delta: float) -> float:
    """Large-p leading term for sparse Ising costs with mean degree m."""
    return -n * (m + 1) * (delta * p) ** 2 / 18


def sparse_average_second_large_p(n: int, m: float, p: float, delta: float) -> float:
    """Large-p second term for sparse Ising costs with mean degree m."""
    return n * (5 * m * m + 28 * m + 8) * (delta * p) ** 4 / 2520
