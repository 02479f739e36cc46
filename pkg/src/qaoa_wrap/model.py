"""Hamiltonian pairs, problem instances and their JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ValidationError

MAX_QUBITS = 14
HERMITIAN_TOL = 1e-12


def _popcount(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    count = np.zeros_like(values)
    while np.any(values):
        count += values & 1
        values = values >> 1
    return count


def spins(n: int) -> np.ndarray:
    """Spin values s[b, q] in {+1, -1} for every basis index b.

    Bit 0 maps to s=+1 and qubit 0 is the most significant bit.
    """
    idx = np.arange(2**n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    return 1 - 2 * bits


@dataclass(frozen=True)
class IsingInstance:
    """Fields h_i and sparse couplings (i, j, J_ij) with i < j."""

    n: int
    h: tuple[float, ...]
    J: tuple[tuple[int, int, float], ...] = ()
    seed: int | None = None

    def __post_init__(self):
        if not 1 <= self.n <= MAX_QUBITS:
            raise ValidationError(f"Ising size n={self.n} outside 1..{MAX_QUBITS}")
        object.__setattr__(self, "h", tuple(float(v) for v in self.h))
        if len(self.h) != self.n:
            raise ValidationError(f"expected {self.n} fields, got {len(self.h)}")
        seen = set()
        couplings = []
        for i, j, w in self.J:
            i, j = int(i), int(j)
            if not (0 <= i < self.n and 0 <= j < self.n) or i == j:
                raise ValidationError(f"coupling index ({i}, {j}) out of range for n={self.n}")
            if i > j:
                i, j = j, i
            if (i, j) in seen:
                raise ValidationError(f"duplicate coupling ({i}, {j})")
            seen.add((i, j))
            couplings.append((i, j, float(w)))
        object.__setattr__(self, "J", tuple(couplings))

    def energies(self) -> np.ndarray:
        s = spins(self.n).astype(float)
        energy = s @ np.asarray(self.h, dtype=float)
        for i, j, w in self.J:
            energy = energy + w * s[:, i] * s[:, j]
        return energy

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j, _ in self.J:
            deg[i] += 1
            deg[j] += 1
        return deg

    def to_json(self) -> dict:
        return {
            "type": "ising",
            "n": self.n,
            "h": list(self.h),
            "J": [[i, j, w] for i, j, w in self.J],
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class Component:
    """One Hamiltonian in dense form plus the structured description it came from.

    ``kind`` is one of ``dense``, ``x_mixer``, ``diagonal`` or ``ising``.
    """

    kind: str
    dim: int
    params: dict = field(default_factory=dict)

    def dense(self) -> np.ndarray:
        cached = self.__dict__.get("_dense")
        if cached is not None:
            return cached
        if self.kind == "dense":
            mat = np.array(self.params["matrix"], dtype=complex)
        elif self.kind == "x_mixer":
            n, a, b = self.params["n"], self.params["a"], self.params["b"]
            mat = np.zeros((self.dim, self.dim), dtype=complex)
            idx = np.arange(self.dim)
            mat[idx, idx] = n * a
            for q in range(n):
                mat[idx, idx ^ (1 << q)] = -b
        else:
            mat = np.diag(self.diagonal().astype(complex))
        mat.setflags(write=False)
        object.__setattr__(self, "_dense", mat)
        return mat

    def diagonal(self) -> np.ndarray | None:
        """Diagonal entries if the operator is diagonal in the computational basis."""
        if self.kind == "diagonal":
            return np.asarray(self.params["energies"], dtype=float)
        if self.kind == "ising":
            return self.params["instance"].energies()
        return None

    def to_json(self) -> dict:
        if self.kind == "x_mixer":
            return {"type": "x_mixer", **{k: self.params[k] for k in ("n", "a", "b")}}
        if self.kind == "diagonal":
            return {"type": "diagonal", "energies": [float(v) for v in self.params["energies"]]}
        if self.kind == "ising":
            return self.params["instance"].to_json()
        mat = self.dense()
        return {
            "type": "dense",
            "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in mat],
        }


def build_transverse_field_mixer(n: int, a: float = 0.0, b: float = 1.0) -> Component:
    """Mixer sum_i (a I - b X_i); ground state |+>^n with eigenvalue n(a - b) for b > 0."""
    if not 1 <= n <= MAX_QUBITS:
        raise ValidationError(f"qubit count n={n} outside 1..{MAX_QUBITS}")
    return Component("x_mixer", 2**n, {"n": int(n), "a": float(a), "b": float(b)})


def build_diagonal_cost(energies) -> Component:
    energies = np.asarray(energies, dtype=float).ravel()
    if energies.size < 2:
        raise ValidationError("a diagonal cost needs at least two energies")
    if not np.all(np.isfinite(energies)):
        raise ValidationError("cost energies must be finite")
    return Component("diagonal", energies.size, {"energies": tuple(energies.tolist())})


def build_ising(inst: IsingInstance) -> Component:
    return Component("ising", 2**inst.n, {"instance": inst})


def dense_component(matrix) -> Component:
    mat = np.array(matrix, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"matrix must be square, got shape {mat.shape}")
    return Component("dense", mat.shape[0], {"matrix": mat})


def sample_ising(n: int, seed: int | None = None, rng: np.random.Generator | None = None) -> IsingInstance:
    """Fully connected instance with fields and couplings uniform in (-1, 1)."""
    rng = np.random.default_rng(seed) if rng is None else rng
    h = rng.uniform(-1.0, 1.0, size=n)
    J = [(i, j, rng.uniform(-1.0, 1.0)) for i in range(n) for j in range(i + 1, n)]
    return IsingInstance(n, tuple(h), tuple(J), seed)


def sample_sparse_ising(n: int, seed: int | None = None, post_process: bool = True) -> IsingInstance:
    """Random sparse instance: each pair coupled with probability 3/n.

    With ``post_process`` any qubit left without couplings is attached to one
    uniformly chosen other qubit.
    """
    if n < 2:
        raise ValidationError("sparse Ising instances need n >= 2")
    rng = np.random.default_rng(seed)
    prob = min(1.0, 3.0 / n)
    h = rng.uniform(-1.0, 1.0, size=n)
    couplings = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < prob:
                couplings[(i, j)] = rng.uniform(-1.0, 1.0)
    if post_process:
        for q in range(n):
            if any(q in key for key in couplings):
                continue
            other = int(rng.integers(n - 1))
            other += other >= q
            couplings[(min(q, other), max(q, other))] = rng.uniform(-1.0, 1.0)
    J = tuple((i, j, w) for (i, j), w in sorted(couplings.items()))
    return IsingInstance(n, tuple(h), J, seed)


@dataclass(frozen=True)
class Eigensystem:
    values: np.ndarray
    vectors: np.ndarray

    def exp(self, t: float) -> np.ndarray:
        """exp(-i t H) from the stored decomposition."""
        return (self.vectors * np.exp(-1j * t * self.values)) @ self.vectors.conj().T


def _eigensystem(comp: Component, mat: np.ndarray) -> Eigensystem:
    diag = comp.diagonal()
    if diag is not None:
        order = np.argsort(diag, kind="stable")
        vectors = np.eye(comp.dim, dtype=complex)[:, order]
        values = diag[order]
    elif comp.kind == "x_mixer":
        # Hadamard basis: eigenvalue n a - b (n - 2 |k|) on the state indexed by k.
        n, a, b = comp.params["n"], comp.params["a"], comp.params["b"]
        idx = np.arange(comp.dim)
        hadamard = (-1.0) ** _popcount(idx[:, None] & idx[None, :]) / np.sqrt(comp.dim)
        raw = n * a - b * (n - 2 * _popcount(idx))
        order = np.argsort(raw, kind="stable")
        values = raw[order].astype(float)
        vectors = hadamard[:, order].astype(complex)
    else:
        values, vectors = np.linalg.eigh(mat)
    values = np.ascontiguousarray(values, dtype=float)
    vectors = np.ascontiguousarray(vectors, dtype=complex)
    values.setflags(write=False)
    vectors.setflags(write=False)
    return Eigensystem(values, vectors)


def _as_component(obj) -> Component:
    if isinstance(obj, Component):
        return obj
    return dense_component(obj)


def check_hermitian(mat: np.ndarray, name: str = "matrix") -> None:
    if not np.all(np.isfinite(mat)):
        raise ValidationError(f"{name} has non-finite entries")
    dev = np.abs(mat - mat.conj().T)
    worst = float(dev.max()) if dev.size else 0.0
    scale = max(1.0, float(np.abs(mat).max()))
    if worst > HERMITIAN_TOL * scale:
        i, j = np.unravel_index(int(np.argmax(dev)), dev.shape)
        raise ValidationError(
            f"{name} is not Hermitian: entry ({i}, {j}) deviates from its conjugate "
            f"transpose by {worst:.3e}"
        )


class HamiltonianPair:
    """A mixer and a cost Hamiltonian with cached eigendecompositions.

    Either argument may be a :class:`Component` or a square array. Instances
    are immutable; the dense matrices and eigensystems are read-only arrays.
    """

    def __init__(self, mixer, cost, label: str = ""):
        mixer_c = _as_component(mixer)
        cost_c = _as_component(cost)
        if mixer_c.dim != cost_c.dim:
            raise ValidationError(f"dimension mismatch: mixer {mixer_c.dim} vs cost {cost_c.dim}")
        if mixer_c.dim < 2:
            raise ValidationError("Hilbert dimension must be at least 2")
        m = mixer_c.dense()
        c = cost_c.dense()
        check_hermitian(m, "mixer")
        check_hermitian(c, "cost")
        self.mixer_spec = mixer_c
        self.cost_spec = cost_c
        self.mixer = m
        self.cost = c
        self.label = label
        self.mixer_eigensystem = _eigensystem(mixer_c, m)
        self.cost_eigensystem = _eigensystem(cost_c, c)

    def __setattr__(self, name, value):
        if name in self.__dict__:
            raise AttributeError(f"HamiltonianPair is immutable; cannot reset {name}")
        super().__setattr__(name, value)

    @property
    def dim(self) -> int:
        return self.mixer.shape[0]

    @property
    def n_qubits(self) -> int | None:
        d = self.dim
        return d.bit_length() - 1 if d & (d - 1) == 0 else None

    def __repr__(self):
        return f"HamiltonianPair(label={self.label!r}, dim={self.dim})"

    def mixer_ground_state(self, rel_tol: float = 1e-9) -> np.ndarray:
        """Unique mixer ground state; raises if the ground level is degenerate."""
        values = self.mixer_eigensystem.values
        tol = rel_tol * max(float(values[-1] - values[0]), np.finfo(float).tiny)
        if values[1] - values[0] <= tol:
            raise ValidationError(
                "mixer ground level is degenerate; pass an explicit initial state"
            )
        return self.mixer_eigensystem.vectors[:, 0].copy()

    def cost_ground_indices(self, rel_tol: float = 1e-9) -> np.ndarray:
        values = self.cost_eigensystem.values
        tol = rel_tol * max(float(values[-1] - values[0]), 1e-300)
        return np.flatnonzero(values - values[0] <= tol)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "dim": self.dim,
            "mixer": self.mixer_spec.to_json(),
            "cost": self.cost_spec.to_json(),
        }


def component_from_json(obj: dict, dim: int | None = None) -> Component:
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValidationError("component entries need a 'type' field")
    kind = obj["type"]
    try:
        if kind == "x_mixer":
            comp = build_transverse_field_mixer(int(obj["n"]), float(obj.get("a", 0.0)), float(obj.get("b", 1.0)))
        elif kind == "diagonal":
            comp = build_diagonal_cost(obj["energies"])
        elif kind == "ising":
            inst = IsingInstance(int(obj["n"]), tuple(obj["h"]), tuple(tuple(t) for t in obj.get("J", [])), obj.get("seed"))
            comp = build_ising(inst)
        elif kind == "dense":
            arr = np.asarray(obj["matrix"], dtype=float)
            if arr.ndim != 3 or arr.shape[2] != 2:
                raise ValidationError("dense matrices are rows of [re, im] pairs")
            comp = dense_component(arr[..., 0] + 1j * arr[..., 1])
        else:
            raise ValidationError(f"unknown component type {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"malformed {kind} component: {exc}") from exc
    if dim is not None and comp.dim != dim:
        raise ValidationError(f"component dimension {comp.dim} does not match declared dim {dim}")
    return comp


def pair_from_json(obj: dict) -> HamiltonianPair:
    if not isinstance(obj, dict) or "mixer" not in obj or "cost" not in obj:
        raise ValidationError("instance JSON needs 'mixer' and 'cost' entries")
    dim = obj.get("dim")
    dim = int(dim) if dim is not None else None
    return HamiltonianPair(
        component_from_json(obj["mixer"], dim),
        component_from_json(obj["cost"], dim),
        label=str(obj.get("label", "")),
    )


def save_pair(pair: HamiltonianPair, path) -> None:
    Path(path).write_text(json.dumps(pair.to_json(), indent=1) + "\n")


def load_pair(path) -> HamiltonianPair:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})") from exc
    if isinstance(obj, dict) and not obj.get("label"):
        obj = {**obj, "label": Path(path).stem}
    return pair_from_json(obj)


EIGHT_LEVEL_ENERGIES = (0.0, 2.5, 3.0, 3.5, 4.5, 5.5, 6.0, 7.0)
THREE_QUBIT_ENERGIES = (10.0, 5.4, 7.18, 0.6, 0.0, 7.0, 7.0, 3.35)


def two_level() -> HamiltonianPair:
    return HamiltonianPair(build_transverse_field_mixer(1, 0.5, 0.5), build_diagonal_cost([0.0, 7.0]), "two-level")


def eight_level() -> HamiltonianPair:
    return HamiltonianPair(build_transverse_field_mixer(3, 0.5, 0.5), build_diagonal_cost(EIGHT_LEVEL_ENERGIES), "eight-level")


def three_qubit() -> HamiltonianPair:
    return HamiltonianPair(build_transverse_field_mixer(3, 0.0, 1.0), build_diagonal_cost(THREE_QUBIT_ENERGIES), "three-qubit")


def ising6(seed: int = 0, a: float = 0.0, b: float = 1.0) -> HamiltonianPair:
    """Seeded random fully connected 6-spin instance; mixer scale is configurable."""
    return HamiltonianPair(build_transverse_field_mixer(6, a, b), build_ising(sample_ising(6, seed)), f"ising6-s{seed}")


def sparse_ising_pair(n: int, seed: int = 0, a: float = 0.0, b: float = 1.0) -> HamiltonianPair:
    return HamiltonianPair(build_transverse_field_mixer(n, a, b), build_ising(sample_sparse_ising(n, seed)), f"sparse-ising-n{n}-s{seed}")


EXAMPLES = {
    "two-level": two_level,
    "eight-level": eight_level,
    "three-qubit": three_qubit,
    "ising6": ising6,
    "sparse-ising": sparse_ising_pair,
}


def example_pair(name: str, **kwargs: Any) -> HamiltonianPair:
    try:
        factory = EXAMPLES[name]
    except KeyError:
        raise ValidationError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}") from None
    return factory(**kwargs)
