"""Shot-based statevector simulator.

Conventions, fixed once and relied on everywhere:

* Qubit 0 is the leftmost character of an outcome string and the most
  significant bit of a basis index.  For N = 3 the orbital state e_0 is
  "100" (index 4), e_2 is "001" (index 1).
* Reshaping a 2^N amplitude array to shape (2,)*N makes tensor axis j
  address qubit j.

The gate set is exactly the four gates the protocol needs:

* ``PauliX``: bit flip, used once to prepare e_0.
* ``Hadamard``: X-basis rotation (H Z H = X).
* ``SdgH``: S-dagger followed by Hadamard, matrix C = H S+,
  C = (1/sqrt 2) [[1, -i], [1, i]].  Satisfies C+ Z C = Y, i.e. it maps the
  Y eigenbasis to the computational basis.
* ``GivensBlock(theta, phi)`` on a qubit pair (a, b), in the local basis
  (|00>, |01>, |10>, |11>) of (q_a, q_b):

      [[1,      0,                 0,              0],
       [0,      cos(theta/2),      e^{i phi} sin(theta/2), 0],
       [0, -e^{-i phi} sin(theta/2), cos(theta/2),        0],
       [0,      0,                 0,              1]]

  It is unitary, acts as identity on |00> and |11>, and therefore conserves
  Hamming weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CircuitError

__all__ = [
    "StateVector",
    "Gate",
    "Circuit",
    "AnsatzParams",
    "ShotCounts",
    "zero_state",
    "pauli_x",
    "hadamard",
    "sdg_h",
    "givens_block",
    "build_ansatz",
    "apply_circuit",
    "sample",
    "exact_distribution",
    "params_for_amplitudes",
]

_SQRT_HALF = 1.0 / math.sqrt(2.0)

H_MATRIX = np.array([[_SQRT_HALF, _SQRT_HALF], [_SQRT_HALF, -_SQRT_HALF]], dtype=complex)
X_MATRIX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
# H @ diag(1, -i): apply S-dagger first, then H.
SDG_H_MATRIX = H_MATRIX @ np.diag([1.0, -1.0j])


def givens_matrix(theta: float, phi: float) -> np.ndarray:
    c = math.cos(0.5 * theta)
    s = math.sin(0.5 * theta)
    ephi = complex(math.cos(phi), math.sin(phi))
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, c, ephi * s, 0.0],
            [0.0, -np.conj(ephi) * s, c, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
        dtype=complex,
    )


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state on ``n_qubits`` qubits (norm checked to 1e-10)."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (1 << self.n_qubits,):
            raise CircuitError(
                f"amplitude array of shape {amps.shape} does not match "
                f"{self.n_qubits} qubits"
            )
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > 1e-10:
            raise CircuitError(f"state is not normalized (norm {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class Gate:
    """One gate: ``kind`` in {'x', 'h', 'sdg_h', 'givens'}, its target
    qubits, and for the Givens block the two angles."""

    kind: str
    targets: tuple[int, ...]
    params: tuple[float, ...] = ()


def pauli_x(qubit: int) -> Gate:
    return Gate("x", (qubit,))


def hadamard(qubit: int) -> Gate:
    return Gate("h", (qubit,))


def sdg_h(qubit: int) -> Gate:
    return Gate("sdg_h", (qubit,))


def givens_block(theta: float, phi: float, a: int, b: int) -> Gate:
    return Gate("givens", (a, b), (float(theta), float(phi)))


_GATE_ARITY = {"x": 1, "h": 1, "sdg_h": 1, "givens": 2}


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...]

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise CircuitError("circuit needs at least one qubit")
        for g in self.gates:
            arity = _GATE_ARITY.get(g.kind)
            if arity is None:
                raise CircuitError(f"unknown gate kind {g.kind!r}")
            if len(g.targets) != arity:
                raise CircuitError(f"gate {g.kind} expects {arity} target(s)")
            if len(set(g.targets)) != len(g.targets):
                raise CircuitError(f"gate {g.kind} targets must be distinct")
            for q in g.targets:
                if not 0 <= q < self.n_qubits:
                    raise CircuitError(
                        f"gate {g.kind} target {q} outside 0..{self.n_qubits - 1}"
                    )
            if g.kind == "givens" and len(g.params) != 2:
                raise CircuitError("givens gate needs (theta, phi)")

    def extended(self, gates) -> "Circuit":
        return Circuit(self.n_qubits, self.gates + tuple(gates))


@dataclass(frozen=True)
class AnsatzParams:
    """Interleaved angle vector (theta_0, phi_0, theta_1, phi_1, ...) of
    length 2(N-1) for the N-qubit excitation-conserving chain."""

    angles: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.angles, dtype=float)
        if arr.ndim != 1 or arr.size < 2 or arr.size % 2:
            raise CircuitError(
                f"angle vector must have even length >= 2, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise CircuitError("angles must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "angles", arr)

    @property
    def n_qubits(self) -> int:
        return self.angles.size // 2 + 1


@dataclass(frozen=True)
class ShotCounts:
    """Outcome histogram: bitstring -> count, plus the shot total (counts of
    zero are omitted)."""

    counts: dict
    shots: int

    def frequency(self, outcome: str) -> float:
        return self.counts.get(outcome, 0) / self.shots


def zero_state(n_qubits: int) -> StateVector:
    amps = np.zeros(1 << n_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def build_ansatz(n_qubits: int, params) -> Circuit:
    """PauliX on qubit 0, then GivensBlock(theta_i, phi_i) on (i, i+1).

    Prepares e_0 and moves amplitude down the chain; the state stays in the
    single-excitation subspace for any angles.  Chain amplitudes:
    a_j = exp(i sum_{i<j} phi_i) * prod_{i<j} sin(theta_i/2) * cos(theta_j/2)
    (no cosine factor for j = N-1).
    """
    if not isinstance(params, AnsatzParams):
        params = AnsatzParams(np.asarray(params, dtype=float))
    if params.n_qubits != n_qubits:
        raise CircuitError(
            f"{params.angles.size} angles imply {params.n_qubits} qubits, "
            f"requested {n_qubits}"
        )
    gates = [pauli_x(0)]
    for i in range(n_qubits - 1):
        theta = float(params.angles[2 * i])
        phi = float(params.angles[2 * i + 1])
        gates.append(givens_block(theta, phi, i, i + 1))
    return Circuit(n_qubits, tuple(gates))


def _apply_one(psi: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    res = np.tensordot(u, psi, axes=([1], [q]))
    return np.moveaxis(res, 0, q)


def _apply_two(psi: np.ndarray, u4: np.ndarray, a: int, b: int, n: int) -> np.ndarray:
    u = u4.reshape(2, 2, 2, 2)
    res = np.tensordot(u, psi, axes=([2, 3], [a, b]))
    return np.moveaxis(res, [0, 1], [a, b])


def apply_circuit(state: StateVector, circuit: Circuit) -> StateVector:
    """Apply every gate in order and return the new state."""
    if state.n_qubits != circuit.n_qubits:
        raise CircuitError(
            f"state on {state.n_qubits} qubits, circuit on {circuit.n_qubits}"
        )
    n = circuit.n_qubits
    psi = state.amplitudes.reshape((2,) * n).copy()
    for g in circuit.gates:
        if g.kind == "x":
            psi = _apply_one(psi, X_MATRIX, g.targets[0], n)
        elif g.kind == "h":
            psi = _apply_one(psi, H_MATRIX, g.targets[0], n)
        elif g.kind == "sdg_h":
            psi = _apply_one(psi, SDG_H_MATRIX, g.targets[0], n)
        else:
            u = givens_matrix(*g.params)
            psi = _apply_two(psi, u, g.targets[0], g.targets[1], n)
    return StateVector(n, psi.reshape(-1))


def _resolve_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_counts_array(state: StateVector, shots: int, seed) -> np.ndarray:
    """Multinomial outcome counts as a dense array over all 2^N indices.

    Equivalent to ``shots`` independent draws from the exact distribution.
    """
    if shots < 1:
        raise CircuitError("shots must be positive")
    rng = _resolve_rng(seed)
    probs = state.probabilities()
    probs = probs / probs.sum()
    return rng.multinomial(shots, probs)


def bitstring(index: int, n_qubits: int) -> str:
    return format(index, f"0{n_qubits}b")


def sample(state: StateVector, shots: int, seed) -> ShotCounts:
    """Sample measurement outcomes in the computational basis."""
    arr = sample_counts_array(state, shots, seed)
    n = state.n_qubits
    counts = {
        bitstring(i, n): int(c) for i, c in enumerate(arr) if c > 0
    }
    return ShotCounts(counts, shots)


def exact_distribution(state: StateVector) -> dict:
    """Exact outcome probabilities, entries below 1e-15 omitted."""
    n = state.n_qubits
    probs = state.probabilities()
    return {
        bitstring(i, n): float(p) for i, p in enumerate(probs) if p >= 1e-15
    }


def params_for_amplitudes(target) -> np.ndarray:
    """Invert the ansatz: angles whose chain state has the given orbital
    amplitudes, up to a global phase.

    Works for any normalized target, including ones with zero entries
    (an interior zero comes out as theta = pi, an all-zero tail as
    theta = 0 at the preceding block).
    """
    t = np.asarray(target, dtype=complex)
    if t.ndim != 1 or t.size < 2:
        raise CircuitError("target must be a vector of at least two amplitudes")
    norm = float(np.linalg.norm(t))
    if norm < 1e-12:
        raise CircuitError("target must be nonzero")
    t = t / norm
    n = t.size
    mags = np.abs(t)
    # residual weight from position j downward
    res = np.sqrt(np.cumsum((mags**2)[::-1])[::-1])
    thetas = np.empty(n - 1)
    for j in range(n - 1):
        if res[j] < 1e-15:
            thetas[j] = 0.0
            continue
        c = min(1.0, mags[j] / res[j])
        thetas[j] = 2.0 * math.acos(c)
    # cumulative phases: a_j carries exp(i sum_{i<j} phi_i); zero-amplitude
    # positions inherit the previous cumulative phase (their own is moot)
    psi = np.angle(t)
    cum = np.empty(n)
    last = 0.0
    for j in range(n):
        cum[j] = psi[j] if mags[j] > 1e-15 else last
        last = cum[j]
    phis = np.diff(cum)
    angles = np.empty(2 * (n - 1))
    angles[0::2] = thetas
    angles[1::2] = phis
    return angles
