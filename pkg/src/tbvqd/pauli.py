"""Mapping of Bloch matrices onto qubit operators, one qubit per orbital.

An orbital basis state e_j maps to the computational state with a single 1 at
qubit j (qubit 0 is the leftmost / most significant position).  The N x N
Bloch matrix H becomes the 2^N x 2^N operator

    H_q = sum_j eps_j (I - Z_j)/2
        + sum_{j<l} Re{H_jl} (X_j X_l + Y_j Y_l)/2
        + sum_{j<l} Im{H_jl} (Y_j X_l - X_j Y_l)/2

whose restriction to the single-excitation subspace reproduces H exactly:
<e_j| H_q |e_l> = H_jl.  That block identity is the correctness contract for
everything downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TbvqdError
from .model import BlochMatrix

__all__ = [
    "PauliString",
    "QubitHamiltonian",
    "QwcGroup",
    "QwcGrouping",
    "qubit_hamiltonian",
    "qwc_groups_conventional",
    "dense_matrix",
    "apply_pauli_string",
    "pauli_expectation",
    "dump_lines",
]

# Coefficients below this magnitude are treated as structural zeros and the
# corresponding term is not emitted.
_COEFF_CUTOFF = 1e-14

# Dense construction refuses above this qubit count (2^14 x 2^14 complex is
# already 4 GiB).
_DENSE_MAX_QUBITS = 14


@dataclass(frozen=True)
class PauliString:
    """One tensor-product term: ``letters`` over {I, X, Y, Z}, one per qubit,
    qubit 0 leftmost, times ``coefficient``."""

    letters: str
    coefficient: complex

    def __post_init__(self) -> None:
        if not self.letters or any(c not in "IXYZ" for c in self.letters):
            raise TbvqdError(f"invalid Pauli letters {self.letters!r}")

    @property
    def n_qubits(self) -> int:
        return len(self.letters)


def _term_structure(letters: str) -> str:
    """Classify a term: 'Z' (single Z), '2' (two of X/Y), or '' otherwise."""
    z = [c for c in letters if c == "Z"]
    xy = [c for c in letters if c in "XY"]
    if len(z) == 1 and not xy:
        return "Z"
    if len(xy) == 2 and not z:
        return "2"
    return ""


@dataclass(frozen=True)
class QubitHamiltonian:
    """A real-coefficient Pauli-sum Hamiltonian plus an identity offset.

    Construction checks the structure produced by the orbital mapping: every
    term is either a single Z or exactly two letters from {X, Y} on distinct
    qubits, with a real coefficient (imaginary part below 1e-12).
    """

    n_qubits: int
    terms: tuple[PauliString, ...]
    offset: float

    def __post_init__(self) -> None:
        for t in self.terms:
            if t.n_qubits != self.n_qubits:
                raise TbvqdError("term length does not match qubit count")
            if abs(complex(t.coefficient).imag) > 1e-12:
                raise TbvqdError(f"non-real coefficient on {t.letters}")
            if not _term_structure(t.letters):
                raise TbvqdError(f"unexpected term structure {t.letters}")


@dataclass(frozen=True)
class QwcGroup:
    """Terms measurable together.  ``basis`` assigns one measurement basis
    letter per qubit ('Z' means no pre-rotation); every member's non-identity
    letters agree with it position by position."""

    basis: str
    members: tuple[PauliString, ...]


@dataclass(frozen=True)
class QwcGrouping:
    groups: tuple[QwcGroup, ...]

    def __len__(self) -> int:
        return len(self.groups)


def qubit_hamiltonian(bloch: BlochMatrix) -> QubitHamiltonian:
    """Map a Bloch matrix onto qubit operators (module docstring formula).

    The Bloch diagonal supplies the on-site vector.  Terms with coefficients
    below 1e-14 are dropped; the identity offset sum_j eps_j / 2 is kept
    separately and never enters measurement.
    """
    H = bloch.matrix
    n = bloch.n_orbitals
    eps = bloch.onsite
    terms: list[PauliString] = []

    def letters(assign: dict[int, str]) -> str:
        return "".join(assign.get(q, "I") for q in range(n))

    for j in range(n):
        c = -0.5 * eps[j]
        if abs(c) > _COEFF_CUTOFF:
            terms.append(PauliString(letters({j: "Z"}), c))
    for j in range(n):
        for l in range(j + 1, n):
            re = 0.5 * H[j, l].real
            im = 0.5 * H[j, l].imag
            if abs(re) > _COEFF_CUTOFF:
                terms.append(PauliString(letters({j: "X", l: "X"}), re))
                terms.append(PauliString(letters({j: "Y", l: "Y"}), re))
            if abs(im) > _COEFF_CUTOFF:
                terms.append(PauliString(letters({j: "Y", l: "X"}), im))
                terms.append(PauliString(letters({j: "X", l: "Y"}), -im))
    return QubitHamiltonian(n, tuple(terms), 0.5 * float(eps.sum()))


def qwc_groups_conventional(ham: QubitHamiltonian) -> QwcGrouping:
    """Fixed-role qubit-wise-commuting grouping used as the baseline.

    Groups, in stable order, empty ones dropped:
      all-Z; all-X (XX terms); all-Y (YY terms); then for each j from 0 to
      N-2 the group {X_j Y_l : l > j} with basis X at j / Y elsewhere, and
      {Y_j X_l : l > j} with basis Y at j / X elsewhere.

    For a Hamiltonian with all term types present this yields 2N + 1 groups.
    """
    n = ham.n_qubits
    z_members, xx_members, yy_members = [], [], []
    xy_members: list[list[PauliString]] = [[] for _ in range(n)]
    yx_members: list[list[PauliString]] = [[] for _ in range(n)]
    for t in ham.terms:
        support = [(q, c) for q, c in enumerate(t.letters) if c != "I"]
        if _term_structure(t.letters) == "Z":
            z_members.append(t)
            continue
        (qa, ca), (qb, cb) = support
        if ca == cb == "X":
            xx_members.append(t)
        elif ca == cb == "Y":
            yy_members.append(t)
        elif ca == "X":  # X_j Y_l with j < l
            xy_members[qa].append(t)
        else:  # Y_j X_l with j < l
            yx_members[qa].append(t)

    groups: list[QwcGroup] = []
    if z_members:
        groups.append(QwcGroup("Z" * n, tuple(z_members)))
    if xx_members:
        groups.append(QwcGroup("X" * n, tuple(xx_members)))
    if yy_members:
        groups.append(QwcGroup("Y" * n, tuple(yy_members)))
    for j in range(n):
        if xy_members[j]:
            basis = "".join("X" if q == j else "Y" for q in range(n))
            groups.append(QwcGroup(basis, tuple(xy_members[j])))
        if yx_members[j]:
            basis = "".join("Y" if q == j else "X" for q in range(n))
            groups.append(QwcGroup(basis, tuple(yx_members[j])))
    return QwcGrouping(tuple(groups))


def _masks(letters: str) -> tuple[int, int, int]:
    """Bit masks for the string: (flip mask, sign mask, number of Y).

    Qubit j occupies bit N-1-j, so integer basis indices read the same way
    as outcome strings.
    """
    n = len(letters)
    xmask = zmask = ny = 0
    for j, c in enumerate(letters):
        bit = 1 << (n - 1 - j)
        if c in "XY":
            xmask |= bit
        if c in "ZY":
            zmask |= bit
        if c == "Y":
            ny += 1
    return xmask, zmask, ny


def apply_pauli_string(amplitudes: np.ndarray, letters: str) -> np.ndarray:
    """Apply a Pauli string to a statevector without building the matrix.

    P|b> = i^{n_Y} (-1)^{popcount(b & zmask)} |b ^ xmask>.
    """
    amps = np.asarray(amplitudes)
    n = len(letters)
    if amps.shape != (1 << n,):
        raise TbvqdError(
            f"statevector length {amps.shape} does not match {n} qubits"
        )
    xmask, zmask, ny = _masks(letters)
    b = np.arange(1 << n, dtype=np.uint64)
    signs = 1.0 - 2.0 * (np.bitwise_count(b & np.uint64(zmask)) & 1)
    out = np.empty_like(amps, dtype=complex)
    out[b ^ np.uint64(xmask)] = (1j**ny) * signs * amps
    return out


def pauli_expectation(amplitudes: np.ndarray, letters: str) -> complex:
    """<psi| P |psi> via the matrix-free application above."""
    amps = np.asarray(amplitudes, dtype=complex)
    return complex(np.vdot(amps, apply_pauli_string(amps, letters)))


def dense_matrix(ham: QubitHamiltonian) -> np.ndarray:
    """Full 2^N x 2^N matrix of the Hamiltonian, offset included.

    Refuses above 14 qubits; each term is a signed permutation, assembled
    column-wise.
    """
    n = ham.n_qubits
    if n > _DENSE_MAX_QUBITS:
        raise TbvqdError(
            f"dense matrix for {n} qubits exceeds the {_DENSE_MAX_QUBITS}-qubit guard"
        )
    dim = 1 << n
    M = np.zeros((dim, dim), dtype=complex)
    b = np.arange(dim, dtype=np.uint64)
    for t in ham.terms:
        xmask, zmask, ny = _masks(t.letters)
        signs = 1.0 - 2.0 * (np.bitwise_count(b & np.uint64(zmask)) & 1)
        M[b ^ np.uint64(xmask), b] += t.coefficient * (1j**ny) * signs
    M[np.diag_indices(dim)] += ham.offset
    return M


def dump_lines(ham: QubitHamiltonian) -> list[str]:
    """Human-readable term listing for debugging output."""
    lines = [f"offset {ham.offset:+.12g}"]
    for t in ham.terms:
        lines.append(f"{complex(t.coefficient).real:+.12g} * {t.letters}")
    return lines
