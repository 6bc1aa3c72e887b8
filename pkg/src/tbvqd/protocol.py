"""The constant three-setting measurement protocol.

For a single-excitation trial state with orbital amplitudes a_j, every
quantity the variational loop needs comes out of at most three measurement
settings, independent of qubit count:

* ``M_Z``: measure the trial circuit as is.  Outcome frequencies of the
  weight-1 strings e_j estimate |a_j|^2; everything else is leakage.
* ``M_XX``: Hadamard on every kept qubit, then measure.  The two-point
  parity of a kept pair estimates <X_j X_l> = Re C_jl.
* ``M_XY``: alternate by compressed position over the kept qubits, Hadamard
  at even positions and SdgH at odd positions, then measure.  The parity of
  a position pair (p, q), p even and q odd, estimates <X_j Y_l>; with p odd
  it estimates <Y_j X_l> = -<X_j Y_l>.

Here C_jl = <X_j X_l> + i <X_j Y_l> = 2 conj(a_j) a_l on the single-
excitation subspace.  A pair of kept positions with equal parity is never
measured directly; it is filled in classically by one product-rule step

    C_jl = C_jk C_kl / (2 |a_k|^2)

through an intermediate k of opposite compressed parity, which always exists
for m >= 3 and is chosen as the kept index with the largest |a_k|^2.

Compression: indices declared zero after ``M_Z`` (exact zeros in analytic
mode, below-threshold in shot mode) are dropped; the kept indices in
ascending order form the compressed set, and parity means parity of the
position within that set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError
from .model import BlochMatrix
from .simulator import (
    Circuit,
    StateVector,
    apply_circuit,
    hadamard,
    sample_counts_array,
    sdg_h,
    zero_state,
)

__all__ = [
    "AmplitudeEstimate",
    "CompressedIndexSet",
    "CorrelatorSet",
    "MeasurementSetting",
    "ProtocolResult",
    "ThreeSettingProtocol",
    "measure_z",
    "compress",
    "build_setting",
    "estimate_pair_parity",
    "correlators_direct",
    "product_rule",
    "fill_same_parity",
    "cost_function",
    "reconstruct_state",
]

PROVENANCE_DIRECT = "direct"
PROVENANCE_PRODUCT = "product_rule"
PROVENANCE_ZERO = "zero"

# Default fraction of trial-state weight allowed outside the single-
# excitation subspace before the run aborts.
DEFAULT_LEAKAGE_LIMIT = 0.01


@dataclass(frozen=True)
class AmplitudeEstimate:
    """|a_j|^2 estimates from the Z setting.

    ``probabilities`` holds zeros at the declared-zero indices; ``leakage``
    is the measured weight on strings of Hamming weight != 1.  ``shots`` is
    None for analytic estimates.
    """

    probabilities: np.ndarray
    zero_set: frozenset
    leakage: float
    shots: int | None

    def __post_init__(self) -> None:
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ProtocolError("probabilities must be a vector")
        if p.min(initial=0.0) < 0.0:
            raise ProtocolError("negative probability estimate")
        if p.sum() + self.leakage > 1.0 + 1e-9:
            raise ProtocolError("probabilities plus leakage exceed one")
        for z in self.zero_set:
            if not (0 <= z < p.size):
                raise ProtocolError(f"zero index {z} out of range")
            if p[z] != 0.0:
                raise ProtocolError(f"index {z} is declared zero but carries weight")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @property
    def n_orbitals(self) -> int:
        return self.probabilities.size

    @property
    def magnitudes(self) -> np.ndarray:
        return np.sqrt(self.probabilities)


@dataclass(frozen=True)
class CompressedIndexSet:
    """Kept orbital indices, ascending; parity is positional within ``kept``."""

    kept: tuple[int, ...]
    n_orbitals: int

    def __post_init__(self) -> None:
        if list(self.kept) != sorted(set(self.kept)):
            raise ProtocolError("kept indices must be strictly ascending")
        if self.kept and not (0 <= self.kept[0] and self.kept[-1] < self.n_orbitals):
            raise ProtocolError("kept index out of range")

    @property
    def m(self) -> int:
        return len(self.kept)

    def position(self, j: int) -> int:
        try:
            return self.kept.index(j)
        except ValueError:
            raise ProtocolError(f"orbital {j} is not in the compressed set") from None

    def parity(self, j: int) -> int:
        return self.position(j) % 2


class CorrelatorSet:
    """Pair correlators C_jl for j < l with per-pair provenance.

    Reading a reversed pair returns the conjugate (C_lj = conj C_jl).
    ``clip_deviation`` records the largest magnitude shaved off by the
    statistical clipping step, for run metadata.
    """

    def __init__(self, n_orbitals: int):
        self.n_orbitals = n_orbitals
        self._values: dict[tuple[int, int], complex] = {}
        self._provenance: dict[tuple[int, int], str] = {}
        self.clip_deviation = 0.0

    def _check(self, j: int, l: int) -> None:
        if j == l or not (0 <= j < self.n_orbitals and 0 <= l < self.n_orbitals):
            raise ProtocolError(f"invalid pair ({j}, {l})")

    def set_pair(self, j: int, l: int, value: complex, provenance: str) -> None:
        self._check(j, l)
        if j > l:
            j, l, value = l, j, np.conj(value)
        self._values[(j, l)] = complex(value)
        self._provenance[(j, l)] = provenance

    def has(self, j: int, l: int) -> bool:
        self._check(j, l)
        return (min(j, l), max(j, l)) in self._values

    def get(self, j: int, l: int) -> complex:
        self._check(j, l)
        key = (min(j, l), max(j, l))
        if key not in self._values:
            raise ProtocolError(f"correlator ({j}, {l}) has not been estimated")
        v = self._values[key]
        return v if j < l else complex(np.conj(v))

    def provenance(self, j: int, l: int) -> str:
        self._check(j, l)
        key = (min(j, l), max(j, l))
        if key not in self._provenance:
            raise ProtocolError(f"correlator ({j}, {l}) has not been estimated")
        return self._provenance[key]

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self._values)

    def __len__(self) -> int:
        return len(self._values)


@dataclass(frozen=True)
class MeasurementSetting:
    """One of the protocol's settings: its name and the rotation circuit
    appended to the trial circuit before the computational-basis readout."""

    kind: str
    rotation: Circuit


@dataclass(frozen=True)
class ProtocolResult:
    """Everything one protocol run produced for a single trial circuit."""

    amplitudes: AmplitudeEstimate
    compressed: CompressedIndexSet
    correlators: CorrelatorSet
    settings: tuple[MeasurementSetting, ...]
    shots: int | None
    clip_deviation: float


def _basis_indices(n: int) -> np.ndarray:
    """Basis index of e_j for j = 0..n-1 (qubit 0 is the most significant bit)."""
    return np.array([1 << (n - 1 - j) for j in range(n)], dtype=np.int64)


def _estimate_from_probs(
    probs_full: np.ndarray,
    n: int,
    shots: int | None,
    zero_threshold: float | None,
) -> AmplitudeEstimate:
    p = probs_full[_basis_indices(n)].astype(float).copy()
    leakage = max(0.0, 1.0 - float(p.sum()))
    if zero_threshold is None:
        zero_threshold = 1e-15 if shots is None else 1e-3 / n
    zero = {j for j in range(n) if p[j] < zero_threshold}
    p[list(zero)] = 0.0
    return AmplitudeEstimate(p, frozenset(zero), leakage, shots)


def measure_z(
    circuit: Circuit,
    shots: int | None = None,
    seed=None,
    *,
    zero_threshold: float | None = None,
) -> AmplitudeEstimate:
    """Run the Z setting on a trial circuit.

    ``shots=None`` uses the exact distribution (zero threshold 1e-15);
    otherwise outcomes are sampled and the default threshold is 1e-3 / N on
    |a_j|^2 (an index with zero observed counts is always declared zero).
    """
    state = apply_circuit(zero_state(circuit.n_qubits), circuit)
    if shots is None:
        probs = state.probabilities()
    else:
        probs = sample_counts_array(state, shots, seed) / shots
    return _estimate_from_probs(probs, circuit.n_qubits, shots, zero_threshold)


def compress(amps: AmplitudeEstimate) -> CompressedIndexSet:
    """Drop the declared-zero indices; kept indices ascending."""
    kept = tuple(j for j in range(amps.n_orbitals) if j not in amps.zero_set)
    return CompressedIndexSet(kept, amps.n_orbitals)


def build_setting(kind: str, compressed: CompressedIndexSet, n_qubits: int) -> Circuit:
    """Rotation circuit of a setting; gates act only on kept qubits."""
    if kind == "Z":
        return Circuit(n_qubits, ())
    if kind not in ("XX", "XY"):
        raise ProtocolError(f"unknown setting kind {kind!r}")
    if compressed.m < 2:
        raise ProtocolError(f"setting {kind} needs at least two kept qubits")
    gates = []
    for pos, j in enumerate(compressed.kept):
        if kind == "XX" or pos % 2 == 0:
            gates.append(hadamard(j))
        else:
            gates.append(sdg_h(j))
    return Circuit(n_qubits, tuple(gates))


def _counts_total(counts) -> tuple[dict, float]:
    from .simulator import ShotCounts  # local: avoid polluting module surface

    if isinstance(counts, ShotCounts):
        return counts.counts, float(counts.shots)
    if isinstance(counts, dict):
        total = float(sum(counts.values()))
        if total <= 0:
            raise ProtocolError("empty counts")
        return counts, total
    raise ProtocolError(f"unsupported counts object {type(counts).__name__}")


def estimate_pair_parity(counts, j: int, l: int) -> float:
    """Two-point parity sum_b freq(b) (-1)^(b_j + b_l) from a histogram.

    Accepts ``ShotCounts`` or any outcome->weight mapping (weights are
    normalized by their sum, so exact distributions work too).
    """
    mapping, total = _counts_total(counts)
    if j == l:
        raise ProtocolError("parity needs two distinct qubits")
    acc = 0.0
    for outcome, weight in mapping.items():
        if not (0 <= j < len(outcome) and 0 <= l < len(outcome)):
            raise ProtocolError(f"pair ({j}, {l}) outside outcome width {len(outcome)}")
        sign = -1.0 if (outcome[j] != outcome[l]) else 1.0
        acc += sign * weight
    return acc / total


def parity_matrix(probs_full: np.ndarray, n_qubits: int) -> np.ndarray:
    """All two-point parities at once from a dense outcome distribution.

    Entry (j, l) equals ``estimate_pair_parity`` of the same data; the
    diagonal is the total weight.
    """
    probs = np.asarray(probs_full, dtype=float)
    if probs.shape != (1 << n_qubits,):
        raise ProtocolError("distribution length does not match qubit count")
    b = np.arange(1 << n_qubits, dtype=np.uint64)
    shifts = np.array([n_qubits - 1 - j for j in range(n_qubits)], dtype=np.uint64)
    bits = (b[None, :] >> shifts[:, None]) & np.uint64(1)
    signs = 1.0 - 2.0 * bits.astype(float)
    total = probs.sum()
    return (signs * probs[None, :]) @ signs.T / total


def _assemble_direct(
    amps: AmplitudeEstimate,
    compressed: CompressedIndexSet,
    parity_xx,
    parity_xy,
    clip: bool,
    xy_sign: float,
) -> CorrelatorSet:
    """Shared direct-pair assembly; parity_xx/parity_xy are (j, l) -> float."""
    n = amps.n_orbitals
    cset = CorrelatorSet(n)
    mags = amps.magnitudes
    for j in range(n):
        for l in range(j + 1, n):
            if j in amps.zero_set or l in amps.zero_set:
                cset.set_pair(j, l, 0.0, PROVENANCE_ZERO)
    kept = compressed.kept
    for p in range(len(kept)):
        for q in range(p + 1, len(kept)):
            if (p + q) % 2 == 0:
                continue
            j, l = kept[p], kept[q]
            re = float(parity_xx(j, l))
            xy = float(parity_xy(j, l)) * xy_sign
            # the XY pattern realizes <X_j Y_l> when j sits at an even
            # position; at an odd position it realizes <Y_j X_l> = -<X_j Y_l>
            im = xy if p % 2 == 0 else -xy
            value = complex(re, im)
            if clip:
                bound = 2.0 * mags[j] * mags[l]
                mag = abs(value)
                if mag > bound:
                    cset.clip_deviation = max(cset.clip_deviation, mag - bound)
                    value = value * (bound / mag) if mag > 0 else 0.0
            cset.set_pair(j, l, value, PROVENANCE_DIRECT)
    return cset


def correlators_direct(
    amps: AmplitudeEstimate,
    counts_xx,
    counts_xy,
    compressed: CompressedIndexSet | None = None,
    *,
    clip: bool = True,
    _xy_sign: float = 1.0,
) -> CorrelatorSet:
    """Direct correlators for all opposite-parity kept pairs from the XX and
    XY histograms, plus zero entries for every pair touching a dropped index.

    Estimates are clipped to |C_jl| <= 2 |a_j||a_l| (the exact bound on the
    single-excitation subspace) unless ``clip`` is disabled; the shaved
    magnitude is recorded on the returned set.
    """
    if compressed is None:
        compressed = compress(amps)
    if compressed.m >= 2 and (counts_xx is None or counts_xy is None):
        raise ProtocolError("XX and XY histograms are required when m >= 2")

    def pxx(j, l):
        return estimate_pair_parity(counts_xx, j, l)

    def pxy(j, l):
        return estimate_pair_parity(counts_xy, j, l)

    return _assemble_direct(amps, compressed, pxx, pxy, clip, _xy_sign)


def product_rule(cset: CorrelatorSet, amps: AmplitudeEstimate, j: int, l: int) -> complex:
    """Fill one same-parity pair through an opposite-parity intermediate:

        C_jl = C_jk C_kl / (2 |a_k|^2)

    The intermediate is the kept index of opposite compressed parity with
    the largest |a_k|^2; one always exists when the pair's positions differ
    by at least two, which same parity guarantees for m >= 3.  Clipped
    inputs keep the output within 2 |a_j||a_l| automatically.
    """
    compressed = compress(amps)
    p = compressed.position(j)
    q = compressed.position(l)
    if p % 2 != q % 2:
        raise ProtocolError(
            f"pair ({j}, {l}) has opposite compressed parities; measure it directly"
        )
    candidates = [
        k for pos, k in enumerate(compressed.kept) if pos % 2 != p % 2
    ]
    if not candidates:
        raise ProtocolError(f"no opposite-parity intermediate for pair ({j}, {l})")
    probs = amps.probabilities
    k = max(candidates, key=lambda idx: probs[idx])
    value = cset.get(j, k) * cset.get(k, l) / (2.0 * probs[k])
    cset.set_pair(j, l, value, PROVENANCE_PRODUCT)
    return complex(value)


def fill_same_parity(cset: CorrelatorSet, amps: AmplitudeEstimate) -> None:
    """Apply the product rule to every same-parity kept pair."""
    compressed = compress(amps)
    kept = compressed.kept
    for p in range(len(kept)):
        for q in range(p + 1, len(kept)):
            if (p + q) % 2 == 1:
                continue
            product_rule(cset, amps, kept[p], kept[q])


def cost_function(
    onsite: np.ndarray,
    hk,
    amps: AmplitudeEstimate,
    cset: CorrelatorSet,
) -> float:
    """Energy estimate E = sum_j eps_j |a_j|^2 + sum_{j<l} Re{C_jl H_jl}.

    Pairs touching a declared-zero index contribute nothing; a kept pair
    with |H_jl| > 0 and no stored correlator is an error.
    """
    H = hk.matrix if isinstance(hk, BlochMatrix) else np.asarray(hk)
    n = amps.n_orbitals
    if H.shape != (n, n):
        raise ProtocolError("Bloch matrix size does not match amplitude estimate")
    eps = np.asarray(onsite, dtype=float)
    if eps.shape != (n,):
        raise ProtocolError("on-site vector size does not match amplitude estimate")
    energy = float(eps @ amps.probabilities)
    for j in range(n):
        for l in range(j + 1, n):
            if j in amps.zero_set or l in amps.zero_set:
                continue
            hjl = H[j, l]
            if cset.has(j, l):
                energy += (cset.get(j, l) * hjl).real
            elif abs(hjl) > 1e-15:
                raise ProtocolError(
                    f"kept pair ({j}, {l}) has no correlator but H_jl is nonzero"
                )
    return energy


def reconstruct_state(amps: AmplitudeEstimate, cset: CorrelatorSet) -> np.ndarray:
    """Classical single-excitation state from the protocol data.

    Magnitudes come from the Z setting; the phase of each kept amplitude is
    the phase of C_rl against the reference r = argmax |a_j|^2, whose own
    phase is fixed to zero.  Zero indices stay exactly zero.
    """
    if len(amps.zero_set) == amps.n_orbitals:
        raise ProtocolError("cannot reconstruct a state with no kept amplitude")
    probs = amps.probabilities
    mags = amps.magnitudes
    r = int(np.argmax(probs))
    out = np.zeros(amps.n_orbitals, dtype=complex)
    out[r] = mags[r]
    for l in range(amps.n_orbitals):
        if l == r or l in amps.zero_set:
            continue
        phase = np.angle(cset.get(r, l))
        out[l] = mags[l] * complex(math.cos(phase), math.sin(phase))
    return out


class ThreeSettingProtocol:
    """Driver that runs the whole protocol for one trial circuit.

    ``shots=None`` runs analytically on exact distributions; otherwise each
    setting is sampled with ``shots`` draws using seeds derived from the
    ``seed`` passed to :meth:`run`.  A run aborts when leakage exceeds
    ``leakage_limit``.

    ``_xy_sign`` is a validation fixture: the validate command flips it to
    -1 to prove the antisymmetry check catches a corrupted XY estimator.
    It multiplies the XY-setting parities and must stay +1.0 otherwise.
    """

    def __init__(
        self,
        n_qubits: int,
        shots: int | None = None,
        *,
        zero_threshold: float | None = None,
        leakage_limit: float = DEFAULT_LEAKAGE_LIMIT,
        clip: bool = True,
        _xy_sign: float = 1.0,
    ):
        if n_qubits < 2:
            raise ProtocolError("the protocol needs at least two orbitals")
        if shots is not None and shots < 1:
            raise ProtocolError("shots must be positive (or None for analytic)")
        self.n_qubits = n_qubits
        self.shots = shots
        self.zero_threshold = zero_threshold
        self.leakage_limit = leakage_limit
        self.clip = clip
        self._xy_sign = _xy_sign

    def _setting_probs(self, state: StateVector, rotation: Circuit, seed) -> np.ndarray:
        rotated = apply_circuit(state, rotation) if rotation.gates else state
        if self.shots is None:
            return rotated.probabilities()
        return sample_counts_array(rotated, self.shots, seed) / self.shots

    def run(self, circuit: Circuit, seed=None) -> ProtocolResult:
        n = self.n_qubits
        if circuit.n_qubits != n:
            raise ProtocolError(
                f"circuit on {circuit.n_qubits} qubits, protocol on {n}"
            )
        if self.shots is not None:
            ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
            z_seed, xx_seed, xy_seed = [np.random.default_rng(c) for c in ss.spawn(3)]
        else:
            z_seed = xx_seed = xy_seed = None

        state = apply_circuit(zero_state(n), circuit)
        z_setting = MeasurementSetting("Z", Circuit(n, ()))
        z_probs = self._setting_probs(state, z_setting.rotation, z_seed)
        amps = _estimate_from_probs(z_probs, n, self.shots, self.zero_threshold)
        if amps.leakage > self.leakage_limit:
            raise ProtocolError(
                f"leakage {amps.leakage:.4f} exceeds limit {self.leakage_limit}"
            )
        compressed = compress(amps)
        settings = [z_setting]

        if compressed.m >= 2:
            xx_setting = MeasurementSetting("XX", build_setting("XX", compressed, n))
            xy_setting = MeasurementSetting("XY", build_setting("XY", compressed, n))
            xx_probs = self._setting_probs(state, xx_setting.rotation, xx_seed)
            xy_probs = self._setting_probs(state, xy_setting.rotation, xy_seed)
            pxx = parity_matrix(xx_probs, n)
            pxy = parity_matrix(xy_probs, n)
            cset = _assemble_direct(
                amps,
                compressed,
                lambda j, l: pxx[j, l],
                lambda j, l: pxy[j, l],
                self.clip,
                self._xy_sign,
            )
            fill_same_parity(cset, amps)
            settings += [xx_setting, xy_setting]
        else:
            cset = CorrelatorSet(n)
            for j in range(n):
                for l in range(j + 1, n):
                    if j in amps.zero_set or l in amps.zero_set:
                        cset.set_pair(j, l, 0.0, PROVENANCE_ZERO)

        return ProtocolResult(
            amplitudes=amps,
            compressed=compressed,
            correlators=cset,
            settings=tuple(settings),
            shots=self.shots,
            clip_deviation=cset.clip_deviation,
        )

    def energy(self, circuit: Circuit, bloch: BlochMatrix, seed=None) -> tuple[float, ProtocolResult]:
        """Protocol cost (raw estimator) of a trial circuit at one k."""
        result = self.run(circuit, seed)
        e = cost_function(bloch.onsite, bloch, result.amplitudes, result.correlators)
        return e, result
