"""Self-check battery behind the ``validate`` CLI command.

Each check exercises one contract of the pipeline on randomly generated
inputs with a fixed seed and reports pass/fail with a short detail string.
The ``xy_sign`` parameter exists so the command can demonstrate that a
corrupted XY estimator is actually caught (mutation fixture); it is +1.0 in
real use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TbvqdError
from .model import BlochMatrix, KVector, exact_bands
from .pauli import apply_pauli_string, qubit_hamiltonian
from .protocol import (
    PROVENANCE_PRODUCT,
    ThreeSettingProtocol,
    parity_matrix,
)
from .simulator import (
    Circuit,
    apply_circuit,
    build_ansatz,
    hadamard,
    params_for_amplitudes,
    sdg_h,
    zero_state,
)

__all__ = ["ValidationCheck", "ValidationReport", "run_validation"]


@dataclass(frozen=True)
class ValidationCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[ValidationCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _random_bloch(rng: np.random.Generator, n: int) -> BlochMatrix:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = (a + a.conj().T) / 2.0
    return BlochMatrix(KVector(np.zeros(1), 0.0), h)


def _excitation_index(n: int, j: int) -> int:
    return 1 << (n - 1 - j)


def _apply_hamiltonian(ham, vec: np.ndarray) -> np.ndarray:
    out = ham.offset * vec.astype(complex)
    for t in ham.terms:
        out = out + t.coefficient * apply_pauli_string(vec, t.letters)
    return out


def _exact_orbital_amplitudes(circuit: Circuit) -> np.ndarray:
    state = apply_circuit(zero_state(circuit.n_qubits), circuit)
    n = circuit.n_qubits
    return np.array([state.amplitudes[_excitation_index(n, j)] for j in range(n)])


def _check_block_identity(rng, max_qubits: int, reps: int = 20) -> ValidationCheck:
    worst = 0.0
    for n in range(2, max_qubits + 1):
        for _ in range(reps):
            bloch = _random_bloch(rng, n)
            ham = qubit_hamiltonian(bloch)
            dim = 1 << n
            for l in range(n):
                e_l = np.zeros(dim, dtype=complex)
                e_l[_excitation_index(n, l)] = 1.0
                col = _apply_hamiltonian(ham, e_l)
                for j in range(n):
                    got = col[_excitation_index(n, j)]
                    worst = max(worst, abs(got - bloch.matrix[j, l]))
    return ValidationCheck(
        "single-excitation block identity",
        worst < 1e-12,
        f"max entry deviation {worst:.3e}",
    )


def _check_correlators_and_cost(rng, max_qubits: int, xy_sign: float) -> ValidationCheck:
    worst_c = 0.0
    worst_e = 0.0
    for n in range(2, max_qubits + 1):
        for _ in range(10):
            theta = rng.uniform(-np.pi, np.pi, 2 * (n - 1))
            circuit = build_ansatz(n, theta)
            amps_exact = _exact_orbital_amplitudes(circuit)
            bloch = _random_bloch(rng, n)
            protocol = ThreeSettingProtocol(n, shots=None, _xy_sign=xy_sign)
            energy, result = protocol.energy(circuit, bloch)
            for j, l in result.correlators.pairs():
                got = result.correlators.get(j, l)
                want = 2.0 * np.conj(amps_exact[j]) * amps_exact[l]
                worst_c = max(worst_c, abs(got - want))
            rayleigh = float(
                np.real(np.conj(amps_exact) @ bloch.matrix @ amps_exact)
            )
            worst_e = max(worst_e, abs(energy - rayleigh))
    return ValidationCheck(
        "analytic correlators and cost",
        worst_c < 1e-12 and worst_e < 1e-12,
        f"max correlator deviation {worst_c:.3e}, max cost deviation {worst_e:.3e}",
    )


def _check_product_provenance(rng, max_qubits: int) -> ValidationCheck:
    bad = 0
    total = 0
    for n in range(3, max_qubits + 1):
        theta = rng.uniform(-np.pi, np.pi, 2 * (n - 1))
        protocol = ThreeSettingProtocol(n, shots=None)
        result = protocol.run(build_ansatz(n, theta))
        kept = result.compressed.kept
        for a in range(len(kept)):
            for b in range(a + 1, len(kept)):
                if (a + b) % 2 == 0:
                    total += 1
                    if (
                        result.correlators.provenance(kept[a], kept[b])
                        != PROVENANCE_PRODUCT
                    ):
                        bad += 1
    return ValidationCheck(
        "same-parity pairs filled by product rule only",
        bad == 0 and total > 0,
        f"{total} same-parity pairs audited, {bad} mismatched",
    )


def _flipped_xy_rotation(compressed, n: int) -> Circuit:
    """The mirror of the XY setting: SdgH at even kept positions, H at odd."""
    gates = []
    for pos, j in enumerate(compressed.kept):
        gates.append(sdg_h(j) if pos % 2 == 0 else hadamard(j))
    return Circuit(n, tuple(gates))


def _check_antisymmetry(rng, max_qubits: int, xy_sign: float) -> ValidationCheck:
    worst = 0.0
    for n in range(2, max_qubits + 1):
        for _ in range(5):
            theta = rng.uniform(-np.pi, np.pi, 2 * (n - 1))
            circuit = build_ansatz(n, theta)
            protocol = ThreeSettingProtocol(n, shots=None, _xy_sign=xy_sign)
            result = protocol.run(circuit)
            if result.compressed.m < 2:
                continue
            state = apply_circuit(zero_state(n), circuit)
            flipped = _flipped_xy_rotation(result.compressed, n)
            ref = parity_matrix(
                apply_circuit(state, flipped).probabilities(), n
            )
            kept = result.compressed.kept
            for p in range(len(kept)):
                for q in range(p + 1, len(kept)):
                    if (p + q) % 2 == 0:
                        continue
                    j, l = kept[p], kept[q]
                    # the protocol side reads <X_j Y_l> at even p and
                    # <Y_j X_l> at odd p; the mirrored setting measures the
                    # partner expectation directly, so the two must cancel
                    im = result.correlators.get(j, l).imag
                    own = im if p % 2 == 0 else -im
                    worst = max(worst, abs(own + ref[j, l]))
    return ValidationCheck(
        "XY/YX antisymmetry",
        worst < 1e-12,
        f"max |<XY> + <YX>| = {worst:.3e}",
    )


def _check_zero_patterns(rng, max_qubits: int) -> ValidationCheck:
    if max_qubits < 4:
        return ValidationCheck(
            "planted zero patterns", True, "skipped (needs 4 qubits)"
        )
    n = 4
    worst = -1.0
    patterns = [
        {0},
        {1},
        {2},
        {3},
        {0, 1},
        {0, 2},
        {0, 3},
        {1, 2},
        {1, 3},
        {2, 3},
    ]
    for zeros in patterns:
        target = np.zeros(n, dtype=complex)
        alive = [j for j in range(n) if j not in zeros]
        vals = rng.normal(size=len(alive)) + 1j * rng.normal(size=len(alive))
        target[alive] = vals / np.linalg.norm(vals)
        circuit = build_ansatz(n, params_for_amplitudes(target))
        protocol = ThreeSettingProtocol(n, shots=None)
        bloch = _random_bloch(rng, n)
        energy, result = protocol.energy(circuit, bloch)
        if result.amplitudes.zero_set != frozenset(zeros):
            return ValidationCheck(
                "planted zero patterns",
                False,
                f"pattern {sorted(zeros)} detected as "
                f"{sorted(result.amplitudes.zero_set)}",
            )
        rayleigh = float(np.real(np.conj(target) @ bloch.matrix @ target))
        worst = max(worst, abs(energy - rayleigh))
    return ValidationCheck(
        "planted zero patterns",
        worst < 1e-12,
        f"all patterns detected, max cost deviation {worst:.3e}",
    )


def _check_leakage_and_settings(rng, max_qubits: int) -> ValidationCheck:
    worst = 0.0
    ok = True
    for n in range(2, max_qubits + 1):
        theta = rng.uniform(-np.pi, np.pi, 2 * (n - 1))
        protocol = ThreeSettingProtocol(n, shots=None)
        result = protocol.run(build_ansatz(n, theta))
        worst = max(worst, result.amplitudes.leakage)
        expected = 3 if result.compressed.m >= 2 else 1
        ok = ok and len(result.settings) == expected
    return ValidationCheck(
        "ansatz leakage and setting count",
        ok and worst < 1e-12,
        f"max leakage {worst:.3e}, setting counts as expected: {ok}",
    )


def _check_eigensolver(rng, max_qubits: int) -> ValidationCheck:
    worst = 0.0
    for n in range(2, max_qubits + 1):
        bloch = _random_bloch(rng, n)
        bands = exact_bands(bloch)
        if not np.all(np.diff(bands) >= -1e-12):
            return ValidationCheck("exact bands ordering", False, "not ascending")
        # residual of the characteristic identity via trace powers
        worst = max(
            worst, abs(float(np.trace(bloch.matrix).real) - float(bands.sum()))
        )
    return ValidationCheck(
        "exact bands ordering and trace identity",
        worst < 1e-9,
        f"max |tr H - sum E| = {worst:.3e}",
    )


def run_validation(
    max_qubits: int, seed: int = 0, xy_sign: float = 1.0
) -> ValidationReport:
    """Run every check up to ``max_qubits`` (at least 2)."""
    if max_qubits < 2:
        raise TbvqdError("validation needs max_qubits >= 2")
    rng = np.random.default_rng(np.random.SeedSequence((0x5A11DA7E, seed)))
    checks = (
        _check_block_identity(rng, min(max_qubits, 8)),
        _check_correlators_and_cost(rng, max_qubits, xy_sign),
        _check_product_provenance(rng, max_qubits),
        _check_antisymmetry(rng, max_qubits, xy_sign),
        _check_zero_patterns(rng, max_qubits),
        _check_leakage_and_settings(rng, max_qubits),
        _check_eigensolver(rng, max_qubits),
    )
    return ValidationReport(checks)
