"""Statistical benchmarks of the correlator estimators.

Estimated correlators are compared against exact operator expectations on
the exact trial state, across qubit counts, with fixed circuits and varying
sampling seeds only.

Fixed-angle policy
------------------
Published reference plots do not disclose the trial angles, so accuracy and
spread targets here are stated under this module's own policy, flagged as
policy-dependent: the target state puts weights 0.26, 0.24, 0.18, 0.20 on
the benchmark indices 0, 1, 3, 4 that exist at the given N (renormalized if
they are the only indices) and spreads the remainder evenly over the other
indices, with phases drawn once from a generator seeded by N.  This pins
|C_04| = 0.456 and |C_13| = 0.416 for every N that fits both pairs, which
keeps the per-part spread near 0.015 at 10^4 shots and makes the
relative-accuracy brackets N-independent.  Angles come from the exact chain
inversion.

The four weights are deliberately distinct.  The product rule routes each
benchmark pair through the measured-argmax intermediate, and with tied true
weights that argmax is decided by sampling noise; conditioning on winning
the tie biases 1/|a_k|^2 low by about 1%, which is visible against a 2%
accuracy target.  Distinct weights separated by >= 5 sigma of the weight
estimate make the choice deterministic in practice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TbvqdError
from .pauli import pauli_expectation
from .protocol import ThreeSettingProtocol
from .simulator import apply_circuit, build_ansatz, params_for_amplitudes, zero_state

__all__ = [
    "TrialStats",
    "ExecutionReport",
    "BENCH_BOOST",
    "policy_target",
    "fixed_theta_policy",
    "exact_correlator",
    "correlator_trials",
    "execution_report",
]

BENCH_BOOST = ((0, 0.26), (1, 0.24), (3, 0.18), (4, 0.20))
_POLICY_SEED_TAG = 0xBE9C


@dataclass(frozen=True)
class TrialStats:
    """Aggregate of M repeated estimates of one pair at one qubit count.

    ``std_re``/``std_im`` use the population (1/M) form.
    """

    n_qubits: int
    j: int
    l: int
    mean: complex
    std_re: float
    std_im: float
    exact: complex
    shots: int
    m_trials: int

    @property
    def abs_err(self) -> float:
        return abs(self.mean - self.exact)

    @property
    def std_combined(self) -> float:
        return float(np.hypot(self.std_re, self.std_im))


@dataclass(frozen=True)
class ExecutionReport:
    """Total circuit executions for one (N, shots) cell under the constant
    protocol (3 settings) and the conventional grouping (2N + 1 settings)."""

    n_qubits: int
    shots: int
    constant_settings: int
    conventional_settings: int

    @property
    def constant_total(self) -> int:
        return self.constant_settings * self.shots

    @property
    def conventional_total(self) -> int:
        return self.conventional_settings * self.shots


def policy_target(n_qubits: int) -> np.ndarray:
    """Target amplitude vector of the fixed-angle policy (module docstring)."""
    if n_qubits < 2:
        raise TbvqdError("policy needs at least two qubits")
    boost = {j: w for j, w in BENCH_BOOST if j < n_qubits}
    rest = [j for j in range(n_qubits) if j not in boost]
    weights = np.empty(n_qubits)
    for j, w in boost.items():
        weights[j] = w
    if rest:
        weights[rest] = (1.0 - sum(boost.values())) / len(rest)
    else:
        weights /= weights.sum()
    rng = np.random.default_rng(np.random.SeedSequence((_POLICY_SEED_TAG, n_qubits)))
    phases = rng.uniform(-np.pi, np.pi, size=n_qubits)
    return np.sqrt(weights) * np.exp(1j * phases)


def fixed_theta_policy(n_qubits: int) -> np.ndarray:
    """Trial angles realizing the policy target exactly."""
    return params_for_amplitudes(policy_target(n_qubits))


def _pair_letters(n: int, j: int, l: int, ops: str) -> str:
    letters = ["I"] * n
    letters[j] = ops[0]
    letters[l] = ops[1]
    return "".join(letters)


def exact_correlator(state_amplitudes: np.ndarray, j: int, l: int) -> complex:
    """Exact C_jl = <X_j X_l> + i <X_j Y_l> by operator application on the
    exact statevector (independent of the sampling estimators)."""
    n = int(np.log2(len(state_amplitudes)))
    xx = pauli_expectation(state_amplitudes, _pair_letters(n, j, l, "XX")).real
    xy = pauli_expectation(state_amplitudes, _pair_letters(n, j, l, "XY")).real
    return complex(xx, xy)


def _trials_for_n(args):
    n, pairs, shots, m_trials, base_seed, analytic = args
    theta = fixed_theta_policy(n)
    circuit = build_ansatz(n, theta)
    state = apply_circuit(zero_state(n), circuit)
    exact = {p: exact_correlator(state.amplitudes, *p) for p in pairs}
    # raw estimator, clip off: every single-excitation state saturates
    # |C_jl| = 2|a_j||a_l| exactly, so the clip-to-bound step the optimizer
    # uses would shave the outward half of the sampling noise and put a
    # systematic ~2% dent in the product-rule means benched here
    protocol = ThreeSettingProtocol(n, shots=None if analytic else shots, clip=False)
    estimates: dict[tuple[int, int], list[complex]] = {p: [] for p in pairs}
    dump_rows = []
    for t in range(m_trials):
        seed = np.random.SeedSequence((base_seed, n, t))
        result = protocol.run(circuit, seed)
        for p in pairs:
            value = result.correlators.get(*p)
            estimates[p].append(value)
            dump_rows.append(
                (
                    n,
                    p[0],
                    p[1],
                    result.correlators.provenance(*p),
                    value.real,
                    value.imag,
                    exact[p].real,
                    exact[p].imag,
                    base_seed,
                )
            )
    stats = []
    for p in pairs:
        vals = np.array(estimates[p], dtype=complex)
        mean = complex(vals.mean())
        if analytic:
            # every analytic trial is the same evaluation bit for bit, so
            # the spread is zero by construction; computing it through the
            # mean would leave 1-ulp residue
            assert np.all(vals == vals[0])
            std_re = std_im = 0.0
        else:
            std_re = float(vals.real.std())
            std_im = float(vals.imag.std())
        stats.append(
            TrialStats(
                n_qubits=n,
                j=p[0],
                l=p[1],
                mean=mean,
                std_re=std_re,
                std_im=std_im,
                exact=exact[p],
                shots=shots,
                m_trials=m_trials,
            )
        )
    return stats, dump_rows


def correlator_trials(
    qubit_counts,
    pairs,
    shots: int,
    m_trials: int,
    base_seed: int = 0,
    *,
    analytic: bool = False,
    jobs: int = 1,
):
    """Repeat the full protocol M times per qubit count and aggregate.

    Both benchmark pairs are read off the same three-setting run of each
    trial; trials differ only in the sampling seed.  Pairs that do not fit a
    qubit count are skipped with a note.  Returns (stats, notes, dump_rows).
    """
    if shots < 1 or m_trials < 1:
        raise TbvqdError("shots and trial count must be positive")
    qubit_counts = list(qubit_counts)
    pairs = [tuple(p) for p in pairs]
    for p in pairs:
        if len(p) != 2 or p[0] == p[1] or min(p) < 0:
            raise TbvqdError(f"invalid pair {p}")
    notes: list[str] = []
    items = []
    for n in qubit_counts:
        if n < 2:
            notes.append(f"skipping N={n}: below the two-orbital minimum")
            continue
        fitting = [p for p in pairs if max(p) < n]
        for p in pairs:
            if max(p) >= n:
                notes.append(f"skipping pair {p} at N={n}: index out of range")
        if fitting:
            items.append((n, fitting, shots, m_trials, base_seed, analytic))

    from .parallel import parallel_map

    results = parallel_map(_trials_for_n, items, jobs)
    stats: list[TrialStats] = []
    dump_rows: list[tuple] = []
    for st, rows in results:
        stats.extend(st)
        dump_rows.extend(rows)
    return stats, notes, dump_rows


def execution_report(qubit_counts, shot_counts) -> list[ExecutionReport]:
    """Circuit-execution totals: 3 settings versus 2N + 1, times the shots."""
    out = []
    for n in qubit_counts:
        if n < 2:
            raise TbvqdError("execution report needs N >= 2")
        for shots in shot_counts:
            if shots < 1:
                raise TbvqdError("shot counts must be positive")
            out.append(ExecutionReport(n, shots, 3, 2 * n + 1))
    return out
