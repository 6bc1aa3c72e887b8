"""Release gate: every guarantee the package ships with, at full scale.

Each test prints one summary line (written past the capture plumbing so it
always shows up in logged runs) and asserts the stated bound.  Frozen
numeric bounds are regression anchors from the first verified runs of this
implementation; stochastic checks pin their seeds.
"""

import importlib.resources
import time

import numpy as np
import pytest

from tbvqd.bench import correlator_trials, execution_report
from tbvqd.model import BlochMatrix, KVector, kpath, load_document_file
from tbvqd.pauli import dense_matrix, pauli_expectation, qubit_hamiltonian
from tbvqd.protocol import (
    PROVENANCE_PRODUCT,
    ThreeSettingProtocol,
    cost_function,
    parity_matrix,
)
from tbvqd.reporting import write_bands_csv
from tbvqd.simulator import (
    Circuit,
    apply_circuit,
    build_ansatz,
    hadamard,
    params_for_amplitudes,
    sample_counts_array,
    sdg_h,
    zero_state,
)
from tbvqd.vqd import DeflationConfig, RunConfig, band_sweep

_MODELS = importlib.resources.files("tbvqd") / "models"


_CONSOLE = None


@pytest.fixture(autouse=True)
def _console(capsys):
    # capture in this pytest is file-descriptor level, so a plain print
    # (even to sys.__stdout__) would never reach the real output stream;
    # capsys.disabled() is the one sanctioned hole through it
    global _CONSOLE
    _CONSOLE = capsys
    yield
    _CONSOLE = None


def _report(name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    if _CONSOLE is not None:
        with _CONSOLE.disabled():
            print(line, flush=True)
    else:
        print(line, flush=True)
    assert ok, line


def _random_hermitian(rng, n: int) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = (a + a.conj().T) / 2.0
    np.fill_diagonal(h, h.diagonal().real)
    return h


def _chain_state(n: int, theta: np.ndarray) -> np.ndarray:
    """Exact single-excitation amplitudes of the ansatz, orbital order."""
    state = apply_circuit(zero_state(n), build_ansatz(n, theta))
    return np.array([state.amplitudes[1 << (n - 1 - j)] for j in range(n)])


def _generic_theta(rng, n: int) -> np.ndarray:
    # angles of a uniformly random normalized single-excitation state,
    # redrawn away from the dropped-index branch (that branch is checked
    # separately against its reduced reference, not the full quotient);
    # uniform angles would instead pile chain-tail amplitudes onto zero
    while True:
        a = rng.normal(size=n) + 1j * rng.normal(size=n)
        a /= np.linalg.norm(a)
        if np.abs(a).min() >= 0.05:
            return params_for_amplitudes(a)


def test_single_excitation_block_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20230801)
    worst = 0.0
    for n in range(2, 9):
        idx = [1 << (n - 1 - j) for j in range(n)]
        for _ in range(200):
            h = _random_hermitian(rng, n)
            bloch = BlochMatrix(KVector(np.zeros(2), 0.0), h)
            dense = dense_matrix(qubit_hamiltonian(bloch))
            block = dense[np.ix_(idx, idx)]
            worst = max(worst, float(np.abs(block - h).max()))
    dt = time.perf_counter() - t0
    _report(
        "single-excitation block identity",
        worst < 1e-12 and dt < 30.0,
        f"200 random Hermitian matrices per N=2..8, max entry deviation "
        f"{worst:.3e} (bound 1e-12), {dt:.1f}s (budget 30s)",
    )


def test_constant_setting_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20230802)
    worst = 0.0
    audited = 0
    for n in range(2, 11):
        proto = ThreeSettingProtocol(n, shots=None)
        for _ in range(500):
            theta = _generic_theta(rng, n)
            h = _random_hermitian(rng, n)
            bloch = BlochMatrix(KVector(np.zeros(2), 0.0), h)
            res = proto.run(build_ansatz(n, theta))
            cost = cost_function(bloch.onsite, bloch, res.amplitudes, res.correlators)
            a = _chain_state(n, theta)
            rayleigh = float(np.real(a.conj() @ h @ a))
            worst = max(worst, abs(cost - rayleigh))
            kept = res.compressed.kept
            for p in range(len(kept)):
                for q in range(p + 1, len(kept)):
                    if (p + q) % 2 == 0:
                        audited += 1
                        assert (
                            res.correlators.provenance(kept[p], kept[q])
                            == PROVENANCE_PRODUCT
                        )
    dt = time.perf_counter() - t0
    _report(
        "constant-setting cost exactness",
        worst < 1e-12 and dt < 120.0,
        f"500 random angle sets per N=2..10, max |cost - Rayleigh| "
        f"{worst:.3e} (bound 1e-12), {audited} same-parity pairs all via the "
        f"product rule, {dt:.1f}s (budget 120s)",
    )


def test_zero_amplitude_branch():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20230803)
    n = 4
    proto = ThreeSettingProtocol(n, shots=None)
    patterns = (
        [{0}, {1}, {2}, {3}]
        + [{a, b} for a in range(4) for b in range(a + 1, 4)]
        + [{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}]
    )
    worst = 0.0
    for zeros in patterns:
        alive = [j for j in range(n) if j not in zeros]
        target = np.zeros(n, dtype=complex)
        vals = rng.normal(size=len(alive)) + 1j * rng.normal(size=len(alive))
        target[alive] = vals / np.linalg.norm(vals)
        h = _random_hermitian(rng, n)
        bloch = BlochMatrix(KVector(np.zeros(2), 0.0), h)
        res = proto.run(build_ansatz(n, params_for_amplitudes(target)))
        assert res.amplitudes.zero_set == frozenset(zeros)
        if len(alive) >= 2:
            assert tuple(s.kind for s in res.settings) == ("Z", "XX", "XY")
        else:
            # a single surviving amplitude leaves nothing to correlate
            assert tuple(s.kind for s in res.settings) == ("Z",)
        cost = cost_function(bloch.onsite, bloch, res.amplitudes, res.correlators)
        sub = target[alive]
        reduced = float(np.real(sub.conj() @ h[np.ix_(alive, alive)] @ sub))
        worst = max(worst, abs(cost - reduced))
    dt = time.perf_counter() - t0
    _report(
        "zero-amplitude branch",
        worst < 1e-12 and dt < 10.0,
        f"4 single-zero, 6 double-zero and 4 triple-zero patterns at N=4, "
        f"max |cost - reduced Rayleigh| {worst:.3e} (bound 1e-12), "
        f"{dt:.1f}s (budget 10s)",
    )


def _mirror_rotation(compressed, n: int) -> Circuit:
    gates = []
    for pos, j in enumerate(compressed.kept):
        gates.append(sdg_h(j) if pos % 2 == 0 else hadamard(j))
    return Circuit(n, tuple(gates))


def test_correlator_antisymmetry():
    rng = np.random.default_rng(20230804)

    # analytic: protocol imaginary parts against independent operator
    # expectations on the exact state, every pair
    worst = 0.0
    for n in range(2, 11):
        proto = ThreeSettingProtocol(n, shots=None)
        for _ in range(5):
            theta = _generic_theta(rng, n)
            res = proto.run(build_ansatz(n, theta))
            state = apply_circuit(zero_state(n), build_ansatz(n, theta))
            for j in range(n):
                for l in range(j + 1, n):
                    xy = res.correlators.get(j, l).imag
                    letters = "".join(
                        "Y" if q == j else ("X" if q == l else "I") for q in range(n)
                    )
                    yx = pauli_expectation(state.amplitudes, letters).real
                    worst = max(worst, abs(xy + yx))

    # sampled: direct pairs against an independently sampled mirrored
    # setting, error bars combined from both parity estimates
    shots = 10**5
    total = 0
    within = 0
    while total < 1000:
        n = int(rng.integers(2, 11))
        theta = rng.uniform(-np.pi, np.pi, size=2 * (n - 1))
        # clip off so the stored imaginary part is exactly the measured
        # parity and the standard-error arithmetic below applies to it
        proto = ThreeSettingProtocol(n, shots=shots, clip=False)
        res = proto.run(
            build_ansatz(n, theta), np.random.SeedSequence((20230804, total, 0xA))
        )
        kept = res.compressed.kept
        if len(kept) < 2:
            continue
        state = apply_circuit(zero_state(n), build_ansatz(n, theta))
        mirrored = apply_circuit(state, _mirror_rotation(res.compressed, n))
        counts = sample_counts_array(
            mirrored, shots, np.random.SeedSequence((20230804, total, 0xB))
        )
        ref = parity_matrix(counts / shots, n)
        pairs = [
            (p, q)
            for p in range(len(kept))
            for q in range(p + 1, len(kept))
            if (p + q) % 2 == 1
        ]
        sel = pairs[int(rng.integers(len(pairs)))]
        p, q = sel
        j, l = kept[p], kept[q]
        im = res.correlators.get(j, l).imag
        own = im if p % 2 == 0 else -im
        other = float(ref[j, l])
        se = np.sqrt(
            max(0.0, 1.0 - own**2) / shots + max(0.0, 1.0 - other**2) / shots
        )
        within += abs(own + other) <= 5.0 * se
        total += 1
    _report(
        "correlator antisymmetry",
        worst < 1e-12 and within >= 990,
        f"analytic max |<XY>+<YX>| {worst:.3e} over all pairs N=2..10 "
        f"(bound 1e-12); sampled at {shots} shots: {within}/1000 direct pairs "
        f"within 5 combined standard errors (need 990)",
    )


@pytest.fixture(scope="session")
def band_runs():
    out = {}
    for name in ("cuo2", "graphene_bilayer"):
        doc = load_document_file(str(_MODELS / f"{name}.toml"))
        rd = doc.run_defaults
        kvectors = kpath(doc.kpath_points, doc.points_per_segment)
        t0 = time.perf_counter()
        analytic = band_sweep(
            doc.model,
            kvectors,
            RunConfig(shots=None, seed=0, restarts=2, warm_start=True),
            DeflationConfig(),
        )
        shot_cfg = RunConfig(
            shots=rd["shots"],
            seed=0,
            restarts=rd["restarts"],
            warm_start=True,
        )
        shot_defl = DeflationConfig(beta=rd["beta"])
        sampled = band_sweep(doc.model, kvectors, shot_cfg, shot_defl)
        out[name] = {
            "doc": doc,
            "kvectors": kvectors,
            "analytic": analytic,
            "sampled": sampled,
            "shot_cfg": shot_cfg,
            "shot_defl": shot_defl,
            "seconds": time.perf_counter() - t0,
        }
    return out


def test_band_structure_reproduction(band_runs):
    details = []
    ok = True
    for name, run in band_runs.items():
        analytic, sampled = run["analytic"], run["sampled"]
        n_points = len(run["kvectors"])
        a_err = float(np.abs(analytic.energies - analytic.exact_energies).max())
        s_err = np.abs(sampled.energies - sampled.exact_energies)
        frac = float((s_err < 0.05).mean())
        ok = ok and n_points >= 60 and a_err < 1e-5 and frac >= 0.95
        ok = ok and analytic.n_failed == 0
        details.append(
            f"{name}: {n_points} k-points, analytic max {a_err:.2e} eV "
            f"(bound 1e-5, 2 restarts), sampled {100 * frac:.2f}% of (k,band) "
            f"within 0.05 eV (need 95%)"
        )
    seconds = sum(run["seconds"] for run in band_runs.values())
    ok = ok and seconds < 1800.0
    _report(
        "band-structure reproduction",
        ok,
        "; ".join(details) + f"; {seconds:.0f}s (budget 1800s)",
    )


def test_correlator_statistics():
    t0 = time.perf_counter()
    stats, notes, _ = correlator_trials(
        range(4, 15), [(0, 4), (1, 3)], 10**4, 50, 0, jobs=1
    )
    # the only pair that does not fit a size is (0, 4) at N=4
    assert notes == ["skipping pair (0, 4) at N=4: index out of range"]
    worst_mean = 0.0
    stds = {}
    ok = True
    for s in stats:
        err = abs(s.mean - s.exact)
        bound = 0.02 * max(abs(s.exact), 0.1)
        ok = ok and err <= bound
        worst_mean = max(worst_mean, err / bound)
        for part, value in (("re", s.std_re), ("im", s.std_im)):
            ok = ok and 0.005 <= value <= 0.03
            stds.setdefault((s.j, s.l, part), []).append(value)
    worst_ratio = max(max(v) / min(v) for v in stds.values())
    ok = ok and worst_ratio <= 2.0
    dt = time.perf_counter() - t0
    _report(
        "correlator statistics",
        ok and dt < 1200.0,
        f"pairs (0,4),(1,3), N=4..14, 50 trials at 1e4 shots: worst "
        f"mean-error fraction of bound {worst_mean:.2f} (<=1), every spread in "
        f"[0.005, 0.03], max spread ratio across N {worst_ratio:.2f} (<=2), "
        f"{dt:.0f}s (budget 1200s)",
    )


def test_execution_counts():
    t0 = time.perf_counter()
    shot_values = [10**4, 2 * 10**4, 10**5]
    reports = execution_report(range(2, 15), shot_values)
    ok = len(reports) == 13 * len(shot_values)
    for r in reports:
        ok = ok and isinstance(r.constant_total, int)
        ok = ok and isinstance(r.conventional_total, int)
        ok = ok and r.constant_total == 3 * r.shots
        ok = ok and r.conventional_total == (2 * r.n_qubits + 1) * r.shots
    dt = time.perf_counter() - t0
    _report(
        "execution counts",
        ok and dt < 5.0,
        f"{len(reports)} (N, shots) cells: constant = 3 x shots, "
        f"conventional = (2N+1) x shots, exact integers, {dt:.2f}s",
    )


def test_sampled_sweep_determinism(band_runs, tmp_path):
    identical = True
    for name, run in band_runs.items():
        again = band_sweep(
            run["doc"].model, run["kvectors"], run["shot_cfg"], run["shot_defl"]
        )
        first_csv = tmp_path / f"{name}_first.csv"
        second_csv = tmp_path / f"{name}_second.csv"
        write_bands_csv(first_csv, run["sampled"])
        write_bands_csv(second_csv, again)
        identical = identical and first_csv.read_bytes() == second_csv.read_bytes()
    _report(
        "sampled-run determinism",
        identical,
        "repeating both sampled sweeps with the same seed produced "
        "byte-identical band CSVs",
    )
