"""Deflation driver: optimizer contract, penalties, band sweeps."""

import math

import numpy as np
import pytest

from tbvqd.errors import OptimizationError
from tbvqd.model import (
    BlochMatrix,
    KVector,
    bloch_matrix,
    exact_bands,
    kpath,
    load_document_file,
)
from tbvqd.protocol import ThreeSettingProtocol, reconstruct_state
from tbvqd.simulator import build_ansatz
from tbvqd.vqd import (
    DeflationConfig,
    ProtocolObjective,
    RunConfig,
    band_sweep,
    deflated_cost,
    gershgorin_beta,
    optimize,
)
from tbvqd.vqd import _FINAL_EVAL_TAG, _MAX_ROUNDS

import importlib.resources

_MODELS = importlib.resources.files("tbvqd") / "models"


@pytest.fixture(scope="module")
def cuo2_doc():
    return load_document_file(str(_MODELS / "cuo2.toml"))


@pytest.fixture(scope="module")
def graphene_doc():
    return load_document_file(str(_MODELS / "graphene_bilayer.toml"))


@pytest.fixture(scope="module")
def cuo2_analytic(cuo2_doc):
    kv = kpath(cuo2_doc.kpath_points, 4)
    res = band_sweep(
        cuo2_doc.model, kv, RunConfig(shots=None, restarts=2), DeflationConfig()
    )
    return cuo2_doc, kv, res


def _dimer():
    # single off-diagonal hopping of strength 1, bands at -1 and +1
    return BlochMatrix(KVector(np.zeros(1), 0.0), np.array([[0.0, 1.0], [1.0, 0.0]]))


# ---------------------------------------------------------------- optimize


def test_optimize_smooth_quadratic():
    calls = {"n": 0}

    def objective(theta):
        calls["n"] += 1
        return float((theta[0] - 1.0) ** 2)

    out = optimize(objective, np.zeros(1), RunConfig())
    assert abs(out.theta[0] - 1.0) < 1e-4
    assert out.value < 1e-8
    assert out.cost_evals == calls["n"]
    assert out.cost_evals <= RunConfig().max_iterations


def test_optimize_two_qubit_analytic_ground_state():
    obj = ProtocolObjective(_dimer(), ThreeSettingProtocol(2, shots=None), [], 0.0)
    out = optimize(obj, np.array([0.3, -0.2]), RunConfig())
    assert abs(out.value - (-1.0)) < 1e-6


def test_optimize_two_qubit_shot_success_rate():
    # frozen regression bound: 50/50 successes on first measurement
    bloch = _dimer()
    cfg = RunConfig(shots=10**4)
    hits = 0
    for s in range(50):
        rng = np.random.default_rng(np.random.SeedSequence((s, 1)))
        obj = ProtocolObjective(
            bloch,
            ThreeSettingProtocol(2, shots=10**4),
            [],
            0.0,
            "reconstructed",
            np.random.SeedSequence((s, 0xB115)),
        )
        out = optimize(
            obj, rng.normal(0.0, 0.1, size=2), cfg, rounds=_MAX_ROUNDS
        )
        hits += abs(out.value - (-1.0)) < 0.05
    assert hits >= 45


def test_optimize_aborts_on_non_finite_cost():
    def objective(theta):
        return math.inf if theta[0] > 0.2 else float(theta[0] ** 2)

    with pytest.raises(OptimizationError, match="non-finite"):
        optimize(objective, np.array([0.1]), RunConfig())


def test_optimize_objective_change_stop():
    class Flat:
        best = 0.0

        def __call__(self, theta):
            return 0.0

    out = optimize(Flat(), np.zeros(2), RunConfig(objective_tolerance=1e-6))
    assert out.cost_evals < RunConfig().max_iterations
    assert out.value == 0.0


def test_optimize_respects_evaluation_cap():
    calls = {"n": 0}

    def objective(theta):
        calls["n"] += 1
        # slow valley keeps the optimizer walking until the cap
        return float(np.sum(np.cos(theta)) + 0.01 * np.sum(theta**2))

    cfg = RunConfig(max_iterations=40)
    out = optimize(objective, np.full(4, 0.5), cfg, rounds=3)
    assert calls["n"] <= cfg.max_iterations + 1
    assert out.cost_evals == calls["n"]


# ------------------------------------------------------- penalty structure


def test_gershgorin_beta_exceeds_spectral_range(cuo2_doc, graphene_doc):
    rng = np.random.default_rng(11)
    for doc in (cuo2_doc, graphene_doc):
        for _ in range(10):
            k = rng.uniform(-2.0, 2.0, size=2)
            b = bloch_matrix(doc.model, k)
            bands = exact_bands(b)
            beta = gershgorin_beta(b)
            assert beta > bands[-1] - bands[0]
            assert beta > abs(bands).max()


def test_deflated_cost_without_priors_is_plain_cost(cuo2_doc):
    b = bloch_matrix(cuo2_doc.model, np.array([0.7, -0.4]))
    proto = ThreeSettingProtocol(3, shots=None)
    rng = np.random.default_rng(5)
    for _ in range(5):
        theta = rng.uniform(-math.pi, math.pi, size=4)
        plain = ProtocolObjective(b, proto, [], 0.0)(theta)
        assert deflated_cost(theta, b, [], 55.0, proto) == plain


def test_deflated_cost_orthogonal_prior_adds_nothing(cuo2_doc):
    b = bloch_matrix(cuo2_doc.model, np.array([0.3, 0.9]))
    proto = ThreeSettingProtocol(3, shots=None)
    theta = np.zeros(4)  # ansatz sits exactly on the first basis state
    prior = np.array([0.0, 1.0, 0.0], dtype=complex)
    with_prior = deflated_cost(theta, b, [prior], 9.0, proto)
    without = deflated_cost(theta, b, [], 9.0, proto)
    assert abs(with_prior - without) < 1e-12


def test_deflated_cost_unit_overlap_adds_beta(cuo2_doc):
    b = bloch_matrix(cuo2_doc.model, np.array([-1.1, 0.2]))
    proto = ThreeSettingProtocol(3, shots=None)
    theta = np.array([0.9, -0.3, 0.4, 1.2])
    result = proto.run(build_ansatz(3, theta))
    a = reconstruct_state(result.amplitudes, result.correlators)
    beta = 7.5
    delta = deflated_cost(theta, b, [a], beta, proto) - deflated_cost(
        theta, b, [], beta, proto
    )
    assert abs(delta - beta) < 1e-10


# ------------------------------------------------------------- band sweeps


def test_analytic_sweep_matches_exact_diagonalization(cuo2_analytic):
    _, kv, res = cuo2_analytic
    err = np.abs(res.energies - res.exact_energies)
    assert res.n_failed == 0
    assert err.max() < 1e-6
    assert res.energies.shape == (len(kv), 3)


def test_sweep_energies_sorted_and_telemetry_complete(cuo2_analytic):
    _, kv, res = cuo2_analytic
    for row in res.energies:
        assert np.all(np.diff(row) >= 0)
    for col in res.exact_energies.T:
        assert np.all(np.isfinite(col))
    seen = {(t.k_index, t.level) for t in res.telemetry}
    assert seen == {(i, l) for i in range(len(kv)) for l in range(3)}
    bands = sorted(t.band for t in res.telemetry if t.k_index == 0)
    assert bands == [0, 1, 2]


def test_reported_theta_reproduces_analytic_energy(cuo2_analytic):
    doc, kv, res = cuo2_analytic
    proto = ThreeSettingProtocol(3, shots=None)
    for t in res.telemetry[:9]:
        b = bloch_matrix(doc.model, kv[t.k_index].components)
        again = deflated_cost(t.theta, b, [], 0.0, proto)
        assert abs(again - t.energy) < 1e-12


def test_reported_theta_reproduces_shot_energy(cuo2_doc):
    kv = kpath(cuo2_doc.kpath_points, cuo2_doc.points_per_segment)[:2]
    cfg = RunConfig(shots=200, seed=7, restarts=2, max_iterations=120)
    res = band_sweep(cuo2_doc.model, kv, cfg, DeflationConfig())
    proto = ThreeSettingProtocol(3, shots=200)
    for t in res.telemetry:
        b = bloch_matrix(cuo2_doc.model, kv[t.k_index].components)
        seed = np.random.SeedSequence((t.final_seed, t.k_index, t.level, _FINAL_EVAL_TAG))
        r = proto.run(build_ansatz(3, t.theta), seed)
        a = reconstruct_state(r.amplitudes, r.correlators)
        again = float(np.real(np.vdot(a, b.matrix @ a)))
        assert abs(again - t.energy) < 1e-12


def test_deflation_recovers_all_four_levels(graphene_doc):
    kv = kpath(graphene_doc.kpath_points, graphene_doc.points_per_segment)
    sel = [kv[5], kv[33], kv[70]]
    res = band_sweep(
        graphene_doc.model,
        sel,
        RunConfig(shots=None, restarts=3, warm_start=False),
        DeflationConfig(),
    )
    err = np.abs(res.energies - res.exact_energies)
    assert res.n_failed == 0
    assert err.max() < 1e-5


def test_max_levels_one_computes_lowest_band(cuo2_doc):
    kv = kpath(cuo2_doc.kpath_points, 3)[:3]
    res = band_sweep(
        cuo2_doc.model,
        kv,
        RunConfig(shots=None, restarts=2),
        DeflationConfig(max_levels=1),
    )
    assert res.energies.shape == (3, 1)
    np.testing.assert_allclose(
        res.energies[:, 0], res.exact_energies[:, 0], atol=1e-6
    )
    assert all(t.level == 0 for t in res.telemetry)


def test_warm_start_spends_no_more_evals_than_cold(cuo2_doc):
    # dense-path regression property; first measurement was 5 of 5 in
    # warm's favor with ~20% margins
    kv = kpath(cuo2_doc.kpath_points, cuo2_doc.points_per_segment)[:8]
    wins = 0
    for s in range(5):
        warm = band_sweep(
            cuo2_doc.model, kv, RunConfig(seed=s, restarts=1, warm_start=True)
        )
        cold = band_sweep(
            cuo2_doc.model, kv, RunConfig(seed=s, restarts=1, warm_start=False)
        )
        wins += warm.total_cost_evals <= cold.total_cost_evals
    assert wins >= 4


def test_shot_sweep_is_deterministic(cuo2_doc):
    kv = kpath(cuo2_doc.kpath_points, cuo2_doc.points_per_segment)[:2]
    cfg = RunConfig(shots=200, seed=7, restarts=2, max_iterations=120)
    a = band_sweep(cuo2_doc.model, kv, cfg, DeflationConfig())
    b = band_sweep(cuo2_doc.model, kv, cfg, DeflationConfig())
    assert np.array_equal(a.energies, b.energies)
    for x, y in zip(a.telemetry, b.telemetry):
        assert np.array_equal(x.theta, y.theta)
        assert x.cost_evals == y.cost_evals


def test_parallel_cold_sweep_matches_serial(cuo2_doc):
    kv = kpath(cuo2_doc.kpath_points, 3)[:3]
    cfg = RunConfig(restarts=1, warm_start=False)
    serial = band_sweep(cuo2_doc.model, kv, cfg, DeflationConfig(), jobs=1)
    parallel = band_sweep(cuo2_doc.model, kv, cfg, DeflationConfig(), jobs=2)
    assert np.array_equal(serial.energies, parallel.energies)


def test_failed_points_are_marked_not_interpolated(cuo2_doc, monkeypatch):
    import tbvqd.vqd as vqd_mod

    def always_fails(objective, theta0, cfg, rounds=1, start_radius=1.0):
        raise OptimizationError("forced failure")

    monkeypatch.setattr(vqd_mod, "optimize", always_fails)
    kv = kpath(cuo2_doc.kpath_points, 3)[:2]
    res = band_sweep(cuo2_doc.model, kv, RunConfig(restarts=2), DeflationConfig())
    assert res.n_failed == 6
    assert np.all(np.isnan(res.energies))
    for t in res.telemetry:
        assert t.failed
        assert t.band == -1
        assert "forced failure" in t.message


def test_sweep_records_config(cuo2_doc):
    kv = kpath(cuo2_doc.kpath_points, 3)[:2]
    res = band_sweep(
        cuo2_doc.model,
        kv,
        RunConfig(shots=None, seed=3, restarts=2),
        DeflationConfig(beta=12.0, max_levels=2),
    )
    assert res.config["seed"] == 3
    assert res.config["beta"] == 12.0
    assert res.config["levels"] == 2
    assert res.config["shots"] is None
    assert res.energies.shape == (2, 2)


def test_config_validation_errors(cuo2_doc):
    with pytest.raises(OptimizationError, match="estimator"):
        RunConfig(energy_estimator="bogus")
    with pytest.raises(OptimizationError, match="restarts"):
        RunConfig(restarts=0)
    with pytest.raises(OptimizationError, match="max_iterations"):
        RunConfig(max_iterations=0)
    with pytest.raises(OptimizationError, match="shots"):
        RunConfig(shots=0)
    kv = kpath(cuo2_doc.kpath_points, 3)[:2]
    with pytest.raises(OptimizationError, match="levels"):
        band_sweep(cuo2_doc.model, kv, RunConfig(), DeflationConfig(max_levels=5))
