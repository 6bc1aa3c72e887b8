"""Variational quantum deflation over a k-path.

Each k-point is solved level by level: level 0 minimizes the protocol energy,
level n adds penalty terms beta * |<a_i|a(theta)>|^2 against the previously
found states.  Overlaps use the classically reconstructed amplitude vectors,
so the per-theta measurement budget stays at three settings regardless of
level.  Along the path, warm starts seed each level's optimization with the
previous k-point's optimum.

Two energy estimators are available per evaluation, both functions of the
same three-setting data:

* ``"raw"``: direct linear combination of the measured correlators
  (``protocol.cost_function``).
* ``"reconstructed"`` (default): Rayleigh quotient of the classically
  reconstructed state, i.e. the raw cost with the correlator set replaced by
  its rank-one consistent projection C_jl = 2 conj(a_j) a_l.  Identical in
  analytic mode; in shot mode this suppresses first-order shot noise near
  stationary points, where reconstruction errors enter only at second order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import OptimizationError
from .model import BlochMatrix, KVector, TightBindingModel, bloch_matrix, exact_bands
from .protocol import ThreeSettingProtocol, cost_function, reconstruct_state
from .simulator import build_ansatz, params_for_amplitudes

__all__ = [
    "DeflationConfig",
    "RunConfig",
    "OptimizeOutcome",
    "LevelOutcome",
    "BandStructureResult",
    "gershgorin_beta",
    "deflated_cost",
    "optimize",
    "band_sweep",
]


@dataclass(frozen=True)
class DeflationConfig:
    """``beta=None`` picks a per-k Gershgorin-style bound; ``max_levels=None``
    deflates through the full spectrum (N levels)."""

    beta: float | None = None
    max_levels: int | None = None


@dataclass(frozen=True)
class RunConfig:
    """Knobs for one sweep.  ``shots=None`` is analytic mode.

    ``max_iterations`` caps cost evaluations per optimizer start;
    ``step_tolerance`` is the final trust-region radius;
    ``objective_tolerance`` (0 disables) stops a start once four consecutive
    accepted values improve by less than it.
    """

    shots: int | None = None
    seed: int = 0
    max_iterations: int = 300
    step_tolerance: float = 1e-6
    objective_tolerance: float = 0.0
    restarts: int = 1
    warm_start: bool = True
    energy_estimator: str = "reconstructed"
    zero_threshold: float | None = None

    def __post_init__(self) -> None:
        if self.energy_estimator not in ("raw", "reconstructed"):
            raise OptimizationError(
                f"unknown energy estimator {self.energy_estimator!r}"
            )
        if self.shots is not None and self.shots < 1:
            raise OptimizationError("shots must be >= 1 (or None for analytic)")
        if self.restarts < 1:
            raise OptimizationError("restarts must be >= 1")
        if self.max_iterations < 1:
            raise OptimizationError("max_iterations must be >= 1")


@dataclass
class OptimizeOutcome:
    theta: np.ndarray
    value: float
    iterations: int
    cost_evals: int
    status: str


@dataclass
class LevelOutcome:
    """Telemetry for one (k, level) solve.  ``band`` is the index after the
    per-k ascending sort; ``energy`` always reproduces the estimator applied
    to ``theta`` under ``final_seed``."""

    k_index: int
    level: int
    band: int
    energy: float
    energy_exact: float
    theta: np.ndarray
    iterations: int
    cost_evals: int
    final_seed: int
    failed: bool = False
    message: str = ""


@dataclass
class BandStructureResult:
    kpoints: list
    energies: np.ndarray
    exact_energies: np.ndarray
    telemetry: list
    n_failed: int
    config: dict = field(default_factory=dict)

    @property
    def total_cost_evals(self) -> int:
        return sum(t.cost_evals for t in self.telemetry)


def gershgorin_beta(bloch: BlochMatrix) -> float:
    """2 * (max row sum of off-diagonal |H_jl| + max |eps_j|): an upper
    bound on the spectral range, so a deflated prior can never undercut a
    genuinely new level."""
    H = bloch.matrix
    off = np.abs(H - np.diag(np.diag(H))).sum(axis=1).max()
    return 2.0 * float(off + np.abs(bloch.onsite).max())


class _NonFiniteCost(Exception):
    pass


class ProtocolObjective:
    """Deflated cost of theta at a fixed k-point.

    Shot mode draws a fresh derived seed per evaluation from ``seed_seq``
    (spawned children, deterministic given the root).  ``evals`` counts
    calls; ``best`` tracks the running minimum for the callback-based stop.
    """

    def __init__(
        self,
        bloch: BlochMatrix,
        protocol: ThreeSettingProtocol,
        priors: list,
        beta: float,
        estimator: str = "reconstructed",
        seed_seq: np.random.SeedSequence | None = None,
    ):
        self.bloch = bloch
        self.protocol = protocol
        self.priors = [np.asarray(p, dtype=complex) for p in priors]
        self.beta = float(beta)
        self.estimator = estimator
        self.seed_seq = seed_seq
        self.evals = 0
        self.best = math.inf

    def __call__(self, theta) -> float:
        self.evals += 1
        seed = None
        if self.protocol.shots is not None:
            if self.seed_seq is not None:
                seed = self.seed_seq.spawn(1)[0]
        circuit = build_ansatz(self.protocol.n_qubits, np.asarray(theta, float))
        result = self.protocol.run(circuit, seed)
        need_state = bool(self.priors) or self.estimator == "reconstructed"
        a = reconstruct_state(result.amplitudes, result.correlators) if need_state else None
        if self.estimator == "reconstructed":
            e = float(np.real(np.vdot(a, self.bloch.matrix @ a)))
        else:
            e = cost_function(
                self.bloch.onsite, self.bloch, result.amplitudes, result.correlators
            )
        for prior in self.priors:
            e += self.beta * float(abs(np.vdot(prior, a)) ** 2)
        if not math.isfinite(e):
            raise _NonFiniteCost(f"non-finite cost {e!r} at theta {theta!r}")
        self.best = min(self.best, e)
        return e


def deflated_cost(
    theta,
    bloch: BlochMatrix,
    priors,
    beta: float,
    protocol: ThreeSettingProtocol,
    seed=None,
    estimator: str = "reconstructed",
) -> float:
    """One-off deflated cost evaluation (see ``ProtocolObjective``)."""
    seq = None
    if seed is not None and protocol.shots is not None:
        seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    obj = ProtocolObjective(bloch, protocol, list(priors), beta, estimator, seq)
    return obj(np.asarray(theta, dtype=float))


# Multi-round settings for stochastic objectives: a fresh trust region is
# opened at the incumbent while rounds keep improving by more than this.
_ROUND_MIN_GAIN = 1e-3
_MAX_ROUNDS = 8


def optimize(
    objective,
    theta0,
    cfg: RunConfig,
    rounds: int = 1,
    start_radius: float = 1.0,
) -> OptimizeOutcome:
    """Minimize with the derivative-free trust-region method (COBYQA).

    Termination: evaluation cap, final trust-region radius, or the
    objective-change rule when ``objective_tolerance`` > 0.  A non-finite
    cost aborts with ``OptimizationError``.

    ``rounds`` > 1 restarts the trust region at the incumbent point while
    the evaluation budget lasts and each round still improves the value;
    sampling noise collapses the model radius long before a noisy objective
    is actually converged, and a reopened (progressively narrower) region
    resumes the descent.  ``start_radius`` is the first-round trust-region
    radius: keep it small when theta0 is already believed to be close.
    """
    theta0 = np.asarray(theta0, dtype=float)
    accepted: list[float] = []

    def guarded(x):
        v = float(objective(x))
        if not math.isfinite(v):
            raise _NonFiniteCost(f"objective returned non-finite value {v!r}")
        return v

    def callback(_xk):
        best = objective.best if hasattr(objective, "best") else None
        if best is not None and cfg.objective_tolerance > 0:
            accepted.append(best)
            if len(accepted) >= 4:
                window = accepted[-4:]
                if max(window) - min(window) < cfg.objective_tolerance:
                    raise StopIteration
        return None

    def run_once(start, budget, radius):
        try:
            return minimize(
                guarded,
                start,
                method="cobyqa",
                callback=callback,
                options={
                    "maxfev": budget,
                    "initial_tr_radius": radius,
                    "final_tr_radius": min(cfg.step_tolerance, radius / 2),
                },
            )
        except _NonFiniteCost as exc:
            raise OptimizationError(str(exc)) from exc

    min_gain = max(cfg.objective_tolerance, _ROUND_MIN_GAIN)
    evals_before = getattr(objective, "evals", None)
    theta = theta0
    value = math.inf
    iters = 0
    nfev = 0
    status = ""
    for round_index in range(max(1, rounds)):
        budget = cfg.max_iterations - nfev
        if budget < 1:
            break
        # later rounds polish: reopen a narrower region at the incumbent
        radius = max(10 * cfg.step_tolerance, start_radius * 0.3 ** round_index)
        res = run_once(theta, budget, radius)
        iters += int(res.nit)
        nfev += int(res.nfev)
        status = str(res.message)
        new_theta = np.asarray(res.x, dtype=float)
        new_value = float(res.fun)
        if not (np.all(np.isfinite(new_theta)) and math.isfinite(new_value)):
            raise OptimizationError(
                f"optimizer returned non-finite result: {res.message}"
            )
        improved = new_value < value - min_gain
        if new_value < value:
            theta, value = new_theta, new_value
        if not improved:
            break
    if evals_before is not None:
        nfev = getattr(objective, "evals") - evals_before
    return OptimizeOutcome(
        theta=theta,
        value=value,
        iterations=iters,
        cost_evals=int(nfev),
        status=status,
    )


# Tag mixed into the seed material of the final reporting evaluation so it
# never collides with an optimizer evaluation.
_FINAL_EVAL_TAG = 0x5EED


def _report_energy(
    bloch: BlochMatrix,
    protocol: ThreeSettingProtocol,
    theta: np.ndarray,
    estimator: str,
    seed_material: tuple | None,
):
    """Evaluate the final energy and reconstructed state at theta."""
    seed = None
    if protocol.shots is not None and seed_material is not None:
        seed = np.random.SeedSequence(seed_material)
    circuit = build_ansatz(protocol.n_qubits, theta)
    result = protocol.run(circuit, seed)
    a = reconstruct_state(result.amplitudes, result.correlators)
    if estimator == "reconstructed":
        energy = float(np.real(np.vdot(a, bloch.matrix @ a)))
    else:
        energy = cost_function(
            bloch.onsite, bloch, result.amplitudes, result.correlators
        )
    norm = float(np.linalg.norm(a))
    prior = a / norm if norm > 0 else a
    return energy, prior


# Seed tag for the shared judging evaluation that compares restart
# candidates on equal sampling noise.
_JUDGE_TAG = 0xC0DE


def _complement_starts(priors, count, rng):
    """Start angles for states drawn inside the orthogonal complement of the
    measured priors.

    Deflation pushes the optimum into that complement, so starting there
    removes the penalty hill the optimizer would otherwise have to descend
    under sampling noise.  Uses only measured data: no reference to the
    Bloch matrix or its spectrum.
    """
    if not priors or count < 1:
        return []
    P = np.column_stack(priors)
    U, s, _ = np.linalg.svd(P, full_matrices=True)
    rank = int(np.sum(s > 1e-9))
    basis = U[:, rank:]
    dim = basis.shape[1]
    if dim == 0:
        return []
    out = []
    for _ in range(count):
        w = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        v = basis @ w
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            continue
        out.append(params_for_amplitudes(v / norm))
        if dim == 1:
            break  # the complement is a single direction; one start suffices
    return out


def _solve_kpoint(
    bloch: BlochMatrix,
    k_index: int,
    cfg: RunConfig,
    beta: float,
    levels: int,
    warm_thetas,
):
    """All deflation levels at one k.  Returns (outcomes, thetas_by_level)."""
    n = bloch.n_orbitals
    d = 2 * (n - 1)
    protocol = ThreeSettingProtocol(
        n, shots=cfg.shots, zero_threshold=cfg.zero_threshold
    )
    priors: list[np.ndarray] = []
    outcomes: list[LevelOutcome] = []
    thetas: list[np.ndarray | None] = []
    rounds = _MAX_ROUNDS if cfg.shots is not None else 1
    for level in range(levels):
        start_rng = np.random.default_rng(
            np.random.SeedSequence((cfg.seed, k_index, level, 0xA11))
        )
        # starts carry a first-round trust radius: informed points (warm or
        # complement-drawn) get a narrow region to polish, blind uniform
        # draws a wide one to explore
        starts: list[tuple[np.ndarray, float]] = []
        warm = warm_thetas[level] if warm_thetas is not None else None
        if warm is not None:
            starts.append((np.asarray(warm, dtype=float), 0.3))
        elif k_index == 0 and cfg.warm_start:
            # path start under warm starting: perturb around zero
            starts.append((start_rng.normal(0.0, 0.1, size=d), 1.0))
        for theta_c in _complement_starts(priors, cfg.restarts - len(starts), start_rng):
            starts.append((theta_c, 0.3))
        while len(starts) < cfg.restarts:
            starts.append((start_rng.uniform(-math.pi, math.pi, size=d), 1.0))
        candidates: list[OptimizeOutcome] = []
        total_evals = 0
        total_iters = 0
        failure_msg = ""
        for r, (theta0, radius) in enumerate(starts):
            seq = (
                np.random.SeedSequence((cfg.seed, k_index, level, r))
                if cfg.shots is not None
                else None
            )
            objective = ProtocolObjective(
                bloch, protocol, priors, beta, cfg.energy_estimator, seq
            )
            try:
                outcome = optimize(
                    objective, theta0, cfg, rounds=rounds, start_radius=radius
                )
            except OptimizationError as exc:
                failure_msg = str(exc)
                total_evals += objective.evals
                continue
            total_evals += outcome.cost_evals
            total_iters += outcome.iterations
            candidates.append(outcome)
        best: OptimizeOutcome | None = None
        if len(candidates) > 1 and cfg.shots is not None:
            # judge candidates on shared seeds so sampling noise cannot flip
            # the ranking; three repeats shrink the judge's own variance.
            # The seed sequences are rebuilt per candidate because spawning
            # advances a shared one.
            scores = []
            for cand in candidates:
                acc = 0.0
                bad = False
                for rep in range(3):
                    judge = ProtocolObjective(
                        bloch,
                        protocol,
                        priors,
                        beta,
                        cfg.energy_estimator,
                        np.random.SeedSequence(
                            (cfg.seed, k_index, level, _JUDGE_TAG, rep)
                        ),
                    )
                    try:
                        acc += judge(cand.theta)
                    except (OptimizationError, _NonFiniteCost):
                        bad = True
                    total_evals += judge.evals
                    if bad:
                        break
                scores.append(math.inf if bad else acc / 3.0)
            if any(math.isfinite(v) for v in scores):
                best = candidates[int(np.argmin(scores))]
            else:
                best = min(candidates, key=lambda c: c.value)
        elif candidates:
            best = min(candidates, key=lambda c: c.value)
        if best is None:
            outcomes.append(
                LevelOutcome(
                    k_index=k_index,
                    level=level,
                    band=-1,
                    energy=math.nan,
                    energy_exact=math.nan,
                    theta=np.full(d, math.nan),
                    iterations=total_iters,
                    cost_evals=total_evals,
                    final_seed=-1,
                    failed=True,
                    message=failure_msg or "all optimizer starts failed",
                )
            )
            thetas.append(None)
            continue
        final_material = (cfg.seed, k_index, level, _FINAL_EVAL_TAG)
        energy, prior = _report_energy(
            bloch, protocol, best.theta, cfg.energy_estimator, final_material
        )
        total_evals += 1
        priors.append(prior)
        outcomes.append(
            LevelOutcome(
                k_index=k_index,
                level=level,
                band=level,
                energy=energy,
                energy_exact=math.nan,
                theta=best.theta,
                iterations=total_iters,
                cost_evals=total_evals,
                final_seed=cfg.seed,
            )
        )
        thetas.append(best.theta)
    return outcomes, thetas


def band_sweep(
    model: TightBindingModel,
    kpoints: list[KVector],
    cfg: RunConfig | None = None,
    deflation: DeflationConfig | None = None,
    jobs: int = 1,
) -> BandStructureResult:
    """Solve every k-point along the path and sort energies per k.

    Warm starts serialize the path; with ``warm_start=False`` and
    ``jobs > 1`` the k-points run in parallel with identical results.
    Failed (k, level) entries stay NaN in ``energies`` and are counted in
    ``n_failed``; they are never interpolated.
    """
    cfg = cfg or RunConfig()
    deflation = deflation or DeflationConfig()
    n = model.n_orbitals
    levels = deflation.max_levels if deflation.max_levels is not None else n
    if not 1 <= levels <= n:
        raise OptimizationError(f"levels must be in 1..{n}")
    blochs = [bloch_matrix(model, k) for k in kpoints]
    exact_full = np.array([exact_bands(b) for b in blochs])

    def beta_for(b: BlochMatrix) -> float:
        return deflation.beta if deflation.beta is not None else gershgorin_beta(b)

    per_k: list[list[LevelOutcome]] = [None] * len(kpoints)  # type: ignore[list-item]
    if cfg.warm_start or jobs <= 1:
        warm = None
        for i, b in enumerate(blochs):
            outcomes, thetas = _solve_kpoint(b, i, cfg, beta_for(b), levels, warm)
            per_k[i] = outcomes
            if cfg.warm_start:
                warm = thetas
    else:
        from .parallel import parallel_map

        items = [(b, i, cfg, beta_for(b), levels, None) for i, b in enumerate(blochs)]
        for i, (outcomes, _) in enumerate(
            parallel_map(_solve_kpoint_star, items, jobs)
        ):
            per_k[i] = outcomes

    energies = np.full((len(kpoints), levels), math.nan)
    telemetry: list[LevelOutcome] = []
    n_failed = 0
    for i, outcomes in enumerate(per_k):
        vals = np.array([o.energy for o in outcomes])
        order = np.argsort(vals)  # NaN sorts last
        ranks = np.argsort(order)  # band index of each level after sorting
        for level, o in enumerate(outcomes):
            if o.failed:
                n_failed += 1
                telemetry.append(o)
                continue
            band = int(ranks[level])
            o.band = band
            o.energy_exact = float(exact_full[i, band])
            energies[i, band] = o.energy
            telemetry.append(o)
    config = {
        "shots": cfg.shots,
        "seed": cfg.seed,
        "max_iterations": cfg.max_iterations,
        "step_tolerance": cfg.step_tolerance,
        "objective_tolerance": cfg.objective_tolerance,
        "restarts": cfg.restarts,
        "warm_start": cfg.warm_start,
        "energy_estimator": cfg.energy_estimator,
        "levels": levels,
        "beta": deflation.beta,
    }
    return BandStructureResult(
        kpoints=list(kpoints),
        energies=energies,
        exact_energies=exact_full[:, :levels],
        telemetry=telemetry,
        n_failed=n_failed,
        config=config,
    )


def _solve_kpoint_star(args):
    return _solve_kpoint(*args)
