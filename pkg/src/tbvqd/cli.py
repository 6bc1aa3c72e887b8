"""Command-line interface.

Subcommands: ``bands``, ``bench``, ``validate``, ``dump-hamiltonian``.
Exit codes: 0 success, 1 computational failure, 2 usage or config error.

Shot counts resolve in order: explicit ``--shots`` / ``--analytic`` flag,
then the model file's ``[run]`` table, then the subcommand default (20000
for bands, 10000 for bench).  Every run that writes stochastic outputs also
writes a manifest recording the merged config and seeds.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ModelParseError, ModelValidationError, TbvqdError, UsageError
from .model import (
    bloch_matrix,
    exact_bands,
    kpath,
    load_document_file,
    reciprocal_vectors,
)
from .parallel import default_jobs
from .pauli import dump_lines, qubit_hamiltonian
from .reporting import (
    write_band_chart,
    write_bands_csv,
    write_correlator_dump_csv,
    write_correlator_stats_csv,
    write_executions_chart,
    write_executions_csv,
    write_spread_chart,
)
from .validate import run_validation
from .vqd import DeflationConfig, RunConfig, band_sweep

__all__ = ["main"]

_BANDS_DEFAULT_SHOTS = 20000
_BENCH_DEFAULT_SHOTS = 10000


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    p.add_argument("--shots", type=int, default=None, help="shots per setting")
    p.add_argument(
        "--analytic", action="store_true", help="exact distributions, no sampling"
    )
    p.add_argument(
        "--jobs", type=int, default=None, help="worker processes (default: cores)"
    )
    p.add_argument(
        "--out-dir", type=Path, default=Path("."), help="output directory"
    )


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tbvqd",
        description="Tight-binding band structures from a constant "
        "three-setting measurement protocol.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bands", help="variational band sweep over the model's k-path")
    p.add_argument("model_file", type=Path)
    _common_flags(p)
    p.add_argument("--points-per-segment", type=int, default=None)
    p.add_argument("--levels", type=int, default=None, help="bands to deflate (default: all)")
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument(
        "--beta",
        type=float,
        default=None,
        help="deflation penalty weight in eV (default: per-k spectral bound)",
    )
    p.add_argument("--no-warm-start", action="store_true")
    p.add_argument(
        "--estimator", choices=("raw", "reconstructed"), default="reconstructed"
    )
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("bench", help="correlator statistics and execution counts")
    _common_flags(p)
    p.add_argument("--qubits", default="4..14", help="range A..B (default 4..14)")
    p.add_argument("--pairs", default="0,4;1,3", help='pairs like "0,4;1,3"')
    p.add_argument("--trials", type=int, default=50)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="run the invariant self-checks")
    _common_flags(p)
    p.add_argument("--max-qubits", type=int, default=8)
    p.add_argument(
        "--corrupt-xy-sign", action="store_true", help=argparse.SUPPRESS
    )
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("dump-hamiltonian", help="print the qubit operator at one k")
    p.add_argument("model_file", type=Path)
    _common_flags(p)
    p.add_argument("--k", required=True, help='comma-separated coords, e.g. "0.5,0"')
    p.add_argument(
        "--cartesian",
        action="store_true",
        help="interpret --k in Cartesian instead of reduced coordinates",
    )
    p.set_defaults(func=cmd_dump_hamiltonian)
    return ap


def _resolve_shots(args, run_defaults: dict, fallback: int) -> int | None:
    if args.analytic:
        return None
    if args.shots is not None:
        if args.shots < 1:
            raise UsageError("--shots must be positive")
        return args.shots
    file_shots = run_defaults.get("shots")
    if file_shots is not None:
        if not isinstance(file_shots, int) or file_shots < 1:
            raise UsageError("[run].shots must be a positive integer")
        return file_shots
    return fallback


def _resolve(args_value, file_value, default):
    if args_value is not None:
        return args_value
    if file_value is not None:
        return file_value
    return default


def _manifest(out_dir: Path, command: str, config: dict, outputs, started, seeds) -> Path:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "config": config,
        "seeds": seeds,
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": [str(p) for p in outputs],
    }
    path = out_dir / "manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def cmd_bands(args) -> int:
    started = _now()
    doc = load_document_file(args.model_file)
    if not doc.kpath_points:
        raise ModelValidationError(
            f"{args.model_file} has no [kpath] section; a band sweep needs one"
        )
    rd = doc.run_defaults
    shots = _resolve_shots(args, rd, _BANDS_DEFAULT_SHOTS)
    seed = _resolve(args.seed, rd.get("seed"), 0)
    pps = _resolve(args.points_per_segment, rd.get("points_per_segment"), doc.points_per_segment)
    restarts = _resolve(args.restarts, rd.get("restarts"), 1)
    max_iterations = _resolve(args.max_iterations, rd.get("max_iterations"), 300)
    warm = not args.no_warm_start and bool(rd.get("warm_start", True))
    levels = _resolve(args.levels, rd.get("levels"), None)
    beta = _resolve(args.beta, rd.get("beta"), None)
    if beta is not None:
        if not isinstance(beta, (int, float)) or beta <= 0:
            raise UsageError("beta must be a positive number of eV")
        beta = float(beta)
    jobs = args.jobs if args.jobs is not None else default_jobs()

    kvectors = kpath(doc.kpath_points, pps)
    cfg = RunConfig(
        shots=shots,
        seed=seed,
        max_iterations=max_iterations,
        restarts=restarts,
        warm_start=warm,
        energy_estimator=args.estimator,
    )
    deflation = DeflationConfig(beta=beta, max_levels=levels)
    result = band_sweep(doc.model, kvectors, cfg, deflation, jobs=jobs)

    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [out_dir / "bands.csv"]
    write_bands_csv(outputs[0], result)
    if not args.no_svg:
        svg = out_dir / "bands.svg"
        write_band_chart(svg, result, title=args.model_file.stem)
        outputs.append(svg)
    outputs.append(
        _manifest(
            out_dir,
            "bands",
            {**result.config, "model_file": str(args.model_file), "points": len(kvectors)},
            outputs,
            started,
            {"base": seed},
        )
    )

    ok = np.isfinite(result.energies)
    max_err = (
        float(np.abs(result.energies - result.exact_energies)[ok].max())
        if ok.any()
        else float("nan")
    )
    mode = "analytic" if shots is None else f"{shots} shots"
    print(
        f"bands: {len(kvectors)} k-points x {result.energies.shape[1]} levels "
        f"({mode}), max |E - E_exact| = {max_err:.3e} eV, "
        f"failed points: {result.n_failed}"
    )
    for t in result.telemetry:
        if t.failed:
            print(f"  FAILED k={t.k_index} level={t.level}: {t.message}", file=sys.stderr)
    return 1 if result.n_failed else 0


def _parse_qubit_range(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"bad qubit range {text!r}; expected A..B or a list") from None


def _parse_pairs(text: str) -> list[tuple[int, int]]:
    pairs = []
    try:
        for chunk in text.split(";"):
            a, b = chunk.split(",")
            pairs.append((int(a), int(b)))
    except ValueError:
        raise UsageError(f'bad pairs {text!r}; expected like "0,4;1,3"') from None
    return pairs


def cmd_bench(args) -> int:
    started = _now()
    qubits = _parse_qubit_range(args.qubits)
    pairs = _parse_pairs(args.pairs)
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    shots = _resolve_shots(args, {}, _BENCH_DEFAULT_SHOTS)
    analytic = shots is None
    shots_for_report = shots if shots is not None else _BENCH_DEFAULT_SHOTS
    seed = args.seed if args.seed is not None else 0
    jobs = args.jobs if args.jobs is not None else default_jobs()

    stats, notes, dump_rows = correlator_trials_entry(
        qubits, pairs, shots_for_report, args.trials, seed, analytic, jobs
    )
    reports = execution_report_entry(qubits, [shots_for_report])

    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [
        out_dir / "correlator_stats.csv",
        out_dir / "executions.csv",
        out_dir / "correlators.csv",
        out_dir / "spread.svg",
        out_dir / "executions.svg",
    ]
    write_correlator_stats_csv(outputs[0], stats)
    write_executions_csv(outputs[1], reports)
    write_correlator_dump_csv(outputs[2], dump_rows)
    write_spread_chart(outputs[3], stats)
    write_executions_chart(outputs[4], reports)
    config = {
        "qubits": qubits,
        "pairs": pairs,
        "shots": None if analytic else shots_for_report,
        "trials": args.trials,
        "seed": seed,
        "analytic": analytic,
    }
    outputs.append(_manifest(out_dir, "bench", config, outputs, started, {"base": seed}))

    for note in notes:
        print(f"note: {note}")
    for s in stats:
        print(
            f"N={s.n_qubits:2d} C({s.j},{s.l}): mean "
            f"{s.mean.real:+.4f}{s.mean.imag:+.4f}i exact "
            f"{s.exact.real:+.4f}{s.exact.imag:+.4f}i |err| {s.abs_err:.4f} "
            f"std ({s.std_re:.4f}, {s.std_im:.4f})"
        )
    return 0


def correlator_trials_entry(qubits, pairs, shots, trials, seed, analytic, jobs):
    from .bench import correlator_trials

    return correlator_trials(
        qubits, pairs, shots, trials, seed, analytic=analytic, jobs=jobs
    )


def execution_report_entry(qubits, shot_counts):
    from .bench import execution_report

    return execution_report(qubits, shot_counts)


def cmd_validate(args) -> int:
    if args.max_qubits < 2:
        raise UsageError("--max-qubits must be at least 2")
    seed = args.seed if args.seed is not None else 0
    xy_sign = -1.0 if args.corrupt_xy_sign else 1.0
    report = run_validation(args.max_qubits, seed=seed, xy_sign=xy_sign)
    for check in report.checks:
        status = "ok  " if check.passed else "FAIL"
        print(f"[{status}] {check.name}: {check.detail}")
    if not report.passed:
        print("validation FAILED", file=sys.stderr)
        return 1
    print("validation passed")
    return 0


def cmd_dump_hamiltonian(args) -> int:
    doc = load_document_file(args.model_file)
    model = doc.model
    try:
        coords = np.array([float(x) for x in args.k.split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"bad --k value {args.k!r}") from None
    if coords.size != model.dimension:
        raise UsageError(
            f"--k needs {model.dimension} components for this model"
        )
    if not args.cartesian:
        coords = coords @ reciprocal_vectors(model.lattice_vectors)
    bloch = bloch_matrix(model, coords)
    ham = qubit_hamiltonian(bloch)
    print(f"# k (cartesian): {', '.join(repr(float(c)) for c in coords)}")
    for line in dump_lines(ham):
        print(line)
    bands = exact_bands(bloch)
    print("# exact bands: " + ", ".join(f"{b:.6f}" for b in bands))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ModelParseError, ModelValidationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TbvqdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
