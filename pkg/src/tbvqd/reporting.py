"""CSV and SVG output.

CSV values are formatted with shortest round-trip float repr so identical
runs produce byte-identical files.  The SVG writer is a minimal polyline
chart; nothing fancier belongs here.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "format_value",
    "write_csv",
    "write_bands_csv",
    "write_correlator_stats_csv",
    "write_executions_csv",
    "write_correlator_dump_csv",
    "svg_line_chart",
    "write_band_chart",
    "write_spread_chart",
    "write_executions_chart",
]

BANDS_HEADER = [
    "k_index",
    "path_distance",
    "band",
    "energy_vqd",
    "energy_exact",
    "iterations",
    "cost_evals",
    "seed",
]

CORRELATOR_STATS_HEADER = [
    "n_qubits",
    "j",
    "l",
    "part",
    "mean",
    "std",
    "exact",
    "abs_err",
    "shots",
    "M",
]

EXECUTIONS_HEADER = ["n_qubits", "shots", "protocol", "total"]

CORRELATOR_DUMP_HEADER = [
    "n_qubits",
    "j",
    "l",
    "provenance",
    "re",
    "im",
    "re_exact",
    "im_exact",
    "seed",
]


def format_value(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if math.isnan(v):
        return "nan"
    return repr(v)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(x) for x in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_bands_csv(path, result) -> None:
    """One row per (k, band); failed levels keep band = -1 and NaN energy."""
    rows = []
    entries = sorted(result.telemetry, key=lambda t: (t.k_index, t.band))
    for t in entries:
        rows.append(
            (
                t.k_index,
                result.kpoints[t.k_index].path_distance,
                t.band,
                t.energy,
                t.energy_exact,
                t.iterations,
                t.cost_evals,
                t.final_seed,
            )
        )
    write_csv(path, BANDS_HEADER, rows)


def write_correlator_stats_csv(path, stats) -> None:
    rows = []
    for s in stats:
        for part in ("re", "im"):
            mean = s.mean.real if part == "re" else s.mean.imag
            std = s.std_re if part == "re" else s.std_im
            exact = s.exact.real if part == "re" else s.exact.imag
            rows.append(
                (
                    s.n_qubits,
                    s.j,
                    s.l,
                    part,
                    mean,
                    std,
                    exact,
                    abs(mean - exact),
                    s.shots,
                    s.m_trials,
                )
            )
    write_csv(path, CORRELATOR_STATS_HEADER, rows)


def write_executions_csv(path, reports) -> None:
    rows = []
    for r in reports:
        rows.append((r.n_qubits, r.shots, "constant", r.constant_total))
        rows.append((r.n_qubits, r.shots, "conventional", r.conventional_total))
    write_csv(path, EXECUTIONS_HEADER, rows)


def write_correlator_dump_csv(path, rows) -> None:
    write_csv(path, CORRELATOR_DUMP_HEADER, rows)


def _ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-9 * step:
        out.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return out


def svg_line_chart(
    path,
    series,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    log_y: bool = False,
    vlines=(),
) -> None:
    """Polyline chart.  ``series`` is a list of dicts with keys ``x``, ``y``
    (sequences), optional ``label``, ``color``, ``marker`` ('circle' draws
    points instead of a line).  ``vlines`` is (position, label) pairs."""
    width, height = 640, 440
    ml, mr, mt, mb = 64, 20, 36, 48
    pw, ph = width - ml - mr, height - mt - mb

    xs, ys = [], []
    for s in series:
        xs.extend(float(v) for v in s["x"])
        ys.extend(float(v) for v in s["y"] if math.isfinite(float(v)))
    if not xs or not ys:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if log_y:
        y_lo = math.log10(max(y_lo, 1e-300))
        y_hi = math.log10(max(y_hi, 1e-300))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    def px(x: float) -> float:
        return ml + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y: float) -> float:
        if log_y:
            y = math.log10(max(y, 1e-300))
        return mt + ph - (y - y_lo) / (y_hi - y_lo) * ph

    colors = ["#333333", "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    # axes
    parts.append(
        f'<path d="M {ml} {mt} V {mt + ph} H {ml + pw}" stroke="black" fill="none"/>'
    )
    for t in _ticks(x_lo, x_hi):
        parts.append(
            f'<line x1="{px(t):.1f}" y1="{mt + ph}" x2="{px(t):.1f}" y2="{mt + ph + 4}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{px(t):.1f}" y="{mt + ph + 18}" text-anchor="middle">{t:g}</text>'
        )
    y_tick_vals = _ticks(y_lo, y_hi)
    for t in y_tick_vals:
        yy = mt + ph - (t - y_lo) / (y_hi - y_lo) * ph
        label = f"1e{t:g}" if log_y else f"{t:g}"
        parts.append(
            f'<line x1="{ml - 4}" y1="{yy:.1f}" x2="{ml}" y2="{yy:.1f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{yy + 4:.1f}" text-anchor="end">{label}</text>'
        )
    for pos, label in vlines:
        parts.append(
            f'<line x1="{px(pos):.1f}" y1="{mt}" x2="{px(pos):.1f}" y2="{mt + ph}" '
            f'stroke="#bbbbbb" stroke-dasharray="4 3"/>'
        )
        parts.append(
            f'<text x="{px(pos):.1f}" y="{mt + ph + 34}" text-anchor="middle">{label}</text>'
        )
    parts.append(
        f'<text x="{ml + pw / 2:.1f}" y="{height - 6}" text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{ylabel}</text>'
    )
    legend_y = mt + 8
    for i, s in enumerate(series):
        color = s.get("color") or colors[i % len(colors)]
        pts = [
            (px(float(x)), py(float(y)))
            for x, y in zip(s["x"], s["y"])
            if math.isfinite(float(y))
        ]
        if s.get("marker") == "circle":
            for cx, cy in pts:
                parts.append(
                    f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="2.2" fill="{color}"/>'
                )
        else:
            d = " ".join(f"{cx:.1f},{cy:.1f}" for cx, cy in pts)
            parts.append(
                f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.3"/>'
            )
        if s.get("label"):
            parts.append(
                f'<rect x="{ml + pw - 130}" y="{legend_y - 8}" width="10" height="10" fill="{color}"/>'
            )
            parts.append(
                f'<text x="{ml + pw - 115}" y="{legend_y + 1}">{s["label"]}</text>'
            )
            legend_y += 16
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def write_band_chart(path, result, title: str = "Band structure") -> None:
    dists = [k.path_distance for k in result.kpoints]
    n_bands = result.energies.shape[1]
    series = []
    for b in range(result.exact_energies.shape[1]):
        series.append(
            {
                "x": dists,
                "y": result.exact_energies[:, b],
                "color": "#888888",
                "label": "exact" if b == 0 else None,
            }
        )
    for b in range(n_bands):
        series.append(
            {
                "x": dists,
                "y": result.energies[:, b],
                "marker": "circle",
                "color": "#d62728",
                "label": "protocol" if b == 0 else None,
            }
        )
    vlines = [
        (k.path_distance, k.label) for k in result.kpoints if k.label is not None
    ]
    svg_line_chart(
        path,
        series,
        title=title,
        xlabel="path distance (1/angstrom)",
        ylabel="energy (eV)",
        vlines=vlines,
    )


def write_spread_chart(path, stats) -> None:
    """Per-pair spread of the estimates versus qubit count."""
    pairs = sorted({(s.j, s.l) for s in stats})
    series = []
    for j, l in pairs:
        sel = sorted((s for s in stats if (s.j, s.l) == (j, l)), key=lambda s: s.n_qubits)
        series.append(
            {
                "x": [s.n_qubits for s in sel],
                "y": [s.std_re for s in sel],
                "label": f"re C({j},{l})",
            }
        )
        series.append(
            {
                "x": [s.n_qubits for s in sel],
                "y": [s.std_im for s in sel],
                "label": f"im C({j},{l})",
            }
        )
    svg_line_chart(
        path,
        series,
        title="Correlator estimate spread",
        xlabel="qubits",
        ylabel="std of estimate",
    )


def write_executions_chart(path, reports) -> None:
    shots_values = sorted({r.shots for r in reports})
    series = []
    for shots in shots_values:
        sel = sorted(
            (r for r in reports if r.shots == shots), key=lambda r: r.n_qubits
        )
        series.append(
            {
                "x": [r.n_qubits for r in sel],
                "y": [r.constant_total for r in sel],
                "label": f"constant @{shots}",
            }
        )
        series.append(
            {
                "x": [r.n_qubits for r in sel],
                "y": [r.conventional_total for r in sel],
                "label": f"conventional @{shots}",
            }
        )
    svg_line_chart(
        path,
        series,
        title="Total circuit executions",
        xlabel="qubits",
        ylabel="executions",
        log_y=True,
    )
