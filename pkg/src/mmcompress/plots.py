"""Scalable vector graphics of sweep aggregates, written by hand.

Plotted points are the CSV aggregates verbatim.  Each point is also
emitted as ``data-d_z``/``data-mean``/``data-std`` attributes so the
figure can be checked against the table.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from .results import SweepResult

BLUE, RED = "#1f4fd8", "#d62728"
WIDTH, HEIGHT = 480, 320
MARGIN = dict(left=56, right=16, top=28, bottom=44)


@dataclass(frozen=True)
class Series:
    metric: str
    label: str
    color: str
    dash: str = ""  # stroke-dasharray; "" = solid


SYNTHETIC_SERIES = (Series("r_e", "r_e (exclusive)", BLUE), Series("r_m", "r_m (shared)", RED))

# solid: stream present in both modalities; dashed: in one; dotted: in none
ROBOT_SERIES = (
    Series("pos_r", "right φ", "#1f77b4"),
    Series("ee_r", "right ee", "#2ca02c"),
    Series("vel_r", "right φ̇", "#9467bd", "6,4"),
    Series("pos_l", "left φ", "#ff7f0e", "6,4"),
    Series("ee_l", "left ee", "#8c564b", "6,4"),
    Series("vel_l", "left φ̇", "#7f7f7f", "2,3"),
)
VISION_SERIES = (Series("vision_left", "left half", "#ff7f0e"),
                 Series("vision_right", "right half", "#1f77b4"))


class _Axes:
    def __init__(self, x_max: float, y_max: float):
        self.x_max = max(x_max, 1.0)
        self.y_max = y_max if y_max > 0 else 1.0
        self.w = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def x(self, v: float) -> float:
        return MARGIN["left"] + self.w * v / self.x_max

    def y(self, v: float) -> float:
        return MARGIN["top"] + self.h * (1.0 - min(max(v, 0.0), self.y_max) / self.y_max)


def _nice_ticks(hi: float, count: int = 5) -> list[float]:
    step = hi / count
    mag = 10 ** len(str(int(step))) / 10 if step >= 1 else 1.0
    for m in (0.1, 0.2, 0.25, 0.5, 1, 2, 2.5, 5, 10):
        if step <= m * mag:
            step = m * mag
            break
    ticks, v = [], 0.0
    while v <= hi + 1e-9:
        ticks.append(round(v, 10))
        v += step
    return ticks


def _frame(ax: _Axes, title: str, y_label: str) -> list[str]:
    out = [f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">'
           f'{escape(title)}</text>']
    x0, y0 = MARGIN["left"], HEIGHT - MARGIN["bottom"]
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{WIDTH - MARGIN["right"]}" y2="{y0}" '
               'stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for t in _nice_ticks(ax.x_max):
        out.append(f'<text x="{ax.x(t):.2f}" y="{y0 + 16}" text-anchor="middle" '
                   f'font-size="10">{t:g}</text>')
    for t in _nice_ticks(ax.y_max):
        out.append(f'<text x="{x0 - 6}" y="{ax.y(t) + 3:.2f}" text-anchor="end" '
                   f'font-size="10">{t:g}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle" '
               'font-size="11">latent size d_z</text>')
    out.append(f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" font-size="11" '
               f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(y_label)}</text>')
    return out


def _series(ax: _Axes, s: Series, pts: list[tuple[float, float, float]],
            analytic: tuple[float, float] | None) -> list[str]:
    """Std band, line, and markers; ``analytic`` is an extra (d_z, value) point."""
    out = []
    if len(pts) > 1:
        upper = [f"{ax.x(d):.2f},{ax.y(m + sd):.2f}" for d, m, sd in pts]
        lower = [f"{ax.x(d):.2f},{ax.y(m - sd):.2f}" for d, m, sd in reversed(pts)]
        out.append(f'<polygon points="{" ".join(upper + lower)}" fill="{s.color}" '
                   'fill-opacity="0.2" stroke="none"/>')
    line = ([(analytic[0], analytic[1])] if analytic else []) + [(d, m) for d, m, _ in pts]
    dash = f' stroke-dasharray="{s.dash}"' if s.dash else ""
    coords = " ".join(f"{ax.x(d):.2f},{ax.y(m):.2f}" for d, m in line)
    out.append(f'<polyline class="series" data-metric="{s.metric}" points="{coords}" '
               f'fill="none" stroke="{s.color}" stroke-width="1.8"{dash}/>')
    if analytic:
        out.append(f'<circle class="analytic" data-metric="{s.metric}" cx="{ax.x(analytic[0]):.2f}" '
                   f'cy="{ax.y(analytic[1]):.2f}" r="3" fill="white" stroke="{s.color}"/>')
    for d, m, sd in pts:
        out.append(f'<circle class="point" data-metric="{s.metric}" data-d_z="{d:g}" '
                   f'data-mean="{m!r}" data-std="{sd!r}" cx="{ax.x(d):.2f}" cy="{ax.y(m):.2f}" '
                   f'r="2.5" fill="{s.color}"/>')
    return out


def _legend(series: tuple[Series, ...]) -> list[str]:
    out = []
    x, y = WIDTH - MARGIN["right"] - 110, MARGIN["top"] + 8
    for i, s in enumerate(series):
        yy = y + 14 * i
        dash = f' stroke-dasharray="{s.dash}"' if s.dash else ""
        out.append(f'<line x1="{x}" y1="{yy}" x2="{x + 22}" y2="{yy}" stroke="{s.color}" '
                   f'stroke-width="1.8"{dash}/>')
        out.append(f'<text x="{x + 28}" y="{yy + 3}" font-size="10">{escape(s.label)}</text>')
    return out


def panel_svg(result: SweepResult, experiment: str, series: tuple[Series, ...], title: str,
              y_label: str = "readout MSE", d_min: float | None = None,
              analytic: dict[str, float] | None = None,
              hlines: dict[str, float] | None = None) -> str:
    aggs = result.aggregates(experiment)
    d_zs = sorted(aggs)
    data = {s.metric: [(d, aggs[d][s.metric].mean, aggs[d][s.metric].std)
                       for d in d_zs if s.metric in aggs[d]] for s in series}
    peaks = [m + sd for pts in data.values() for _, m, sd in pts]
    peaks += list((analytic or {}).values()) + list((hlines or {}).values())
    finite = [p for p in peaks if p == p]
    y_max = max(finite) * 1.1 if finite and max(finite) > 0 else 1.0
    ax = _Axes(max(d_zs + [d_min or 0, 1]), y_max)
    body = _frame(ax, title, y_label)
    if d_min is not None:
        body.append(f'<line class="d_min" data-d_min="{d_min:g}" x1="{ax.x(d_min):.2f}" '
                    f'y1="{MARGIN["top"]}" x2="{ax.x(d_min):.2f}" '
                    f'y2="{HEIGHT - MARGIN["bottom"]}" stroke="black" stroke-dasharray="2,3"/>')
    for label, v in (hlines or {}).items():
        body.append(f'<line class="hline" x1="{MARGIN["left"]}" y1="{ax.y(v):.2f}" '
                    f'x2="{WIDTH - MARGIN["right"]}" y2="{ax.y(v):.2f}" stroke="#999" '
                    f'stroke-dasharray="4,3"/><text x="{MARGIN["left"] + 4}" '
                    f'y="{ax.y(v) - 3:.2f}" font-size="9" fill="#666">{escape(label)}</text>')
    for s in series:
        if data[s.metric]:
            point = (0.0, analytic[s.metric]) if analytic and s.metric in analytic else None
            body.extend(_series(ax, s, data[s.metric], point))
    body.extend(_legend(tuple(s for s in series if data[s.metric])))
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">\n'
            + "\n".join(body) + "\n</svg>\n")


def emit_plots(result: SweepResult, out_dir, configs: dict | None = None) -> list[Path]:
    """One SVG per experiment (robot experiments get a second, vision panel).

    ``configs`` maps experiment names to their ExperimentConfig; it supplies
    d_min for synthetic panels.  Without it the experiment kind is guessed
    from the metric names.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for exp in result.experiments:
        names = set(result.metric_names(exp))
        if not names:
            continue
        cfg = (configs or {}).get(exp)
        if "r_m" in names or "r_e" in names:
            d_min = cfg.synthetic.d_min if cfg is not None else None
            svg = panel_svg(result, exp, SYNTHETIC_SERIES, exp, d_min=d_min,
                            analytic={"r_m": 1.0, "r_e": 1.0})
            path = out_dir / f"{exp}.svg"
            path.write_text(svg)
            written.append(path)
        else:
            svg = panel_svg(result, exp, ROBOT_SERIES, exp,
                            analytic={s.metric: 1.0 for s in ROBOT_SERIES})
            path = out_dir / f"{exp}.svg"
            path.write_text(svg)
            written.append(path)
            aggs = result.aggregates(exp)
            chance = None
            if aggs:
                first = aggs[min(aggs)]
                if "chance_left" in first:
                    chance = {"chance": first["chance_left"].mean}
            svg = panel_svg(result, exp, VISION_SERIES, f"{exp}: vision error by half",
                            y_label="pixel MSE", hlines=chance)
            path = out_dir / f"{exp}_vision.svg"
            path.write_text(svg)
            written.append(path)
    return written
