"""Sweep results and their CSV form.

The CSV has one row per (experiment, d_z, repetition, metric)::

    experiment,d_z,rep,metric,value,std,status

Cell rows carry the repetition index and an empty ``std``.  Each
(experiment, d_z, metric) additionally gets one aggregate row with
``rep = all``, the mean over repetitions in ``value`` and their sample
standard deviation (0 for a single repetition) in ``std``.  A failed cell
is a single row with metric ``error``, value ``nan`` and the error text in
``status``.  Floats are written with ``repr`` so parsing is exact.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADER = ("experiment", "d_z", "rep", "metric", "value", "std", "status")
AGGREGATE = "all"
OK = "ok"


@dataclass
class CellResult:
    experiment: str
    d_z: int
    rep: int
    metrics: dict[str, float]
    status: str = OK

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.experiment, self.d_z, self.rep)

    @property
    def ok(self) -> bool:
        return self.status == OK

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellResult):
            return NotImplemented
        if self.key != other.key or self.status != other.status:
            return False
        if self.metrics.keys() != other.metrics.keys():
            return False
        return all(_same(self.metrics[k], other.metrics[k]) for k in self.metrics)


def _same(a: float, b: float) -> bool:
    return (math.isnan(a) and math.isnan(b)) or a == b


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float
    n: int


@dataclass
class SweepResult:
    cells: list[CellResult] = field(default_factory=list)
    experiments: list[str] = field(default_factory=list)  # row order

    def add(self, cell: CellResult) -> None:
        self.cells = [c for c in self.cells if c.key != cell.key]
        self.cells.append(cell)
        if cell.experiment not in self.experiments:
            self.experiments.append(cell.experiment)

    def done(self) -> set[tuple[str, int, int]]:
        return {c.key for c in self.cells if c.ok}

    @property
    def failed(self) -> list[CellResult]:
        return [c for c in self.cells if not c.ok]

    def sorted_cells(self) -> list[CellResult]:
        order = {name: i for i, name in enumerate(self.experiments)}
        return sorted(self.cells, key=lambda c: (order.get(c.experiment, len(order)),
                                                 c.experiment, c.d_z, c.rep))

    def metric_names(self, experiment: str) -> list[str]:
        names: list[str] = []
        for c in self.sorted_cells():
            if c.experiment == experiment and c.ok:
                names.extend(k for k in c.metrics if k not in names)
        return names

    def aggregates(self, experiment: str) -> dict[int, dict[str, Aggregate]]:
        """Mean and std over successful repetitions, per d_z and metric."""
        out: dict[int, dict[str, Aggregate]] = {}
        for d_z in sorted({c.d_z for c in self.cells if c.experiment == experiment}):
            cells = [c for c in self.cells
                     if c.experiment == experiment and c.d_z == d_z and c.ok]
            if not cells:
                continue
            out[d_z] = {}
            for m in self.metric_names(experiment):
                vals = np.array([c.metrics[m] for c in cells if m in c.metrics], dtype=np.float64)
                out[d_z][m] = aggregate(vals)
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, SweepResult):
            return NotImplemented
        return self.sorted_cells() == other.sorted_cells()


def aggregate(values: np.ndarray) -> Aggregate:
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n == 0:
        return Aggregate(float("nan"), float("nan"), 0)
    std = float(values.std(ddof=1)) if n > 1 else 0.0
    return Aggregate(float(values.mean()), std, n)


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for exp in result.experiments:
        cells = [c for c in result.sorted_cells() if c.experiment == exp]
        aggs = result.aggregates(exp)
        names = result.metric_names(exp)
        for d_z in sorted({c.d_z for c in cells}):
            for c in (c for c in cells if c.d_z == d_z):
                if not c.ok:
                    w.writerow([exp, d_z, c.rep, "error", "nan", "", c.status])
                    continue
                for m in names:
                    if m in c.metrics:
                        w.writerow([exp, d_z, c.rep, m, _fmt(c.metrics[m]), "", OK])
            for m, a in aggs.get(d_z, {}).items():
                w.writerow([exp, d_z, AGGREGATE, m, _fmt(a.mean), _fmt(a.std), OK])
    return buf.getvalue()


def emit_csv(result: SweepResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps(result))
    tmp.replace(path)
    return path


def loads(text: str) -> SweepResult:
    """Parse cell rows back into a result; aggregate rows are derived, so skipped."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return SweepResult()
    if tuple(header) != HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    result = SweepResult()
    cells: dict[tuple[str, int, int], CellResult] = {}
    for row in reader:
        if not row:
            continue
        exp, d_z, rep, metric, value, _, status = row
        if exp not in result.experiments:
            result.experiments.append(exp)
        if rep == AGGREGATE:
            continue
        key = (exp, int(d_z), int(rep))
        cell = cells.setdefault(key, CellResult(exp, int(d_z), int(rep), {}))
        if status != OK:
            cell.status = status
        else:
            cell.metrics[metric] = float(value)
    result.cells = list(cells.values())
    return result


def load_csv(path) -> SweepResult:
    return loads(Path(path).read_text())


def read_aggregate_rows(path) -> dict[tuple[str, int, str], tuple[float, float]]:
    """The aggregate rows exactly as written: (experiment, d_z, metric) -> (mean, std)."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["rep"] == AGGREGATE:
                out[(row["experiment"], int(row["d_z"]), row["metric"])] = (
                    float(row["value"]), float(row["std"]))
    return out
