"""Sweep execution: every (experiment, d_z, repetition) cell is independent.

Each cell derives its seeds from ``child_seed(master, experiment, d_z, rep)``
so results do not depend on sweep order or the number of workers.  State
shared by the cells of one repetition (construction nets, arm dataset,
cross-modal predictors, AES pre-encoder) is derived from seeds that omit
d_z and is memoized per process, and on disk for the expensive robot
networks.
"""

from __future__ import annotations

import logging
import time
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable


from . import container
from .architectures.robot import (
    AesPreEncoder,
    RobotPredictors,
    conv_encoder,
    deconv_decoder,
    train_aes_pre,
    train_robot_cm,
    train_robot_default,
    train_robot_predictors,
)
from .architectures.synthetic import (
    CrossModalPredictors,
    build_pipeline,
    train_cross_modal,
)
from .armsim import Dataset, generate_dataset
from .config import ExperimentConfig
from .nn import Sequential, child_seed, mlp, stream
from .readout import robot_readout_report, synthetic_readout_report, write_error_map
from .results import CellResult, SweepResult, emit_csv, load_csv
from .synthetic import SyntheticSpec, SyntheticWorld

log = logging.getLogger(__name__)

_memo: dict[tuple, object] = {}


def _cached(key: tuple, build: Callable[[], object]):
    if key not in _memo:
        _memo[key] = build()
    return _memo[key]


def clear_cache() -> None:
    _memo.clear()


# -- checkpoints -----------------------------------------------------------------

def save_checkpoint(path, modules: dict[str, Sequential], header: dict[str, float]) -> None:
    blocks = {f"{name}/{k}": v for name, m in modules.items() for k, v in m.state_dict().items()}
    container.write(path, container.KIND_CHECKPOINT, header, blocks)


def load_checkpoint(path, modules: dict[str, Sequential]) -> dict[str, float]:
    """Fill ``modules`` (already built with the right shapes) from ``path``."""
    kind, header, blocks = container.read(path)
    if kind != container.KIND_CHECKPOINT:
        raise container.ContainerError(f"{path}: kind {kind} is not a checkpoint")
    for name, m in modules.items():
        prefix = name + "/"
        m.load_state_dict({k[len(prefix):]: v for k, v in blocks.items() if k.startswith(prefix)})
    return header


def _checkpointed(path: Path | None, build: Callable[[], dict[str, Sequential]],
                  fresh: Callable[[], dict[str, Sequential]]) -> dict[str, Sequential]:
    """Load the modules from ``path`` when present, else train and save them."""
    if path is not None and path.exists():
        modules = fresh()
        load_checkpoint(path, modules)
        return modules
    modules = build()
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        save_checkpoint(tmp, modules, {})
        tmp.replace(path)
    return modules


# -- shared per-repetition state ---------------------------------------------------

def world_for(cfg: ExperimentConfig, rep: int) -> SyntheticWorld:
    seed = child_seed(cfg.seed, "world", rep)
    spec = SyntheticSpec(cfg.synthetic.d_m, cfg.synthetic.d_e, cfg.synthetic.n,
                         cfg.synthetic.k, seed)
    return _cached(("world", spec), lambda: SyntheticWorld(spec))


def cm_predictors_for(cfg: ExperimentConfig, rep: int) -> CrossModalPredictors:
    world = world_for(cfg, rep)
    seed = child_seed(cfg.seed, "cm_predictors", rep)
    key = ("cm", world.spec, cfg.schedule, seed)
    return _cached(key, lambda: train_cross_modal(world, cfg.schedule, stream(seed)))


def dataset_for(cfg: ExperimentConfig, rep: int) -> Dataset:
    seed = child_seed(cfg.seed, "arm_dataset", rep)
    key = ("arm", cfg.arm, cfg.dataset_size, seed)
    if key not in _memo:
        # one arm dataset in memory at a time; they are large
        for k in [k for k in _memo if k[0] == "arm"]:
            del _memo[k]
    return _cached(key, lambda: generate_dataset(cfg.arm, cfg.dataset_size, seed))


def _cache_path(cache_dir: Path | None, name: str, key: tuple):
    """File named after everything the cached networks depend on."""
    if cache_dir is None:
        return None
    return cache_dir / f"{name}_{zlib.crc32(repr(key).encode()):08x}.bin"


def aes_for(cfg: ExperimentConfig, rep: int, cache_dir: Path | None) -> AesPreEncoder:
    ds = dataset_for(cfg, rep)
    seed = child_seed(cfg.seed, "aes_pre", rep)
    net = cfg.network
    h, w = cfg.arm.height, cfg.arm.width

    def build():
        aes = train_aes_pre(ds, cfg.schedule, stream(seed), net)
        return {"encoder": aes.encoder, "decoder": aes.decoder}

    def fresh():
        r = stream(0)
        return {"encoder": conv_encoder(h, w, net.visual_code, net.channels, r),
                "decoder": deconv_decoder(net.visual_code, h, w, net.channels, r)}

    key = ("aes", cfg.arm, cfg.dataset_size, cfg.schedule, net, seed)

    def make():
        mods = _checkpointed(_cache_path(cache_dir, "aes", key), build, fresh)
        return AesPreEncoder(mods["encoder"], mods["decoder"])

    return _cached(key, make)


def robot_predictors_for(cfg: ExperimentConfig, rep: int,
                         cache_dir: Path | None) -> RobotPredictors:
    ds = dataset_for(cfg, rep)
    aes = aes_for(cfg, rep, cache_dir) if cfg.option == "aes" else None
    seed = child_seed(cfg.seed, f"robot_predictors_{cfg.option}", rep)
    net = cfg.network
    key = ("robot_pred", cfg.option, cfg.arm, cfg.dataset_size, cfg.schedule, net, seed)

    def build():
        p = train_robot_predictors(ds, cfg.schedule, stream(seed), net, aes)
        return {"m_v": p.m_v, "m_p": p.m_p}

    def fresh():
        # same constructors as train_robot_predictors, weights overwritten on load
        r = stream(0)
        h, w, d_p = cfg.arm.height, cfg.arm.width, ds.d_p
        if aes is None:
            m_v = Sequential([mlp(d_p, net.hidden, r, hidden=net.hidden, depth=2),
                              deconv_decoder(net.hidden, h, w, net.channels, r)])
            m_p = Sequential([conv_encoder(h, w, net.hidden, net.channels, r),
                              mlp(net.hidden, d_p, r, hidden=net.hidden, depth=2)])
        else:
            m_v = mlp(d_p, aes.code_dim, r, hidden=net.hidden)
            m_p = mlp(aes.code_dim, d_p, r, hidden=net.hidden)
        for p in m_v.parameters() + m_p.parameters():
            p.requires_grad = False
        return {"m_v": m_v, "m_p": m_p}

    def make():
        mods = _checkpointed(_cache_path(cache_dir, "robot_pred", key), build, fresh)
        return RobotPredictors(mods["m_v"], mods["m_p"])

    return _cached(key, make)


# -- cells -----------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    config: ExperimentConfig
    d_z: int
    rep: int

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.config.name, self.d_z, self.rep)

    @property
    def seed(self) -> int:
        return child_seed(self.config.seed, self.config.name, self.d_z, self.rep)


def run_synthetic_cell(cell: Cell) -> dict[str, float]:
    cfg = cell.config
    world = world_for(cfg, cell.rep)
    predictors = cm_predictors_for(cfg, cell.rep) if cfg.architecture == "cm" else None
    pipe = build_pipeline(cfg.architecture, world, cell.d_z, cfg.schedule,
                          stream(cell.seed, "train"), predictors)
    report = synthetic_readout_report(pipe, world, cfg.schedule, stream(cell.seed, "readout"),
                                      stream(cell.seed, "eval"), cfg.eval_batches)
    hist = pipe.autoencoder.history
    report.update(loss_initial=hist.initial, loss_final=hist.final)
    return report


def run_robot_cell(cell: Cell, out_dir: Path | None) -> dict[str, float]:
    cfg = cell.config
    cache = out_dir / "cache" if out_dir is not None else None
    ds = dataset_for(cfg, cell.rep)
    aes = aes_for(cfg, cell.rep, cache) if cfg.option == "aes" else None
    rng = stream(cell.seed, "train")
    if cfg.architecture == "cm":
        preds = robot_predictors_for(cfg, cell.rep, cache)
        pipe = train_robot_cm(ds, cell.d_z, cfg.schedule, rng, cfg.network, aes, preds)
    else:
        pipe = train_robot_default(ds, cell.d_z, cfg.schedule, rng, cfg.network, aes)
    report, emap = robot_readout_report(pipe, ds, cfg.schedule, stream(cell.seed, "readout"))
    if out_dir is not None:
        maps = out_dir / "maps"
        maps.mkdir(parents=True, exist_ok=True)
        write_error_map(maps / f"{cfg.name}_dz{cell.d_z}_rep{cell.rep}.pgm", emap)
    report.update(loss_initial=pipe.history.initial, loss_final=pipe.history.final)
    return report


def run_cell(cell: Cell, out_dir: Path | None = None) -> CellResult:
    """Train and evaluate one cell; failures become an error-status result."""
    start = time.perf_counter()
    try:
        if cell.config.is_robot:
            metrics = run_robot_cell(cell, out_dir)
        else:
            metrics = run_synthetic_cell(cell)
    except Exception as exc:  # recorded, the sweep goes on
        log.error("cell %s failed:\n%s", cell.key, traceback.format_exc())
        return CellResult(*cell.key, {}, status=f"error: {type(exc).__name__}: {exc}")
    metrics["seconds"] = time.perf_counter() - start
    return CellResult(*cell.key, {k: float(v) for k, v in metrics.items()})


def cells_for(configs: list[ExperimentConfig]) -> list[Cell]:
    # repetition-major so the shared state of a repetition is reused while warm
    return [Cell(cfg, d_z, rep) for cfg in configs for rep in range(cfg.repetitions)
            for d_z in cfg.sweep]


def run_sweep(config: ExperimentConfig | list[ExperimentConfig], out_dir=None, jobs: int = 1,
              resume: bool = False, csv_name: str = "results.csv") -> SweepResult:
    """Run every missing cell and keep ``<out_dir>/<csv_name>`` up to date.

    With ``resume`` the existing CSV is read first and its successful cells
    are skipped.  Only this process writes the CSV.
    """
    configs = config if isinstance(config, list) else config.expand()
    out = Path(out_dir) if out_dir is not None else None
    csv_path = out / csv_name if out is not None else None
    result = SweepResult(experiments=[c.name for c in configs])
    if resume and csv_path is not None and csv_path.exists():
        for c in load_csv(csv_path).cells:
            if c.ok:
                result.add(c)
    todo = [c for c in cells_for(configs) if c.key not in result.done()]

    def record(res: CellResult) -> None:
        result.add(res)
        log.info("%s d_z=%d rep=%d: %s", res.experiment, res.d_z, res.rep, res.status)
        if csv_path is not None:
            emit_csv(result, csv_path)

    if csv_path is not None:
        emit_csv(result, csv_path)
    if jobs <= 1:
        for cell in todo:
            record(run_cell(cell, out))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_cell, cell, out) for cell in todo]
            for fut in as_completed(futures):
                record(fut.result())
    return result


def zero_latent_metrics(cfg: ExperimentConfig) -> dict[str, float]:
    """Analytic d_z = 0 values added to plots (never trained)."""
    if cfg.is_robot:
        names = [f"{s}_{a}" for a in ("l", "r") for s in ("pos", "vel", "ee")]
        return {n: 1.0 for n in names}
    return {"r_m": 1.0, "r_e": 1.0}

