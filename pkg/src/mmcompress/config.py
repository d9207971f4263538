"""Experiment configuration files: sectioned ``key = value`` text.

Example::

    [experiment]
    name = je_defaults
    kind = synthetic_je
    sweep = 1..30
    repetitions = 3
    seed = 0
    # optional: one sub-experiment per value
    grid = d_e: 4, 10, 16, 22

    [schedule]
    batches = 2500
    batch_size = 128
    lr = 0.001
    eval_batches = 100

    [synthetic]
    d_m = 4
    d_e = 4
    n = 2
    k = 10

Robot kinds read ``[arm]`` (ArmConfig fields plus ``dataset_size``) and
``[network]`` (RobotNetConfig fields).
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, replace
from pathlib import Path

from .architectures.robot import ConfigError, RobotNetConfig
from .armsim import ArmConfig
from .nn import Schedule
from .synthetic import SyntheticSpec

KINDS = (
    "synthetic_je", "synthetic_control", "synthetic_cm",
    "robot_default_je", "robot_default_cm", "robot_aes_je", "robot_aes_cm",
)
DEFAULT_SYNTHETIC_SWEEP = tuple(range(1, 31))
DEFAULT_ROBOT_SWEEP = (1, 2, 4, 8, 10, 14, 20, 32, 64)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    kind: str
    sweep: tuple[int, ...]
    repetitions: int = 3
    seed: int = 0
    schedule: Schedule = Schedule()
    eval_batches: int = 100
    synthetic: SyntheticSpec = SyntheticSpec()
    arm: ArmConfig = ArmConfig()
    dataset_size: int = 100_000
    network: RobotNetConfig = RobotNetConfig()
    out: str = "runs"
    grid: tuple[str, tuple[int, ...]] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not self.sweep or min(self.sweep) < 1:
            raise ConfigError("sweep values must be >= 1 (d_z = 0 is reported analytically)")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.eval_batches < 50:
            raise ConfigError("need at least 50 evaluation batches")
        if self.is_robot:
            if self.arm.height % 4 or self.arm.width % 4:
                raise ConfigError(f"{self.arm.height}x{self.arm.width} image does not halve "
                                  "twice under the conv stack")
            if self.dataset_size < 1 or self.dataset_size % self.arm.steps_per_target:
                raise ConfigError(f"dataset_size {self.dataset_size} is not a positive multiple "
                                  f"of steps_per_target={self.arm.steps_per_target}")
            if self.option == "aes" and self.network.split_index != self.network.visual_code:
                raise ConfigError("under AES split_index must equal visual_code")

    @property
    def is_robot(self) -> bool:
        return self.kind.startswith("robot")

    @property
    def architecture(self) -> str:
        return self.kind.rsplit("_", 1)[1]

    @property
    def option(self) -> str:
        """``default`` or ``aes`` for robot kinds."""
        return self.kind.split("_")[1] if self.is_robot else ""

    def expand(self) -> list["ExperimentConfig"]:
        """One config per grid value, or just this one."""
        if self.grid is None:
            return [self]
        key, values = self.grid
        out = []
        for v in values:
            if hasattr(self.synthetic, key):
                cfg = replace(self, synthetic=replace(self.synthetic, **{key: v}))
            elif hasattr(self.arm, key):
                cfg = replace(self, arm=replace(self.arm, **{key: v}))
            else:
                raise ConfigError(f"grid key {key!r} is not a data parameter")
            out.append(replace(cfg, name=f"{self.name}_{key}={v}", grid=None))
        return out


def parse_ints(text: str) -> tuple[int, ...]:
    """``"1..5"``, ``"1, 2, 4"`` or a mix like ``"1..3, 8"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def _convert(cls, key: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields:
        raise ConfigError(f"unknown key {key!r} for {cls.__name__}")
    default = getattr(cls(), key)
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        vals = _floats(raw)
        return tuple(int(v) for v in vals) if all(isinstance(d, int) for d in default) else vals
    return raw.strip()


def _section(parser, name: str, cls, skip=()):
    if not parser.has_section(name):
        return {}
    return {k: _convert(cls, k, v) for k, v in parser.items(name) if k not in skip}


def loads(text: str) -> ExperimentConfig:
    try:
        return _loads(text)
    except ConfigError:
        raise
    except (configparser.Error, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _loads(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive field names
    parser.read_string(text)
    if not parser.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    extra = set(parser.sections()) - {"experiment", "schedule", "synthetic", "arm", "network"}
    if extra:
        raise ConfigError(f"unknown sections: {', '.join(sorted(extra))}")
    exp = dict(parser.items("experiment"))
    kind = exp.get("kind", "synthetic_je")
    robot = kind.startswith("robot")
    sched = _section(parser, "schedule", Schedule, skip=("eval_batches",))
    eval_batches = parser.getint("schedule", "eval_batches", fallback=100)
    synthetic = SyntheticSpec(**_section(parser, "synthetic", SyntheticSpec))
    arm_raw = _section(parser, "arm", ArmConfig, skip=("dataset_size",))
    dataset_size = parser.getint("arm", "dataset_size", fallback=100_000)
    network = RobotNetConfig(**_section(parser, "network", RobotNetConfig))
    grid = None
    if "grid" in exp:
        key, _, values = exp["grid"].partition(":")
        grid = (key.strip(), parse_ints(values))
    sweep_default = DEFAULT_ROBOT_SWEEP if robot else DEFAULT_SYNTHETIC_SWEEP
    known = {"name", "kind", "sweep", "repetitions", "seed", "out", "grid"}
    unknown = set(exp) - known
    if unknown:
        raise ConfigError(f"unknown [experiment] keys: {', '.join(sorted(unknown))}")
    return ExperimentConfig(
        name=exp.get("name", kind),
        kind=kind,
        sweep=parse_ints(exp["sweep"]) if "sweep" in exp else sweep_default,
        repetitions=int(exp.get("repetitions", 3)),
        seed=int(exp.get("seed", 0)),
        schedule=Schedule(**sched),
        eval_batches=eval_batches,
        synthetic=synthetic,
        arm=ArmConfig(**arm_raw),
        dataset_size=dataset_size,
        network=network,
        out=exp.get("out", "runs"),
        grid=grid,
    )


def load(path) -> ExperimentConfig:
    return loads(Path(path).read_text())
