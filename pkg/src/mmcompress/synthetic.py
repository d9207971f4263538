"""Synthetic multimodal data with a controlled amount of shared information.

Shared sources ``x_m`` and per-modality exclusive sources ``x_e[i]`` are
i.i.d. standard normal.  Modality ``i`` sees ``x_i = x_e[i] ⊕ x_m`` through a
frozen random 3-layer MLP whose outputs are standardized per component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import container
from .nn import Sequential, mlp, stream
from .nn.layers import DEFAULT_DTYPE

CALIBRATION_SAMPLES = 100_000
MIN_SIGMA = 1e-6


class DegenerateNetworkError(RuntimeError):
    """A construction network kept producing a near-constant output component."""


@dataclass(frozen=True)
class SyntheticSpec:
    d_m: int = 4
    d_e: int = 4
    n: int = 2
    k: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.d_m < 0 or self.d_e < 0 or self.d_m + self.d_e < 1:
            raise ValueError(f"need d_m, d_e >= 0 and d_m + d_e >= 1, got {self}")
        if self.n < 2 or self.k < 1:
            raise ValueError(f"need n >= 2 and k >= 1, got {self}")

    @property
    def d_x(self) -> int:
        return self.d_m + self.d_e

    @property
    def d_y(self) -> int:
        return self.k * self.d_x

    @property
    def d_min(self) -> int:
        """Smallest latent size able to carry every source."""
        return self.d_m + self.n * self.d_e


@dataclass
class SourceBatch:
    x_m: np.ndarray  # (batch, d_m)
    x_e: np.ndarray  # (n, batch, d_e)

    @property
    def batch(self) -> int:
        return self.x_m.shape[0]

    @property
    def n(self) -> int:
        return self.x_e.shape[0]

    def x(self, i: int) -> np.ndarray:
        """Exclusive-then-shared source vector of modality ``i``."""
        return np.concatenate([self.x_e[i], self.x_m], axis=1)

    def x_concat(self) -> np.ndarray:
        return np.concatenate([self.x(i) for i in range(self.n)], axis=1)


@dataclass
class ModalityBatch:
    y: np.ndarray  # (n, batch, d_y)

    @property
    def y_concat(self) -> np.ndarray:
        return np.concatenate(list(self.y), axis=1)


class ConstructionNet:
    """Frozen random MLP plus the standardizing constants of its outputs."""

    def __init__(self, net: Sequential, mu: np.ndarray, sigma: np.ndarray):
        self.net = net
        self.mu = mu
        self.sigma = sigma
        for p in net.parameters():
            p.requires_grad = False

    def raw(self, x: np.ndarray) -> np.ndarray:
        return self.net.predict(np.asarray(x, dtype=DEFAULT_DTYPE), batch_size=8192)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return ((self.raw(x) - self.mu) / self.sigma).astype(DEFAULT_DTYPE)


def sample_sources(spec: SyntheticSpec, batch: int, rng: np.random.Generator) -> SourceBatch:
    if batch < 1:
        raise ValueError("batch must be >= 1")
    x_m = rng.standard_normal((batch, spec.d_m)).astype(DEFAULT_DTYPE)
    x_e = rng.standard_normal((spec.n, batch, spec.d_e)).astype(DEFAULT_DTYPE)
    return SourceBatch(x_m=x_m, x_e=x_e)


def build_construction_nets(spec: SyntheticSpec, rng: np.random.Generator | None = None,
                            calibration: int = CALIBRATION_SAMPLES,
                            max_attempts: int = 10) -> list[ConstructionNet]:
    """One frozen, calibrated net per modality, each from its own stream.

    ``rng`` is accepted for symmetry with the other builders; weights come
    from ``stream(spec.seed, "construction", i, attempt)`` so a net does
    not depend on how many others were built before it.
    """
    nets = []
    for i in range(spec.n):
        for attempt in range(max_attempts):
            net = mlp(spec.d_x, spec.d_y, stream(spec.seed, "construction", i, attempt))
            calib_rng = stream(spec.seed, "calibration", i, attempt)
            x = calib_rng.standard_normal((calibration, spec.d_x)).astype(DEFAULT_DTYPE)
            out = net.predict(x, batch_size=8192).astype(np.float64)
            mu, sigma = out.mean(axis=0), out.std(axis=0)
            if sigma.min() >= MIN_SIGMA:
                nets.append(ConstructionNet(net, mu.astype(DEFAULT_DTYPE),
                                            sigma.astype(DEFAULT_DTYPE)))
                break
        else:
            raise DegenerateNetworkError(
                f"modality {i}: output std < {MIN_SIGMA} after {max_attempts} draws")
    return nets


def construct_modalities(nets: list[ConstructionNet], sources: SourceBatch) -> ModalityBatch:
    if len(nets) != sources.n:
        raise ValueError(f"{len(nets)} nets for {sources.n} modalities")
    return ModalityBatch(y=np.stack([net(sources.x(i)) for i, net in enumerate(nets)]))


class SyntheticWorld:
    """A spec together with its frozen construction nets."""

    def __init__(self, spec: SyntheticSpec, nets: list[ConstructionNet] | None = None):
        self.spec = spec
        self.nets = nets if nets is not None else build_construction_nets(spec)

    def sample(self, rng: np.random.Generator, batch: int) -> tuple[SourceBatch, ModalityBatch]:
        src = sample_sources(self.spec, batch, rng)
        return src, construct_modalities(self.nets, src)


def dump_dataset(path, world: SyntheticWorld, batches: int, batch_size: int,
                 rng: np.random.Generator) -> None:
    """Write ``batches`` fresh batches to the binary container (kind 1)."""
    srcs, mods = [], []
    for _ in range(batches):
        s, m = world.sample(rng, batch_size)
        srcs.append(s)
        mods.append(m)
    spec = world.spec
    header = {"d_m": spec.d_m, "d_e": spec.d_e, "n": spec.n, "k": spec.k,
              "batch_count": batches, "batch_size": batch_size}
    container.put_u64(header, "seed", spec.seed)
    blocks = {
        "x_m": np.concatenate([s.x_m for s in srcs]),
        "x_e": np.concatenate([s.x_e for s in srcs], axis=1),
        "y": np.concatenate([m.y for m in mods], axis=1),
    }
    container.write(path, container.KIND_SYNTHETIC, header, blocks)


def load_dataset(path) -> tuple[SyntheticSpec, SourceBatch, ModalityBatch]:
    kind, header, blocks = container.read(path)
    if kind != container.KIND_SYNTHETIC:
        raise container.ContainerError(f"{path}: kind {kind} is not a synthetic dump")
    spec = SyntheticSpec(d_m=int(header["d_m"]), d_e=int(header["d_e"]), n=int(header["n"]),
                         k=int(header["k"]), seed=container.get_u64(header, "seed"))
    return spec, SourceBatch(blocks["x_m"], blocks["x_e"]), ModalityBatch(blocks["y"])
