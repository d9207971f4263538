"""Joint encoding (JE), original-data control, and cross-modality (CM) pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import Schedule, Sequential, TrainHistory, mlp, mse_loss, train
from ..synthetic import ModalityBatch, SourceBatch, SyntheticWorld


def _check_dz(d_z: int) -> None:
    if d_z < 1:
        raise ValueError(f"d_z must be >= 1 (d_z = 0 is reported analytically), got {d_z}")


@dataclass
class Autoencoder:
    """Encoder/decoder pair; ``target`` names what the decoder reconstructs."""

    encoder: Sequential
    decoder: Sequential
    d_z: int
    target: str = "input"
    history: TrainHistory | None = None

    def encode(self, inputs: np.ndarray) -> np.ndarray:
        return self.encoder.predict(inputs)

    def decode(self, z: np.ndarray) -> np.ndarray:
        return self.decoder.predict(z)

    def parameters(self):
        return self.encoder.parameters() + self.decoder.parameters()


def fit_autoencoder(in_dim: int, out_dim: int, d_z: int, batch_fn, schedule: Schedule,
                    rng: np.random.Generator, label: str, target: str = "input") -> Autoencoder:
    """Train E: in_dim -> d_z and D: d_z -> out_dim on ``batch_fn`` -> (inputs, targets)."""
    _check_dz(d_z)
    ae = Autoencoder(mlp(in_dim, d_z, rng), mlp(d_z, out_dim, rng), d_z, target)

    def loss_fn(batch):
        inputs, targets = batch
        return mse_loss(ae.decoder(ae.encoder(inputs)), targets, out_dim)

    ae.history = train(ae.parameters(), loss_fn, batch_fn, schedule, rng, label)
    return ae


class JEPipeline:
    """Architecture A: autoencode the concatenated modalities."""

    kind = "je"

    def __init__(self, autoencoder: Autoencoder):
        self.autoencoder = autoencoder

    @property
    def d_z(self) -> int:
        return self.autoencoder.d_z

    def encode(self, sources: SourceBatch, mods: ModalityBatch) -> np.ndarray:
        return self.autoencoder.encode(mods.y_concat)

    def reconstruct(self, sources: SourceBatch, mods: ModalityBatch) -> tuple[np.ndarray, np.ndarray]:
        """(reconstruction, what it should equal)."""
        return self.autoencoder.decode(self.encode(sources, mods)), mods.y_concat


class ControlPipeline(JEPipeline):
    """Architecture B: encode y, decode the sources x_0 ⊕ ... ⊕ x_{n-1}."""

    kind = "control"

    def reconstruct(self, sources, mods):
        return self.autoencoder.decode(self.encode(sources, mods)), sources.x_concat()


def train_je(world: SyntheticWorld, d_z: int, schedule: Schedule,
             rng: np.random.Generator) -> JEPipeline:
    _check_dz(d_z)
    spec = world.spec
    dim = spec.n * spec.d_y

    def batch_fn(r, size):
        _, mods = world.sample(r, size)
        y = mods.y_concat
        return y, y

    return JEPipeline(fit_autoencoder(dim, dim, d_z, batch_fn, schedule, rng, f"je d_z={d_z}"))


def train_control(world: SyntheticWorld, d_z: int, schedule: Schedule,
                  rng: np.random.Generator) -> ControlPipeline:
    _check_dz(d_z)
    spec = world.spec

    def batch_fn(r, size):
        src, mods = world.sample(r, size)
        return mods.y_concat, src.x_concat()

    ae = fit_autoencoder(spec.n * spec.d_y, spec.n * spec.d_x, d_z, batch_fn, schedule, rng,
                         f"control d_z={d_z}", target="x")
    return ControlPipeline(ae)


@dataclass
class CrossModalPredictors:
    """``nets[i]`` maps y_i to the ascending concatenation of every other y_j."""

    nets: list[Sequential]
    d_y: int
    histories: list[TrainHistory] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.nets)

    @staticmethod
    def others(mods: ModalityBatch, i: int) -> np.ndarray:
        return np.concatenate([y for j, y in enumerate(mods.y) if j != i], axis=1)

    def predict(self, mods: ModalityBatch) -> list[np.ndarray]:
        return [net.predict(mods.y[i]) for i, net in enumerate(self.nets)]

    def code(self, mods: ModalityBatch) -> np.ndarray:
        """ỹ_{∖0} ⊕ ... ⊕ ỹ_{∖(n-1)}, the high-dimensional shared code."""
        return np.concatenate(self.predict(mods), axis=1)


def train_cross_modal(world: SyntheticWorld, schedule: Schedule,
                      rng: np.random.Generator) -> CrossModalPredictors:
    spec = world.spec
    out_dim = (spec.n - 1) * spec.d_y
    nets = [mlp(spec.d_y, out_dim, rng) for _ in range(spec.n)]
    preds = CrossModalPredictors(nets, spec.d_y)
    for i, net in enumerate(nets):
        def batch_fn(r, size, i=i):
            _, mods = world.sample(r, size)
            return mods.y[i], CrossModalPredictors.others(mods, i)

        def loss_fn(batch, net=net):
            y_i, y_rest = batch
            return mse_loss(net(y_i), y_rest, out_dim)

        preds.histories.append(
            train(net.parameters(), loss_fn, batch_fn, schedule, rng, f"cm predictor {i}"))
    return preds


class CMPipeline(JEPipeline):
    """Architecture C: autoencode the cross-modal predictions."""

    kind = "cm"

    def __init__(self, predictors: CrossModalPredictors, autoencoder: Autoencoder):
        super().__init__(autoencoder)
        self.predictors = predictors

    def encode(self, sources, mods):
        return encode_cm(self.predictors, self.autoencoder, mods)

    def reconstruct(self, sources, mods):
        code = self.predictors.code(mods)
        return self.autoencoder.decode(self.autoencoder.encode(code)), code


def encode_cm(predictors: CrossModalPredictors, autoencoder: Autoencoder,
              mods: ModalityBatch) -> np.ndarray:
    return autoencoder.encode(predictors.code(mods))


def train_cm(world: SyntheticWorld, predictors: CrossModalPredictors, d_z: int,
             schedule: Schedule, rng: np.random.Generator) -> CMPipeline:
    """Autoencoder stage on frozen predictors."""
    _check_dz(d_z)
    spec = world.spec
    dim = spec.n * (spec.n - 1) * spec.d_y

    def batch_fn(r, size):
        _, mods = world.sample(r, size)
        code = predictors.code(mods)
        return code, code

    ae = fit_autoencoder(dim, dim, d_z, batch_fn, schedule, rng, f"cm d_z={d_z}")
    return CMPipeline(predictors, ae)


def build_pipeline(kind: str, world: SyntheticWorld, d_z: int, schedule: Schedule,
                   rng: np.random.Generator, predictors: CrossModalPredictors | None = None):
    if kind == "je":
        return train_je(world, d_z, schedule, rng)
    if kind == "control":
        return train_control(world, d_z, schedule, rng)
    if kind == "cm":
        if predictors is None:
            predictors = train_cross_modal(world, schedule, rng)
        return train_cm(world, predictors, d_z, schedule, rng)
    raise ValueError(f"unknown architecture {kind!r}")

