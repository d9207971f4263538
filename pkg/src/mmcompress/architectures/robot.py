"""Vision + proprioception pipelines for the two-arm dataset.

A pipeline maps (image, proprioception) to a code z and back.  Vision goes
through a convolutional encoder E_v to a 100-d feature, proprioception
through the identity E_p; E_pre compresses the concatenation to d_z and
D_post expands it to 100 + d_p, which is split into the input of the
deconvolutional D_v and the identity D_p.

Under the AES option images are first compressed by a separately trained
convolutional autoencoder, and E_v = D_v = identity on its 100-d code.

The CM variant trains M_v: y_p -> vision and M_p: vision -> y_p first and
then autoencodes their predictions in place of the raw modalities.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..armsim import Dataset
from ..nn import (
    Conv2d,
    Deconv2d,
    Dense,
    Module,
    Reshape,
    Schedule,
    Sequential,
    Tensor,
    TrainHistory,
    concat,
    mlp,
    mse_loss,
    no_grad,
    take,
    train,
)

OPTIONS = ("default", "aes")
KINDS = ("je", "cm")


class ConfigError(ValueError):
    """Network settings incompatible with the data."""


@dataclass(frozen=True)
class RobotNetConfig:
    channels: tuple[int, int] = (32, 64)
    visual_code: int = 100
    split_index: int = 100  # where z_post divides into vision and proprioception
    hidden: int = 200
    autoencoder_batches: int = 0  # E/D training length; 0 keeps the run schedule

    def __post_init__(self):
        if self.autoencoder_batches < 0:
            raise ConfigError(f"autoencoder_batches must be >= 0, got {self.autoencoder_batches}")


def _check_image(height: int, width: int) -> None:
    if height % 4 or width % 4:
        raise ConfigError(f"{height}x{width} image does not halve twice under the conv stack")


def conv_encoder(height: int, width: int, out_dim: int, channels: tuple[int, int],
                 rng: np.random.Generator) -> Sequential:
    """(B, H, W) -> two stride-2 convs -> flatten -> linear dense ``out_dim``."""
    _check_image(height, width)
    c1, c2 = channels
    flat = c2 * (height // 4) * (width // 4)
    return Sequential([
        Reshape(1, height, width),
        Conv2d(1, c1, rng=rng),
        Conv2d(c1, c2, rng=rng),
        Reshape(flat),
        Dense(flat, out_dim, rng=rng),
    ])


def deconv_decoder(in_dim: int, height: int, width: int, channels: tuple[int, int],
                   rng: np.random.Generator) -> Sequential:
    """``in_dim`` -> dense to the flattened map -> two stride-2 deconvs -> (B, H, W)."""
    _check_image(height, width)
    c1, c2 = channels
    h, w = height // 4, width // 4
    return Sequential([
        Dense(in_dim, c2 * h * w, "relu", rng=rng),
        Reshape(c2, h, w),
        Deconv2d(c2, c1, rng=rng),
        Deconv2d(c1, 1, activation="linear", rng=rng),
        Reshape(height, width),
    ])


def _sample_idx(idx: np.ndarray):
    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        return np.sort(rng.choice(idx, size=size, replace=False))
    return draw


@dataclass
class AesPreEncoder:
    """Convolutional autoencoder giving a frozen 100-d visual code."""

    encoder: Sequential
    decoder: Sequential
    history: TrainHistory | None = None

    def __post_init__(self):
        for p in self.encoder.parameters() + self.decoder.parameters():
            p.requires_grad = False

    @property
    def code_dim(self) -> int:
        return self.encoder.layers[-1].out_dim

    def encode(self, images: np.ndarray) -> np.ndarray:
        return self.encoder.predict(images, batch_size=512)

    def decode(self, code: np.ndarray) -> np.ndarray:
        return self.decoder.predict(code, batch_size=512)


def train_aes_pre(dataset: Dataset, schedule: Schedule, rng: np.random.Generator,
                  net: RobotNetConfig = RobotNetConfig()) -> AesPreEncoder:
    cfg = dataset.config
    enc = conv_encoder(cfg.height, cfg.width, net.visual_code, net.channels, rng)
    dec = deconv_decoder(net.visual_code, cfg.height, cfg.width, net.channels, rng)
    d_v = dataset.d_v
    images = dataset.images
    draw = _sample_idx(dataset.train_idx)

    def loss_fn(idx):
        y = images[idx]
        return mse_loss(dec(enc(y)), y, d_v)

    hist = train(enc.parameters() + dec.parameters(), loss_fn, lambda r, s: draw(r, s),
                 schedule, rng, "aes pre-encoder")
    return AesPreEncoder(enc, dec, hist)


@dataclass
class RobotPredictors:
    """M_v: y_p -> predicted vision input, M_p: vision input -> predicted y_p."""

    m_v: Sequential
    m_p: Sequential
    histories: list[TrainHistory] = field(default_factory=list)


class RobotPipeline(Module):
    """Split encoder/decoder around a d_z bottleneck, default or AES option."""

    def __init__(self, option: str, kind: str, d_z: int, d_p: int, height: int, width: int,
                 rng: np.random.Generator, net: RobotNetConfig = RobotNetConfig(),
                 aes: AesPreEncoder | None = None, predictors: RobotPredictors | None = None):
        if option not in OPTIONS or kind not in KINDS:
            raise ValueError(f"unknown pipeline {option}/{kind}")
        if d_z < 1:
            raise ValueError(f"d_z must be >= 1, got {d_z}")
        if option == "aes" and aes is None:
            raise ValueError("the AES option needs a trained pre-encoder")
        if kind == "cm" and predictors is None:
            raise ValueError("the CM variant needs trained predictors")
        _check_image(height, width)
        self.option, self.kind, self.d_z, self.d_p = option, kind, d_z, d_p
        self.height, self.width = height, width
        self.net = net
        self.aes = aes
        self.predictors = predictors
        v = net.visual_code
        if option == "default":
            self.enc_v = conv_encoder(height, width, v, net.channels, rng)
            self.dec_v = deconv_decoder(net.split_index, height, width, net.channels, rng)
        else:
            if net.split_index != v:
                raise ConfigError("under AES the vision part of z_post must match the code size")
            self.enc_v = self.dec_v = None  # identity on the AES code
        self.enc_pre = mlp(v + d_p, d_z, rng, hidden=net.hidden)
        self.dec_post = mlp(d_z, net.split_index + d_p, rng, hidden=net.hidden)
        self.history: TrainHistory | None = None

    @property
    def d_vision(self) -> int:
        """Size of the vision term the loss is normalized by."""
        return self.height * self.width if self.option == "default" else self.net.visual_code

    # -- graph pieces ---------------------------------------------------------

    def _encode(self, v: Tensor, p: Tensor) -> Tensor:
        feat = self.enc_v(v) if self.enc_v is not None else v
        return self.enc_pre(concat([feat, p], axis=1))

    def _decode(self, z: Tensor) -> tuple[Tensor, Tensor]:
        post = self.dec_post(z)
        s = self.net.split_index
        v_part = take(post, 0, s, axis=1)
        p_part = take(post, s, s + self.d_p, axis=1)
        v_hat = self.dec_v(v_part) if self.dec_v is not None else v_part
        return v_hat, p_part

    def loss(self, v: np.ndarray, p: np.ndarray) -> Tensor:
        """(1/(2 d_p)) Σ(ỹ_p − y_p)² + (1/(2 d_v)) Σ(ỹ_v − y_v)²."""
        v_hat, p_hat = self._decode(self._encode(Tensor(v), Tensor(p)))
        return mse_loss(p_hat, p, 2 * self.d_p) + mse_loss(v_hat, v, 2 * self.d_vision)

    # -- inputs ----------------------------------------------------------------

    def inputs(self, images: np.ndarray, proprio: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """What the autoencoder sees: raw modalities, AES codes, or CM predictions."""
        v = self.aes.encode(images) if self.option == "aes" else images
        if self.kind == "cm":
            return (self.predictors.m_v.predict(proprio, batch_size=512),
                    self.predictors.m_p.predict(v, batch_size=512))
        return v, proprio

    def named_tensors(self, prefix: str = ""):
        out = []
        for name in ("enc_v", "dec_v", "enc_pre", "dec_post"):
            m = getattr(self, name)
            if m is not None:
                out.extend(m.named_tensors(f"{prefix}{name}."))
        return out

    # -- inference -------------------------------------------------------------

    def encode(self, images: np.ndarray, proprio: np.ndarray, chunk: int = 512) -> np.ndarray:
        out = []
        for lo in range(0, len(images), chunk):
            v, p = self.inputs(images[lo:lo + chunk], proprio[lo:lo + chunk])
            with no_grad():
                out.append(self._encode(Tensor(v), Tensor(p)).data)
        return np.concatenate(out)

    def reconstruct(self, images: np.ndarray, proprio: np.ndarray,
                    chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
        """Reconstructed (image, proprioception), images in pixel space."""
        vs, ps = [], []
        for lo in range(0, len(images), chunk):
            v, p = self.inputs(images[lo:lo + chunk], proprio[lo:lo + chunk])
            with no_grad():
                v_hat, p_hat = self._decode(self._encode(Tensor(v), Tensor(p)))
            v_hat = v_hat.data
            if self.option == "aes":
                v_hat = self.aes.decode(v_hat)
            vs.append(v_hat.reshape(-1, self.height, self.width))
            ps.append(p_hat.data)
        return np.concatenate(vs), np.concatenate(ps)


def _fit(pipe: RobotPipeline, dataset: Dataset, schedule: Schedule,
         rng: np.random.Generator, label: str, net: RobotNetConfig) -> RobotPipeline:
    if net.autoencoder_batches:
        schedule = replace(schedule, batches=net.autoencoder_batches)
    draw = _sample_idx(dataset.train_idx)
    images, proprio = dataset.images, dataset.proprio

    def batch_fn(r, size):
        idx = draw(r, size)
        return pipe.inputs(images[idx], proprio[idx])

    pipe.history = train(pipe.parameters(), lambda b: pipe.loss(*b), batch_fn, schedule, rng,
                         label)
    return pipe


def train_robot_default(dataset: Dataset, d_z: int, schedule: Schedule,
                        rng: np.random.Generator, net: RobotNetConfig = RobotNetConfig(),
                        aes: AesPreEncoder | None = None) -> RobotPipeline:
    """Joint encoding of (image, proprioception); AES option when ``aes`` is given."""
    cfg = dataset.config
    option = "aes" if aes is not None else "default"
    pipe = RobotPipeline(option, "je", d_z, dataset.d_p, cfg.height, cfg.width, rng, net, aes)
    return _fit(pipe, dataset, schedule, rng, f"robot {option} je d_z={d_z}", net)


def train_robot_predictors(dataset: Dataset, schedule: Schedule, rng: np.random.Generator,
                           net: RobotNetConfig = RobotNetConfig(),
                           aes: AesPreEncoder | None = None) -> RobotPredictors:
    cfg = dataset.config
    d_p = dataset.d_p
    if aes is None:
        m_v = Sequential([mlp(d_p, net.hidden, rng, hidden=net.hidden, depth=2),
                          deconv_decoder(net.hidden, cfg.height, cfg.width, net.channels, rng)])
        m_p = Sequential([conv_encoder(cfg.height, cfg.width, net.hidden, net.channels, rng),
                          mlp(net.hidden, d_p, rng, hidden=net.hidden, depth=2)])
        d_v = dataset.d_v
    else:
        m_v = mlp(d_p, aes.code_dim, rng, hidden=net.hidden)
        m_p = mlp(aes.code_dim, d_p, rng, hidden=net.hidden)
        d_v = aes.code_dim
    draw = _sample_idx(dataset.train_idx)
    images, proprio = dataset.images, dataset.proprio

    def vision(idx):
        return aes.encode(images[idx]) if aes is not None else images[idx]

    # L_{M_v} = Σ (1/d_v)(ỹ_∖p − y_v)², L_{M_p} = Σ (1/d_p)(ỹ_∖v − y_p)²
    h_v = train(m_v.parameters(), lambda b: mse_loss(m_v(b[0]), b[1], d_v),
                lambda r, s: (lambda i: (proprio[i], vision(i)))(draw(r, s)),
                schedule, rng, "robot M_v")
    h_p = train(m_p.parameters(), lambda b: mse_loss(m_p(b[0]), b[1], d_p),
                lambda r, s: (lambda i: (vision(i), proprio[i]))(draw(r, s)),
                schedule, rng, "robot M_p")
    for p in m_v.parameters() + m_p.parameters():
        p.requires_grad = False
    return RobotPredictors(m_v, m_p, [h_v, h_p])


def train_robot_cm(dataset: Dataset, d_z: int, schedule: Schedule, rng: np.random.Generator,
                   net: RobotNetConfig = RobotNetConfig(), aes: AesPreEncoder | None = None,
                   predictors: RobotPredictors | None = None) -> RobotPipeline:
    """Cross-modal variant; predictors are trained first unless supplied."""
    if predictors is None:
        predictors = train_robot_predictors(dataset, schedule, rng, net, aes)
    cfg = dataset.config
    option = "aes" if aes is not None else "default"
    pipe = RobotPipeline(option, "cm", d_z, dataset.d_p, cfg.height, cfg.width, rng, net, aes,
                         predictors)
    return _fit(pipe, dataset, schedule, rng, f"robot {option} cm d_z={d_z}", net)
