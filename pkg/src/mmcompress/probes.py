"""Direct probes of the raw arm modalities, run before any compression.

Three probe networks are trained on the training split and scored on the
held-out split (per-component MSE on z-scored targets):

* proprioception MLP -> right-arm φ, φ̇, ee
* vision conv net -> left-arm φ, ee and right-arm φ
* vision conv net + proprioception -> left-arm φ̇
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .architectures.robot import conv_encoder
from .armsim import Dataset
from .nn import Module, Schedule, Tensor, concat, mlp, mse_loss, per_sample_mse, train
from .nn.tensor import no_grad

# thresholds of the information contract
DETERMINISTIC_MAX = 0.05  # (a) right arm from proprioception
VISIBLE_MAX = 0.3  # (b) left arm from vision
PARTIAL_MAX = 0.9  # (b) right-arm φ at least partly visible
CHANCE_MIN = 0.9  # (c) left-arm φ̇ from both modalities


class VisionProbe(Module):
    """Conv features of the image, optionally joined with proprioception, then an MLP."""

    def __init__(self, height: int, width: int, d_p: int, out_dim: int,
                 channels: tuple[int, int], rng: np.random.Generator, hidden: int = 200):
        self.features = conv_encoder(height, width, hidden, channels, rng)
        self.d_p = d_p
        self.head = mlp(hidden + d_p, out_dim, rng, hidden=hidden)

    def forward_pair(self, images, proprio) -> Tensor:
        f = self.features(images)
        if self.d_p:
            f = concat([f, Tensor(proprio)], axis=1)
        return self.head(f)

    def predict(self, images, proprio, chunk: int = 512) -> np.ndarray:
        out = []
        with no_grad():
            for lo in range(0, len(images), chunk):
                p = proprio[lo:lo + chunk] if self.d_p else None
                out.append(self.forward_pair(Tensor(images[lo:lo + chunk]), p).data)
        return np.concatenate(out)


@dataclass(frozen=True)
class ProbeResult:
    scores: dict[str, float]  # "<input>:<stream>" -> MSE

    @property
    def clause_a(self) -> bool:
        return all(self.scores[f"proprio:{s}_r"] < DETERMINISTIC_MAX
                   for s in ("pos", "vel", "ee"))

    @property
    def clause_b(self) -> bool:
        return (self.scores["vision:pos_l"] < VISIBLE_MAX
                and self.scores["vision:ee_l"] < VISIBLE_MAX
                and self.scores["vision:pos_r"] < PARTIAL_MAX)

    @property
    def clause_c(self) -> bool:
        return self.scores["both:vel_l"] >= CHANCE_MIN

    @property
    def passed(self) -> bool:
        return self.clause_a and self.clause_b and self.clause_c


def _streams(dataset: Dataset, names: list[str]) -> tuple[np.ndarray, dict[str, slice]]:
    sl = dataset.config.target_slices
    cols, layout, pos = [], {}, 0
    for name in names:
        s = sl[name]
        cols.append(dataset.target[:, s])
        layout[name] = slice(pos, pos + s.stop - s.start)
        pos += s.stop - s.start
    return np.concatenate(cols, axis=1), layout


def _score(pred, target, layout, prefix) -> dict[str, float]:
    return {f"{prefix}:{n}": float(per_sample_mse(pred[:, s], target[:, s]).mean())
            for n, s in layout.items()}


def probe_information_contract(dataset: Dataset, schedule: Schedule, rng: np.random.Generator,
                               channels: tuple[int, int] = (8, 16)) -> ProbeResult:
    cfg = dataset.config
    train_idx, eval_idx = dataset.train_idx, dataset.eval_idx
    images, proprio = dataset.images, dataset.proprio
    scores: dict[str, float] = {}

    # (a) right arm from proprioception
    target, layout = _streams(dataset, ["pos_r", "vel_r", "ee_r"])
    net = mlp(dataset.d_p, target.shape[1], rng)
    dim = target.shape[1]
    train(net.parameters(), lambda b: mse_loss(net(b[0]), b[1], dim),
          lambda r, s: (lambda i: (proprio[i], target[i]))(r.choice(train_idx, s)),
          schedule, rng, "probe proprio")
    scores.update(_score(net.predict(proprio[eval_idx]), target[eval_idx], layout, "proprio"))

    # (b) left arm (and right-arm pose) from vision; (c) left-arm velocity from both
    for prefix, names, use_p in (("vision", ["pos_l", "ee_l", "pos_r"], False),
                                 ("both", ["vel_l"], True)):
        target, layout = _streams(dataset, names)
        dim = target.shape[1]
        probe = VisionProbe(cfg.height, cfg.width, dataset.d_p if use_p else 0, dim,
                            channels, rng)

        def loss_fn(idx, probe=probe, target=target, dim=dim):
            return mse_loss(probe.forward_pair(Tensor(images[idx]), proprio[idx]),
                            target[idx], dim)

        train(probe.parameters(), loss_fn, lambda r, s: r.choice(train_idx, s),
              schedule, rng, f"probe {prefix}")
        pred = probe.predict(images[eval_idx], proprio[eval_idx])
        scores.update(_score(pred, target[eval_idx], layout, prefix))
    return ProbeResult(scores)
