"""Readout probes on frozen codes, and image-error diagnostics.

A readout is a fresh 3-layer MLP trained to reconstruct one ground-truth
stream from a frozen latent code.  Its per-component MSE on fresh data
measures how much of that stream survived the bottleneck; 1.0 is chance
for unit-variance targets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .nn import Adam, Schedule, Sequential, TrainHistory, backward, mlp, mse_loss, per_sample_mse
from .nn.tensor import NonFiniteError

CHANCE = 1.0
EVAL_BATCHES = 100

# a batch source returns (code, {stream name: target array})
BatchSource = Callable[[np.random.Generator, int], tuple[np.ndarray, dict[str, np.ndarray]]]


@dataclass
class ReadoutNet:
    net: Sequential
    in_dim: int
    out_dim: int
    history: TrainHistory

    def predict(self, z: np.ndarray) -> np.ndarray:
        return self.net.predict(z)


@dataclass(frozen=True)
class ReadoutScore:
    mse: float
    stderr: float
    samples: int


def train_readouts(source: BatchSource, d_z: int, target_dims: dict[str, int],
                   schedule: Schedule, rng: np.random.Generator) -> dict[str, ReadoutNet]:
    """Train one readout per target stream in lockstep on shared batches.

    The nets are independent (separate weights and Adam state); sharing the
    batches only saves encoding work.
    """
    nets = {name: mlp(d_z, dim, rng) for name, dim in target_dims.items()}
    opts = {name: Adam(net.parameters(), lr=schedule.lr) for name, net in nets.items()}
    hists = {name: TrainHistory(label=f"readout {name}") for name in nets}
    for i in range(schedule.batches):
        z, targets = source(rng, schedule.batch_size)
        for name, net in nets.items():
            loss = mse_loss(net(z), targets[name], target_dims[name])
            value = float(loss.data)
            if not np.isfinite(value):
                raise NonFiniteError(f"readout {name}: non-finite loss at batch {i}")
            opts[name].zero_grad()
            backward(loss)
            opts[name].step()
            hists[name].losses.append(value / schedule.batch_size)
    return {name: ReadoutNet(nets[name], d_z, target_dims[name], hists[name]) for name in nets}


def train_readout(source: BatchSource, d_z: int, name: str, dim: int, schedule: Schedule,
                  rng: np.random.Generator) -> ReadoutNet:
    return train_readouts(source, d_z, {name: dim}, schedule, rng)[name]


def evaluate_readouts(readouts: dict[str, ReadoutNet], source: BatchSource,
                      rng: np.random.Generator, batches: int = EVAL_BATCHES,
                      batch_size: int = 128,
                      columns: dict[str, slice] | None = None) -> dict[str, ReadoutScore]:
    """Per-component MSE over fresh batches, with the standard error of the mean.

    ``columns`` restricts the score of a stream to a slice of its components.
    """
    if batches < 1:
        raise ValueError("need at least one evaluation batch")
    columns = columns or {}
    per_sample: dict[str, list[np.ndarray]] = {name: [] for name in readouts}
    for _ in range(batches):
        z, targets = source(rng, batch_size)
        for name, ro in readouts.items():
            cols = columns.get(name, slice(None))
            pred = ro.predict(z)[:, cols].astype(np.float64)
            diff = pred - targets[name][:, cols]
            per_sample[name].append(np.mean(diff * diff, axis=1))
    return {name: score_from_samples(np.concatenate(v)) for name, v in per_sample.items()}


def score_from_samples(per_sample: np.ndarray) -> ReadoutScore:
    per_sample = np.asarray(per_sample, dtype=np.float64)
    n = len(per_sample)
    stderr = float(per_sample.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return ReadoutScore(float(per_sample.mean()), stderr, n)


def chance_score() -> ReadoutScore:
    """d_z = 0: nothing passes, the best readout is the target mean."""
    return ReadoutScore(CHANCE, 0.0, 0)


# -- synthetic streams -------------------------------------------------------

def synthetic_readout_report(pipeline, world, schedule: Schedule, rng: np.random.Generator,
                             eval_rng: np.random.Generator,
                             eval_batches: int = EVAL_BATCHES) -> dict[str, float]:
    """r_m and r_e (plus per-modality r_e_i and standard errors) for a trained pipeline.

    R_m targets x_m.  R_e,i targets the whole x_i = x_e,i ⊕ x_m and is scored
    on its exclusive slice only.  r_e is the uniform mean over modalities.
    """
    spec = world.spec
    d_z = pipeline.d_z

    def source(r, size):
        src, mods = world.sample(r, size)
        z = pipeline.encode(src, mods)
        targets = {f"e{i}": src.x(i) for i in range(spec.n)}
        targets["m"] = src.x_m
        return z, targets

    dims = {}
    if spec.d_m:
        dims["m"] = spec.d_m
    if spec.d_e:
        dims.update({f"e{i}": spec.d_x for i in range(spec.n)})
    readouts = train_readouts(source, d_z, dims, schedule, rng)
    cols = {f"e{i}": slice(0, spec.d_e) for i in range(spec.n)}
    scores = evaluate_readouts(readouts, source, eval_rng, eval_batches, schedule.batch_size, cols)
    return report_from_scores(scores, spec.n)


def report_from_scores(scores: dict[str, ReadoutScore], n: int) -> dict[str, float]:
    out: dict[str, float] = {}
    nan = float("nan")
    out["r_m"] = scores["m"].mse if "m" in scores else nan
    out["r_m_se"] = scores["m"].stderr if "m" in scores else nan
    per_e = [scores[f"e{i}"] for i in range(n) if f"e{i}" in scores]
    for i, s in enumerate(per_e):
        out[f"r_e{i}"] = s.mse
    out["r_e"] = float(np.mean([s.mse for s in per_e])) if per_e else nan
    # modalities are independent estimates, so their standard errors add in quadrature
    out["r_e_se"] = (float(np.sqrt(np.sum([s.stderr**2 for s in per_e]))) / len(per_e)
                     if per_e else nan)
    return out


def zero_latent_report(n: int) -> dict[str, float]:
    out = {"r_m": CHANCE, "r_m_se": 0.0, "r_e": CHANCE, "r_e_se": 0.0}
    out.update({f"r_e{i}": CHANCE for i in range(n)})
    return out


# -- robot streams -----------------------------------------------------------

def robot_readout_report(pipeline, dataset, schedule: Schedule, rng: np.random.Generator,
                         ) -> tuple[dict[str, float], np.ndarray]:
    """Per-stream readout MSEs, per-half vision errors and the eval error map.

    One readout R maps z to the z-scored φ_l ⊕ φ̇_l ⊕ ee_l ⊕ φ_r ⊕ φ̇_r ⊕ ee_r;
    it trains on the training split and every number is measured on the
    held-out split.
    """
    z_all = pipeline.encode(dataset.images, dataset.proprio)
    target = dataset.target
    train_idx, eval_idx = dataset.train_idx, dataset.eval_idx

    def source(r, size):
        idx = r.choice(train_idx, size=size)
        return z_all[idx], {"target": target[idx]}

    ro = train_readout(source, pipeline.d_z, "target", target.shape[1], schedule, rng)
    pred = ro.predict(z_all[eval_idx])
    out: dict[str, float] = {}
    for name, cols in dataset.config.target_slices.items():
        score = score_from_samples(per_sample_mse(pred[:, cols], target[eval_idx][:, cols]))
        out[name], out[name + "_se"] = score.mse, score.stderr
    images = dataset.images[eval_idx]
    recon, _ = pipeline.reconstruct(images, dataset.proprio[eval_idx])
    out["vision_left"], out["vision_right"] = vision_error_split(recon, images)
    out["chance_left"], out["chance_right"] = dataset.chance_vision_error(eval_idx)
    return out, error_map(recon, images)


def robot_zero_latent_report(dataset) -> dict[str, float]:
    """d_z = 0: every stream at chance and the blank image as reconstruction."""
    out: dict[str, float] = {}
    for name in dataset.config.target_slices:
        out[name], out[name + "_se"] = CHANCE, 0.0
    left, right = dataset.chance_vision_error()
    out.update(vision_left=left, vision_right=right, chance_left=left, chance_right=right)
    return out


# -- image diagnostics -------------------------------------------------------

def vision_error_split(recon: np.ndarray, images: np.ndarray) -> tuple[float, float]:
    """Mean squared pixel error of the left (column < W/2) and right halves."""
    recon = np.asarray(recon, dtype=np.float64).reshape(images.shape)
    width = images.shape[-1]
    if width % 2:
        raise ValueError(f"image width must be even, got {width}")
    sq = (recon - images) ** 2
    half = width // 2
    return float(sq[..., :half].mean()), float(sq[..., half:].mean())


def error_map(recon: np.ndarray, images: np.ndarray) -> np.ndarray:
    """Per-pixel squared error averaged over samples, image-shaped (H, W)."""
    recon = np.asarray(recon, dtype=np.float64).reshape(images.shape)
    sq = (recon - np.asarray(images, dtype=np.float64)) ** 2
    return sq.reshape(len(images), *images.shape[-2:]).mean(axis=0)


def write_pgm(path, image: np.ndarray, vmin: float | None = None,
              vmax: float | None = None) -> None:
    """8-bit binary portable graymap; values linearly mapped to 0..255."""
    image = np.asarray(image, dtype=np.float64)
    lo = image.min() if vmin is None else vmin
    hi = image.max() if vmax is None else vmax
    span = hi - lo if hi > lo else 1.0
    px = np.clip(np.round((image - lo) / span * 255), 0, 255).astype(np.uint8)
    h, w = px.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(m.group(1)), int(m.group(2))
    return np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=m.end()).reshape(h, w)


def write_error_map(path, emap: np.ndarray) -> None:
    """Error map as PGM (0 = black = no error) plus a raw float64 ``.npy`` sidecar."""
    path = Path(path)
    write_pgm(path, emap, vmin=0.0)
    np.save(path.with_suffix(".npy"), emap)
