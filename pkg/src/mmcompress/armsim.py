"""Planar two-arm world producing paired (image, proprioception) samples.

Both arms are rendered into one 32x64 grayscale frame, the left arm in the
left half and the right arm in the right half.  Only the right arm's joint
angles and velocities form the proprioceptive modality, so:

* right-arm pose is in both modalities,
* right-arm velocity is in proprioception only,
* left-arm pose is in vision only,
* left-arm velocity is in neither (a control factor).

Joints are continuous revolute joints: angles live on the circle (−π, π]
and each episode draws targets uniformly on it.  Joints track their targets
along the shorter arc with critically damped second-order dynamics,
integrated exactly over each time step.  Rotational symmetry makes a
joint's angle independent of its remaining tracking error, so the left
arm's velocity cannot be inferred from any frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import container
from .nn import stream

ARMS = ("l", "r")
STREAMS = ("pos", "vel", "ee")


@dataclass(frozen=True)
class ArmConfig:
    joints: int = 3
    # link lengths and bases are in units of the image width
    links: tuple[float, ...] = (0.075, 0.07, 0.075)
    base_left: tuple[float, float] = (0.25, 0.25)
    base_right: tuple[float, float] = (0.75, 0.25)
    base_angle: float = np.pi / 2  # joint zero points straight up
    height: int = 32
    width: int = 64
    steps_per_target: int = 10
    dt: float = 0.2
    omega: float = 2.5  # rad/s, tracking bandwidth
    line_halfwidth: float = 0.75  # pixels
    invisible_joints: int = 0  # extra unrendered joints per arm (wrist roll)

    def __post_init__(self):
        if len(self.links) != self.joints:
            raise ValueError(f"{self.joints} joints but {len(self.links)} links")
        reach = sum(self.links) * self.width + self.line_halfwidth + 0.5
        for bx, by in (self.base_left, self.base_right):
            x, y = bx * self.width, by * self.width
            lo = 0.0 if bx < 0.5 else self.width / 2
            if x - reach < lo or x + reach > lo + self.width / 2 or y - reach < 0 \
                    or y + reach > self.height:
                raise ValueError("an arm can leave its half of the frame; shorten links")
        if self.width % 2:
            raise ValueError("image width must be even")

    @property
    def dof(self) -> int:
        return self.joints + self.invisible_joints

    def base_px(self, arm: str) -> np.ndarray:
        base = self.base_left if arm == "l" else self.base_right
        return np.asarray(base, dtype=np.float64) * self.width

    def links_px(self) -> np.ndarray:
        return np.asarray(self.links, dtype=np.float64) * self.width

    @property
    def d_p(self) -> int:
        return 2 * self.dof

    @property
    def target_slices(self) -> dict[str, slice]:
        """Layout of the readout target φ_l ⊕ φ̇_l ⊕ ee_l ⊕ φ_r ⊕ φ̇_r ⊕ ee_r."""
        out, pos = {}, 0
        for arm in ARMS:
            for s, size in zip(STREAMS, (self.dof, self.dof, 2)):
                out[f"{s}_{arm}"] = slice(pos, pos + size)
                pos += size
        return out

    @property
    def d_target(self) -> int:
        return 2 * (2 * self.dof + 2)


@dataclass
class ArmState:
    """Joint angles in (−π, π], velocities and targets, shape (..., 2 arms, dof)."""

    phi: np.ndarray
    dphi: np.ndarray
    target: np.ndarray


def forward_kinematics(phi, links, base=(0.0, 0.0), base_angle: float = 0.0) -> np.ndarray:
    """Planar chain tip: base + Σ_j L_j (cos Σ_{k<=j} φ_k, sin Σ_{k<=j} φ_k).

    ``phi`` may carry leading batch axes; returns (..., 2).
    """
    return joint_positions(phi, links, base, base_angle)[..., -1, :]


def joint_positions(phi, links, base=(0.0, 0.0), base_angle: float = 0.0) -> np.ndarray:
    """Base followed by every joint/tip position, shape (..., J+1, 2)."""
    phi = np.asarray(phi, dtype=np.float64)
    links = np.asarray(links, dtype=np.float64)
    if phi.shape[-1] != len(links):
        raise ValueError(f"{phi.shape[-1]} angles for {len(links)} links")
    angles = base_angle + np.cumsum(phi, axis=-1)
    steps = links[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=-1)  # (..., J, 2)
    base = np.broadcast_to(np.asarray(base, dtype=np.float64), steps.shape[:-2] + (2,))
    return np.concatenate([base[..., None, :], base[..., None, :] + np.cumsum(steps, axis=-2)],
                          axis=-2)


def wrap_angle(a):
    """Map angles onto (−π, π]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=np.float64), 2 * np.pi)


def step_toward_target(state: ArmState, config: ArmConfig) -> ArmState:
    """Advance dt under φ̈ = ω²(target − φ) − 2ωφ̇, solved in closed form.

    For error e = φ − target (the shorter arc) the critically damped solution
    is e(t) = (e0 + (v0 + ω e0) t) e^{−ωt}, v(t) = (v0 − ω (v0 + ω e0) t) e^{−ωt}.
    """
    w, t = config.omega, config.dt
    e0 = wrap_angle(state.phi - state.target)
    v0 = state.dphi
    c = v0 + w * e0
    decay = np.exp(-w * t)
    e1 = (e0 + c * t) * decay
    v1 = (v0 - w * c * t) * decay
    return ArmState(phi=wrap_angle(state.target + e1), dphi=v1, target=state.target)


# -- rendering -----------------------------------------------------------------

def _segment_distance(px: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from pixel centers px (P, 2) to segments a->b (..., 2) -> (..., P)."""
    ax, ay = a[..., 0:1], a[..., 1:2]
    abx, aby = b[..., 0:1] - ax, b[..., 1:2] - ay
    inv = 1.0 / np.maximum(abx * abx + aby * aby, 1e-12)
    apx, apy = px[:, 0] - ax, px[:, 1] - ay
    t = np.clip((apx * abx + apy * aby) * inv, 0.0, 1.0)
    dx, dy = apx - t * abx, apy - t * aby
    return np.sqrt(dx * dx + dy * dy)


def _pixel_centers(config: ArmConfig, arm: str) -> np.ndarray:
    """Centers of the pixels in one arm's half, (H*W/2, 2), y pointing up."""
    half = config.width // 2
    rows, cols = np.mgrid[0:config.height, 0:half]
    x = cols + 0.5 + (half if arm == "r" else 0)
    y = config.height - (rows + 0.5)  # row 0 is the top of the frame
    return np.stack([x.ravel(), y.ravel()], axis=-1)


def render(state: ArmState, config: ArmConfig, chunk: int = 1024) -> np.ndarray:
    """Anti-aliased line drawing of both arms; background −1, arm +1.

    ``state.phi`` has shape (2, dof) or (N, 2, dof); returns (H, W) or (N, H, W).
    Each arm is confined to its own half, so only that half is rasterized.
    """
    phi = np.asarray(state.phi, dtype=np.float64)
    single = phi.ndim == 2
    phi = phi.reshape(-1, 2, config.dof)[..., :config.joints]
    half = config.width // 2
    out = np.empty((len(phi), config.height, config.width), dtype=np.float32)
    links = config.links_px()
    for a, arm in enumerate(ARMS):
        px = _pixel_centers(config, arm).astype(np.float32)
        cols = slice(0, half) if arm == "l" else slice(half, None)
        for lo in range(0, len(phi), chunk):
            part = phi[lo:lo + chunk, a]
            pts = joint_positions(part, links, config.base_px(arm), config.base_angle)
            pts = pts.astype(np.float32)
            d = _segment_distance(px, pts[:, :-1], pts[:, 1:]).min(axis=1)
            ink = np.clip(np.float32(config.line_halfwidth + 0.5) - d, 0.0, 1.0)
            out[lo:lo + chunk, :, cols] = (2.0 * ink - 1.0).reshape(-1, config.height, half)
    return out[0] if single else out


# -- dataset -------------------------------------------------------------------

@dataclass
class Dataset:
    config: ArmConfig
    images: np.ndarray  # (N, H, W) in [-1, 1]
    proprio: np.ndarray  # (N, 2*dof) right-arm φ ⊕ φ̇, z-scored
    truth: np.ndarray  # (N, d_target) raw φ_l ⊕ φ̇_l ⊕ ee_l ⊕ φ_r ⊕ φ̇_r ⊕ ee_r
    proprio_mean: np.ndarray
    proprio_std: np.ndarray
    truth_mean: np.ndarray
    truth_std: np.ndarray
    seed: int = 0
    eval_fraction: float = 0.1
    _split: int = field(init=False, default=0)

    def __post_init__(self):
        # hold out whole episodes at the end so the split is disjoint in time
        per = self.config.steps_per_target
        episodes = len(self.images) // per
        held = int(round(episodes * self.eval_fraction))
        if self.eval_fraction > 0 and episodes > 1:
            held = max(held, 1)
        self._split = (episodes - held) * per

    def __len__(self) -> int:
        return len(self.images)

    @property
    def train_idx(self) -> np.ndarray:
        return np.arange(self._split)

    @property
    def eval_idx(self) -> np.ndarray:
        return np.arange(self._split, len(self.images))

    @property
    def target(self) -> np.ndarray:
        """Readout target, z-scored over the whole dataset."""
        return ((self.truth - self.truth_mean) / self.truth_std).astype(np.float32)

    @property
    def d_v(self) -> int:
        return self.config.height * self.config.width

    @property
    def d_p(self) -> int:
        return self.proprio.shape[1]

    def chance_vision_error(self, idx: np.ndarray | None = None) -> tuple[float, float]:
        """Blank-predictor error per half: predict the per-pixel mean image."""
        idx = self.eval_idx if idx is None else idx
        mean_img = self.images[self.train_idx].mean(axis=0, dtype=np.float64)
        imgs = self.images[idx].astype(np.float64)
        sq = (imgs - mean_img) ** 2
        half = self.config.width // 2
        return float(sq[..., :half].mean()), float(sq[..., half:].mean())


def _simulate(config: ArmConfig, n: int, rng: np.random.Generator):
    per = config.steps_per_target
    episodes = n // per
    phi = wrap_angle(rng.uniform(-np.pi, np.pi, size=(2, config.dof)))
    state = ArmState(phi=phi, dphi=np.zeros_like(phi), target=phi.copy())
    phis = np.empty((n, 2, config.dof))
    dphis = np.empty_like(phis)
    for ep in range(episodes):
        target = wrap_angle(rng.uniform(-np.pi, np.pi, size=(2, config.dof)))
        state = ArmState(state.phi, state.dphi, target)
        for s in range(per):
            state = step_toward_target(state, config)
            phis[ep * per + s] = state.phi
            dphis[ep * per + s] = state.dphi
    return phis, dphis


def generate_dataset(config: ArmConfig, n: int, seed: int, eval_fraction: float = 0.1) -> Dataset:
    """Episodes of ``steps_per_target`` samples toward fresh uniform targets."""
    if n < config.steps_per_target or n % config.steps_per_target:
        raise ValueError(f"N={n} must be a positive multiple of {config.steps_per_target}")
    phis, dphis = _simulate(config, n, stream(seed, "arm_sim"))
    images = render(ArmState(phis, dphis, phis), config)
    links = config.links_px()
    ee = {arm: forward_kinematics(phis[:, a, :config.joints], links, config.base_px(arm),
                                  config.base_angle) / config.width
          for a, arm in enumerate(ARMS)}
    truth = np.concatenate([phis[:, 0], dphis[:, 0], ee["l"], phis[:, 1], dphis[:, 1], ee["r"]],
                           axis=1)
    raw_p = np.concatenate([phis[:, 1], dphis[:, 1]], axis=1)
    p_mean, p_std = raw_p.mean(axis=0), raw_p.std(axis=0)
    t_mean, t_std = truth.mean(axis=0), truth.std(axis=0)
    return Dataset(config=config, images=images,
                   proprio=((raw_p - p_mean) / p_std).astype(np.float32),
                   truth=truth, proprio_mean=p_mean, proprio_std=p_std,
                   truth_mean=t_mean, truth_std=t_std, seed=seed, eval_fraction=eval_fraction)


_CONFIG_FLOATS = ("base_angle", "dt", "omega", "line_halfwidth")
_CONFIG_TUPLES = ("links", "base_left", "base_right")
_CONFIG_INTS = ("joints", "height", "width", "steps_per_target", "invisible_joints")


def save_dataset(path, ds: Dataset) -> None:
    """Arm dataset container (kind 2); config tuples go to the float64 header."""
    cfg = ds.config
    header = {k: getattr(cfg, k) for k in _CONFIG_FLOATS + _CONFIG_INTS}
    for k in _CONFIG_TUPLES:
        header.update({f"{k}.{i}": v for i, v in enumerate(getattr(cfg, k))})
    header.update(N=len(ds), eval_fraction=ds.eval_fraction)
    container.put_u64(header, "seed", ds.seed)
    blocks = {
        "proprio_mean": ds.proprio_mean, "proprio_std": ds.proprio_std,
        "truth_mean": ds.truth_mean, "truth_std": ds.truth_std,
        "images": ds.images, "proprio": ds.proprio, "truth": ds.truth,
    }
    container.write(path, container.KIND_ARM, header, blocks)


def _header_tuple(header: dict[str, float], key: str) -> tuple[float, ...]:
    out, i = [], 0
    while f"{key}.{i}" in header:
        out.append(header[f"{key}.{i}"])
        i += 1
    return tuple(out)


def load_dataset(path) -> Dataset:
    kind, h, b = container.read(path)
    if kind != container.KIND_ARM:
        raise container.ContainerError(f"{path}: kind {kind} is not an arm dataset")
    cfg = ArmConfig(
        **{k: _header_tuple(h, k) for k in _CONFIG_TUPLES},
        **{k: int(h[k]) for k in _CONFIG_INTS},
        **{k: float(h[k]) for k in _CONFIG_FLOATS},
    )
    return Dataset(config=cfg, images=b["images"], proprio=b["proprio"],
                   truth=b["truth"].astype(np.float64),
                   proprio_mean=b["proprio_mean"].astype(np.float64),
                   proprio_std=b["proprio_std"].astype(np.float64),
                   truth_mean=b["truth_mean"].astype(np.float64),
                   truth_std=b["truth_std"].astype(np.float64),
                   seed=container.get_u64(h, "seed"), eval_fraction=float(h["eval_fraction"]))
