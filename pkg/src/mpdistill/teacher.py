"""Multi-step denoising-diffusion policy over trajectory segments.

The denoiser network predicts primitive parameters from a noisy trajectory,
an observation, and the noise level; decoding those parameters gives the
denoised trajectory, whose difference from the noisy input supplies the
score for a first-order probability-flow sampler. Variance-exploding
convention throughout: a noisy sample at level sigma is clean + sigma * z in
the standardized trajectory space.

The network output is wrapped in the usual scale-stabilizing
parameterization

    theta_hat = c_skip(sigma) * theta_proxy + c_out(sigma) * raw,

where theta_proxy is the least-squares pullback of the noisy trajectory
through the decoder's position map, c_skip = sd^2 / (sigma^2 + sd^2),
c_out = sigma * sd / sqrt(sigma^2 + sd^2), and network inputs are scaled by
c_in = 1 / sqrt(sigma^2 + sd^2) with sd the data-scale estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nets, storage
from .context import PolicyContext
from .nets import ApproximatorSpec, ApproximatorWeights
from .prodmp import ProDMPParams, Trajectory

_TEACHER_FORMAT = "teacher-ckpt"
_TEACHER_VERSION = 1


@dataclass(frozen=True)
class NoiseSchedule:
    """Strictly decreasing noise levels; levels[0] = T, levels[-1] = epsilon."""

    levels: np.ndarray
    sigma_data: float = 1.0

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        if levels.ndim != 1 or levels.size < 1:
            raise ValueError("levels must be a non-empty 1-D array")
        if not np.all(np.isfinite(levels)) or np.any(levels <= 0):
            raise ValueError("levels must be finite and positive")
        if np.any(np.diff(levels) >= 0):
            raise ValueError("levels must be strictly decreasing")
        object.__setattr__(self, "levels", levels)

    @property
    def n(self) -> int:
        return self.levels.size

    @property
    def epsilon(self) -> float:
        return float(self.levels[-1])

    @property
    def top(self) -> float:
        return float(self.levels[0])


def make_schedule(
    n: int, sigma_min: float, sigma_max: float, rho: float = 7.0, sigma_data: float = 1.0
) -> NoiseSchedule:
    """Power-interpolated level grid from sigma_max down to sigma_min.

    levels[i] = (sigma_max^(1/rho) + (i/(n-1)) * (sigma_min^(1/rho) -
    sigma_max^(1/rho)))^rho. Endpoints are pinned exactly.
    """
    if n < 2:
        raise ValueError("need at least 2 levels")
    if not (0 < sigma_min < sigma_max):
        raise ValueError("require 0 < sigma_min < sigma_max")
    if rho <= 0:
        raise ValueError("rho must be positive")
    i = np.arange(n, dtype=np.float64)
    lo, hi = sigma_min ** (1.0 / rho), sigma_max ** (1.0 / rho)
    levels = (hi + (i / (n - 1)) * (lo - hi)) ** rho
    levels[0], levels[-1] = sigma_max, sigma_min
    return NoiseSchedule(levels=levels, sigma_data=sigma_data)


def add_noise(tau0: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Perturb a clean flattened trajectory: tau0 + sigma * z."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    tau0 = np.asarray(tau0, dtype=np.float64)
    return tau0 + sigma * rng.standard_normal(tau0.shape)


def _scalings(sigma, sigma_data):
    c_in = 1.0 / np.sqrt(sigma**2 + sigma_data**2)
    c_skip = sigma_data**2 / (sigma**2 + sigma_data**2)
    c_out = sigma * sigma_data * c_in
    return c_in, c_skip, c_out


@dataclass
class TeacherModel:
    """Denoiser network plus everything needed to reproduce its sampling."""

    ctx: PolicyContext
    weights: ApproximatorWeights
    schedule: NoiseSchedule
    emb_width: int = 16
    net_evals: int = field(default=0, compare=False)

    @property
    def spec(self) -> ApproximatorSpec:
        return self.weights.spec

    def net_input_dim(self) -> int:
        return self.ctx.traj_dim + self.ctx.obs_dim + self.emb_width


def denoiser_spec(
    ctx: PolicyContext, hidden_dims: tuple[int, ...], activation: str, emb_width: int, seed: int
) -> ApproximatorSpec:
    return ApproximatorSpec(
        input_dim=ctx.traj_dim + ctx.obs_dim + emb_width,
        hidden_dims=hidden_dims,
        output_dim=ctx.theta_dim,
        activation=activation,
        init_seed=seed,
    )


@dataclass(frozen=True)
class DenoiseResult:
    theta_std: np.ndarray          # preconditioned parameter prediction
    theta: ProDMPParams            # same, in raw units
    trajectory: Trajectory         # decoded on the horizon grid
    traj_std: np.ndarray           # standardized flat denoised positions


def denoise(model: TeacherModel, tau_noisy: np.ndarray, obs: np.ndarray, sigma: float) -> DenoiseResult:
    """One denoiser evaluation at noise level sigma (standardized spaces)."""
    ctx = model.ctx
    eps, top = model.schedule.epsilon, model.schedule.top
    if not (eps * (1 - 1e-9) <= sigma <= top * (1 + 1e-9)):
        raise ValueError(f"sigma {sigma} outside schedule range [{eps}, {top}]")
    sd = model.schedule.sigma_data
    c_in, c_skip, c_out = _scalings(sigma, sd)
    obs = np.asarray(obs, dtype=np.float64)
    obs_std = ctx.std_obs(obs)
    bc = ctx.bc_from_obs(obs)
    comp = ctx.complementary_positions(bc)
    net_in = np.concatenate([c_in * tau_noisy, obs_std, nets.noise_embedding(sigma, model.emb_width)])
    raw, _ = nets.forward(model.weights, net_in)
    model.net_evals += 1
    theta_proxy = ctx.pullback_theta_std(tau_noisy, comp)
    theta_std = c_skip * theta_proxy + c_out * raw
    if not np.all(np.isfinite(theta_std)):
        raise ValueError("non-finite denoiser output")
    theta_raw = ctx.unstd_theta(theta_std)
    traj = ctx.decode_horizon(theta_raw, bc)
    traj_std = ctx.std_traj(traj.positions.reshape(-1))
    return DenoiseResult(
        theta_std=theta_std,
        theta=ProDMPParams.from_flat(theta_raw, ctx.dof),
        trajectory=traj,
        traj_std=traj_std,
    )


def score(traj_hat: np.ndarray, tau_noisy: np.ndarray, sigma: float) -> np.ndarray:
    """Score estimate (denoised - noisy) / sigma^2, elementwise."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return (np.asarray(traj_hat) - np.asarray(tau_noisy)) / sigma**2


def sample_multistep(
    model: TeacherModel,
    obs: np.ndarray,
    schedule: NoiseSchedule | None,
    rng: np.random.Generator,
) -> tuple[ProDMPParams, Trajectory]:
    """Euler probability-flow sampling down the schedule.

    Starts from sigma_max * z and performs one denoiser evaluation per
    level; returns the parameter prediction of the final evaluation and its
    decoded trajectory.
    """
    if schedule is None:
        schedule = model.schedule
    levels = schedule.levels
    tau = levels[0] * rng.standard_normal(model.ctx.traj_dim)
    result = None
    for i, sigma in enumerate(levels):
        result = denoise(model, tau, obs, float(sigma))
        if i < levels.size - 1:
            d = (tau - result.traj_std) / sigma
            tau = tau + (levels[i + 1] - sigma) * d
    return result.theta, result.trajectory


@dataclass(frozen=True)
class TrainBatch:
    """Standardized training rows: observations, clean trajectories, boundaries."""

    obs_std: np.ndarray    # (B, obs_dim)
    tau_std: np.ndarray    # (B, H*dof)
    bc_pos: np.ndarray     # (B, dof)
    bc_vel: np.ndarray     # (B, dof)

    def __len__(self) -> int:
        return self.obs_std.shape[0]


def _denoise_batch(model: TeacherModel, tau_noisy, obs_std, comp, sigmas):
    """Batched preconditioned denoise; returns intermediates for backprop."""
    ctx = model.ctx
    sd = model.schedule.sigma_data
    c_in, c_skip, c_out = _scalings(sigmas[:, None], sd)
    emb = nets.noise_embedding_batch(sigmas, model.emb_width)
    net_in = np.concatenate([c_in * tau_noisy, obs_std, emb], axis=1)
    raw, tape = nets.forward_batch(model.weights, net_in)
    model.net_evals += len(sigmas)
    theta_proxy = ctx.pullback_theta_std(tau_noisy, comp)
    theta_std = c_skip * theta_proxy + c_out * raw
    theta_raw = ctx.unstd_theta(theta_std)
    pos_raw = theta_raw @ ctx.position_map.T + comp
    traj_std = (pos_raw - ctx.traj_mean) / ctx.traj_std
    return traj_std, theta_std, tape, c_out


def teacher_train_step(
    model: TeacherModel,
    batch: TrainBatch,
    opt: nets.OptimizerState,
    rng: np.random.Generator,
    p_mean: float = -1.2,
    p_std: float = 1.2,
) -> tuple[float, nets.OptimizerState]:
    """One denoising-regression step with log-normal level sampling.

    Loss per row is lambda(sigma) * mean((denoised_traj - tau0)^2) with the
    standard 1/c_out^2 level weighting; applies one optimizer update to the
    model weights in place and returns the scalar loss.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    ctx = model.ctx
    B = len(batch)
    sd = model.schedule.sigma_data
    sigmas = np.exp(p_mean + p_std * rng.standard_normal(B))
    sigmas = np.clip(sigmas, model.schedule.epsilon, model.schedule.top)
    z = rng.standard_normal(batch.tau_std.shape)
    tau_noisy = batch.tau_std + sigmas[:, None] * z
    comp = ctx.complementary_positions_batch(batch.bc_pos, batch.bc_vel)

    traj_std, _, tape, c_out = _denoise_batch(model, tau_noisy, batch.obs_std, comp, sigmas)
    err = traj_std - batch.tau_std
    lam = (sigmas**2 + sd**2) / (sigmas * sd) ** 2
    loss = float(np.mean(lam * np.mean(err**2, axis=1)))
    if not np.isfinite(loss):
        raise ValueError("non-finite training loss")

    d_traj = (2.0 / (B * err.shape[1])) * lam[:, None] * err
    d_theta_raw = (d_traj / ctx.traj_std) @ ctx.position_map
    d_theta_std = d_theta_raw * ctx.theta_std
    d_raw = c_out * d_theta_std
    grads, _ = nets.backward(model.weights, tape, d_raw)
    new_opt, new_w = nets.optimizer_step(opt, model.weights, grads)
    model.weights = new_w
    return loss, new_opt


@dataclass(frozen=True)
class TeacherTrainConfig:
    steps: int = 4000
    batch: int = 128
    lr: float = 1e-3
    hidden_dims: tuple[int, ...] = (192, 192)
    activation: str = "gelu"
    emb_width: int = 16
    n_levels: int = 20
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    p_mean: float = -1.2
    p_std: float = 1.2

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TeacherTrainConfig":
        d = dict(d)
        d["hidden_dims"] = tuple(d["hidden_dims"])
        return cls(**d)


def cosine_lr(lr: float, step: int, total: int, floor: float = 0.05) -> float:
    """Cosine decay from lr to floor * lr over the training run."""
    frac = 0.5 * (1.0 + np.cos(np.pi * step / max(total, 1)))
    return lr * (floor + (1.0 - floor) * frac)


def train_teacher(dataset, cfg: TeacherTrainConfig, seed: int) -> tuple[TeacherModel, np.ndarray]:
    """Train a teacher on a demonstration dataset; returns (model, loss history)."""
    from .envs.dataset import build_context, training_arrays

    ctx = build_context(dataset)
    obs_std, tau_std, bc_pos, bc_vel = training_arrays(dataset, ctx)
    sigma_data = float(np.std(tau_std))
    schedule = make_schedule(cfg.n_levels, cfg.sigma_min, cfg.sigma_max, cfg.rho, sigma_data)
    spec = denoiser_spec(ctx, cfg.hidden_dims, cfg.activation, cfg.emb_width, seed)
    model = TeacherModel(ctx=ctx, weights=nets.init(spec), schedule=schedule, emb_width=cfg.emb_width)
    opt = nets.init_optimizer(model.weights, cfg.lr)
    rng = np.random.default_rng(seed)
    n = obs_std.shape[0]
    history = np.empty(cfg.steps)
    for step in range(cfg.steps):
        opt = replace(opt, lr=cosine_lr(cfg.lr, step, cfg.steps))
        idx = rng.integers(0, n, size=min(cfg.batch, n))
        batch = TrainBatch(obs_std[idx], tau_std[idx], bc_pos[idx], bc_vel[idx])
        loss, opt = teacher_train_step(model, batch, opt, rng, cfg.p_mean, cfg.p_std)
        history[step] = loss
    return model, history


def save_teacher(model: TeacherModel, path) -> None:
    meta = {
        "ctx": model.ctx.to_meta(),
        "spec": model.spec.to_dict(),
        "emb_width": model.emb_width,
        "sigma_data": model.schedule.sigma_data,
    }
    arrays = {"weights": model.weights.flat, "levels": model.schedule.levels}
    arrays.update(model.ctx.stat_arrays())
    storage.write_container(path, _TEACHER_FORMAT, _TEACHER_VERSION, meta, arrays)


def load_teacher(path) -> TeacherModel:
    meta, arrays = storage.read_container(path, _TEACHER_FORMAT, _TEACHER_VERSION)
    ctx = PolicyContext.from_storage(meta["ctx"], arrays)
    spec = ApproximatorSpec.from_dict(meta["spec"])
    schedule = NoiseSchedule(levels=arrays["levels"], sigma_data=meta["sigma_data"])
    return TeacherModel(
        ctx=ctx,
        weights=ApproximatorWeights(spec, arrays["weights"]),
        schedule=schedule,
        emb_width=meta["emb_width"],
    )
