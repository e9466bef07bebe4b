"""One-step policy trained by consistency distillation of the teacher.

The student maps a noisy parameter vector straight to a clean one. Its
output is parameterized so the smallest schedule level is an exact
identity,

    f(theta, t) = c_skip(t) * theta + c_out(t) * raw(theta, o, t),
    c_skip(t) = sd^2 / ((t - eps)^2 + sd^2),
    c_out(t)  = sd * (t - eps) / sqrt(t^2 + sd^2),

which makes f(theta, eps) = theta hold for arbitrary weights. Training
pairs a noisy level with the teacher's k-step probability-flow denoise of
the same sample and regresses the student at the noisy level onto a frozen
EMA copy of itself at the cleaner level; gradients flow only through the
noisy-level branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nets, storage
from .context import PolicyContext
from .nets import ApproximatorSpec, ApproximatorWeights
from .prodmp import ProDMPParams, Trajectory
from .teacher import NoiseSchedule, TeacherModel, _denoise_batch, cosine_lr

_STUDENT_FORMAT = "student-ckpt"
_STUDENT_VERSION = 1


@dataclass(frozen=True)
class DistillConfig:
    k: int = 1
    mu: float = 0.95
    lambda_weight: str = "uniform"
    metric: str = "l2"                  # or "pseudo_huber"
    steps: int = 5000
    batch: int = 128
    lr: float = 1e-3
    hidden_dims: tuple[int, ...] = (192, 192)
    activation: str = "gelu"
    emb_width: int = 16
    # Fraction of rows whose noisy-level parameter input is drawn straight
    # from N(0, I) at the top level, matching the one-step generation prior.
    # Set to 0.0 to feed only teacher predictions.
    top_level_mix: float = 0.25

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if self.lambda_weight != "uniform":
            raise ValueError(f"unknown lambda weighting {self.lambda_weight!r}")
        if self.metric not in ("l2", "pseudo_huber"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if not 0.0 <= self.top_level_mix <= 1.0:
            raise ValueError("top_level_mix must lie in [0, 1]")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    def to_dict(self) -> dict:
        d = self.__dict__.copy()
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DistillConfig":
        d = dict(d)
        d["hidden_dims"] = tuple(d["hidden_dims"])
        return cls(**d)


@dataclass
class StudentModel:
    ctx: PolicyContext
    weights: ApproximatorWeights          # phi
    target_weights: ApproximatorWeights   # phi^-, EMA copy
    schedule: NoiseSchedule
    emb_width: int = 16
    net_evals: int = field(default=0, compare=False)

    @property
    def spec(self) -> ApproximatorSpec:
        return self.weights.spec


def student_spec(
    ctx: PolicyContext, hidden_dims: tuple[int, ...], activation: str, emb_width: int, seed: int
) -> ApproximatorSpec:
    return ApproximatorSpec(
        input_dim=ctx.theta_dim + ctx.obs_dim + emb_width,
        hidden_dims=hidden_dims,
        output_dim=ctx.theta_dim,
        activation=activation,
        init_seed=seed,
    )


def _boundary_scalings(ts, eps, sd):
    c_in = 1.0 / np.sqrt(ts**2 + sd**2)
    c_skip = sd**2 / ((ts - eps) ** 2 + sd**2)
    c_out = sd * (ts - eps) * c_in
    return c_in, c_skip, c_out


def consistency_apply(
    student: StudentModel,
    theta_noisy: np.ndarray,
    obs: np.ndarray,
    t: float,
    use_target: bool = False,
) -> np.ndarray:
    """Evaluate the consistency function on one standardized parameter vector."""
    eps, top = student.schedule.epsilon, student.schedule.top
    if not (eps * (1 - 1e-9) <= t <= top * (1 + 1e-9)):
        raise ValueError(f"t {t} outside schedule range [{eps}, {top}]")
    sd = student.schedule.sigma_data
    c_in, c_skip, c_out = _boundary_scalings(float(t), eps, sd)
    obs_std = student.ctx.std_obs(obs)
    theta_noisy = np.asarray(theta_noisy, dtype=np.float64)
    net_in = np.concatenate(
        [c_in * theta_noisy, obs_std, nets.noise_embedding(t, student.emb_width)]
    )
    w = student.target_weights if use_target else student.weights
    raw, _ = nets.forward(w, net_in)
    student.net_evals += 1
    return c_skip * theta_noisy + c_out * raw


def _consistency_batch(student, weights, theta_noisy, obs_std, ts):
    sd = student.schedule.sigma_data
    eps = student.schedule.epsilon
    c_in, c_skip, c_out = _boundary_scalings(ts[:, None], eps, sd)
    emb = nets.noise_embedding_batch(ts, student.emb_width)
    net_in = np.concatenate([c_in * theta_noisy, obs_std, emb], axis=1)
    raw, tape = nets.forward_batch(weights, net_in)
    student.net_evals += ts.size
    return c_skip * theta_noisy + c_out * raw, tape, c_out


def ema_update(phi_minus: np.ndarray, phi: np.ndarray, mu: float) -> np.ndarray:
    """Elementwise convex combination mu * phi_minus + (1 - mu) * phi."""
    phi_minus = np.asarray(phi_minus, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if phi_minus.shape != phi.shape:
        raise ValueError("shape mismatch in EMA update")
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    return mu * phi_minus + (1.0 - mu) * phi


def teacher_k_step(
    teacher: TeacherModel,
    tau_noisy: np.ndarray,
    obs: np.ndarray,
    n: int,
    k: int,
) -> np.ndarray:
    """Chain k unit Euler probability-flow updates from level t_{n+k} to t_n.

    Levels are indexed the way the schedule is written (t_N = largest down
    to t_1 = smallest); n is the index of the target level. k = 0 returns
    the input unchanged. Deterministic: no fresh noise enters the update.
    """
    levels = teacher.schedule.levels
    N = levels.size
    if k < 0 or n < 1 or n + k > N:
        raise ValueError(f"invalid level indices n={n}, k={k} for N={N}")
    ctx = teacher.ctx
    obs = np.asarray(obs, dtype=np.float64)
    obs_std = ctx.std_obs(obs)[None, :]
    comp = ctx.complementary_positions_batch(
        obs[ctx.bc_pos_idx][None, :], obs[ctx.bc_vel_idx][None, :]
    )
    tau = np.asarray(tau_noisy, dtype=np.float64)[None, :]
    start = N - n - k  # array index of t_{n+k}
    for j in range(start, start + k):
        sigma = levels[j]
        traj_std, _, _, _ = _denoise_batch(teacher, tau, obs_std, comp, np.array([sigma]))
        tau = tau + (levels[j + 1] - sigma) * (tau - traj_std) / sigma
    return tau[0]


@dataclass(frozen=True)
class DistillStepInfo:
    loss: float
    diag_theta0_rms: float | None = None


def distill_step(
    teacher: TeacherModel,
    student: StudentModel,
    batch,
    cfg: DistillConfig,
    opt: nets.OptimizerState,
    rng: np.random.Generator,
    diagnostics: bool = False,
) -> tuple[DistillStepInfo, nets.OptimizerState]:
    """One consistency-distillation update.

    Per row: draw n uniformly, noise the clean trajectory to level t_{n+k},
    read the teacher's parameter prediction there, run the teacher k steps
    down the probability flow, read its prediction at t_n, and regress the
    student at t_{n+k} onto the frozen EMA target at t_n. The target branch
    contributes no gradient; phi^- changes only through the EMA update.
    """
    ctx = student.ctx
    levels = teacher.schedule.levels
    N = levels.size
    if cfg.k > N - 1:
        raise ValueError("skip interval exceeds schedule length")
    B = len(batch)
    if B == 0:
        raise ValueError("empty batch")

    n_draw = rng.integers(1, N - cfg.k + 1, size=B)
    mix_draw = rng.random(B)
    z = rng.standard_normal(batch.tau_std.shape)
    theta_prior = rng.standard_normal((B, ctx.theta_dim))
    mix = mix_draw < cfg.top_level_mix
    n_draw[mix] = N - cfg.k  # noisy level pinned to the top for mixed rows

    hi_idx = N - n_draw - cfg.k
    lo_idx = hi_idx + cfg.k
    t_hi = levels[hi_idx]
    t_lo = levels[lo_idx]

    tau_hi = batch.tau_std + t_hi[:, None] * z
    comp = ctx.complementary_positions_batch(batch.bc_pos, batch.bc_vel)

    _, theta_hi, _, _ = _denoise_batch(teacher, tau_hi, batch.obs_std, comp, t_hi)
    theta_hi = np.where(mix[:, None], theta_prior, theta_hi)

    # Teacher k-step denoise, grouped by shared starting level.
    tau_lo = np.empty_like(tau_hi)
    for idx in np.unique(hi_idx):
        rows = hi_idx == idx
        tau = tau_hi[rows]
        for j in range(idx, idx + cfg.k):
            sigma = levels[j]
            traj_std, _, _, _ = _denoise_batch(
                teacher, tau, batch.obs_std[rows], comp[rows],
                np.full(int(rows.sum()), sigma),
            )
            tau = tau + (levels[j + 1] - sigma) * (tau - traj_std) / sigma
        tau_lo[rows] = tau
    _, theta_lo, _, _ = _denoise_batch(teacher, tau_lo, batch.obs_std, comp, t_lo)

    s_target, _, _ = _consistency_batch(
        student, student.target_weights, theta_lo, batch.obs_std, t_lo
    )
    s_online, tape, c_out_hi = _consistency_batch(
        student, student.weights, theta_hi, batch.obs_std, t_hi
    )

    diff = s_online - s_target
    if cfg.metric == "l2":
        loss = float(np.mean(diff**2))
        d_s = (2.0 / diff.size) * diff
    else:
        c = 0.00054 * np.sqrt(ctx.theta_dim)
        per_row = np.sqrt(np.sum(diff**2, axis=1) + c**2)
        loss = float(np.mean(per_row - c))
        d_s = diff / (per_row[:, None] * B)
    if not np.isfinite(loss):
        raise ValueError("non-finite distillation loss")

    d_raw = c_out_hi * d_s
    grads, _ = nets.backward(student.weights, tape, d_raw)
    new_opt, new_w = nets.optimizer_step(opt, student.weights, grads)
    student.weights = new_w
    student.target_weights = student.target_weights.with_flat(
        ema_update(student.target_weights.flat, student.weights.flat, cfg.mu)
    )

    diag = None
    if diagnostics:
        # Teacher prediction at the clean endpoint; logged only and never
        # part of the loss. Compared against the least-squares parameters
        # of the clean segment as a drift indicator.
        _, theta0_hat, _, _ = _denoise_batch(
            teacher, batch.tau_std, batch.obs_std, comp,
            np.full(B, teacher.schedule.epsilon),
        )
        theta0_fit = ctx.pullback_theta_std(batch.tau_std, comp)
        diag = float(np.sqrt(np.mean((theta0_hat - theta0_fit) ** 2)))
    return DistillStepInfo(loss=loss, diag_theta0_rms=diag), new_opt


def one_step_generate(
    student: StudentModel, obs: np.ndarray, rng: np.random.Generator
) -> tuple[ProDMPParams, Trajectory]:
    """Draw a unit-Gaussian latent at the top level and decode in one step.

    Exactly one network evaluation; the decoded trajectory starts at the
    boundary condition taken from the observation.
    """
    ctx = student.ctx
    theta_latent = rng.standard_normal(ctx.theta_dim)
    theta0_std = consistency_apply(student, theta_latent, obs, student.schedule.top)
    theta_raw = ctx.unstd_theta(theta0_std)
    bc = ctx.bc_from_obs(obs)
    traj = ctx.decode_horizon(theta_raw, bc)
    return ProDMPParams.from_flat(theta_raw, ctx.dof), traj


def cross_level_consistency(
    teacher: TeacherModel,
    student: StudentModel,
    observations: np.ndarray,
    rng: np.random.Generator,
) -> float:
    """Mean consecutive-level output discrepancy along teacher trajectories.

    For each observation, runs the teacher's probability flow from seeded
    noise, records the teacher's parameter prediction at every level, and
    measures how much the student's output moves between adjacent levels.
    """
    from .teacher import denoise

    levels = student.schedule.levels
    gaps = []
    for obs in observations:
        tau = levels[0] * rng.standard_normal(student.ctx.traj_dim)
        outs = []
        for i, sigma in enumerate(levels):
            res = denoise(teacher, tau, obs, float(sigma))
            outs.append(consistency_apply(student, res.theta_std, obs, float(sigma)))
            if i < levels.size - 1:
                d = (tau - res.traj_std) / sigma
                tau = tau + (levels[i + 1] - sigma) * d
        outs = np.asarray(outs)
        gaps.append(np.linalg.norm(np.diff(outs, axis=0), axis=1).mean())
    return float(np.mean(gaps))


def train_student(
    teacher: TeacherModel, dataset, cfg: DistillConfig, seed: int
) -> tuple[StudentModel, np.ndarray]:
    """Distill a teacher into a one-step student; returns (model, loss history)."""
    from .envs.dataset import training_arrays
    from .teacher import TrainBatch

    ctx = teacher.ctx
    obs_std, tau_std, bc_pos, bc_vel = training_arrays(dataset, ctx)
    spec = student_spec(ctx, cfg.hidden_dims, cfg.activation, cfg.emb_width, seed)
    weights = nets.init(spec)
    student = StudentModel(
        ctx=ctx,
        weights=weights,
        target_weights=weights.copy(),
        schedule=teacher.schedule,
        emb_width=cfg.emb_width,
    )
    opt = nets.init_optimizer(student.weights, cfg.lr)
    rng = np.random.default_rng(seed)
    n = obs_std.shape[0]
    history = np.empty(cfg.steps)
    for step in range(cfg.steps):
        opt = replace(opt, lr=cosine_lr(cfg.lr, step, cfg.steps))
        idx = rng.integers(0, n, size=min(cfg.batch, n))
        batch = TrainBatch(obs_std[idx], tau_std[idx], bc_pos[idx], bc_vel[idx])
        info, opt = distill_step(teacher, student, batch, cfg, opt, rng)
        history[step] = info.loss
    return student, history


def save_student(student: StudentModel, path) -> None:
    meta = {
        "ctx": student.ctx.to_meta(),
        "spec": student.spec.to_dict(),
        "emb_width": student.emb_width,
        "sigma_data": student.schedule.sigma_data,
    }
    arrays = {
        "weights": student.weights.flat,
        "target_weights": student.target_weights.flat,
        "levels": student.schedule.levels,
    }
    arrays.update(student.ctx.stat_arrays())
    storage.write_container(path, _STUDENT_FORMAT, _STUDENT_VERSION, meta, arrays)


def load_student(path) -> StudentModel:
    meta, arrays = storage.read_container(path, _STUDENT_FORMAT, _STUDENT_VERSION)
    ctx = PolicyContext.from_storage(meta["ctx"], arrays)
    spec = ApproximatorSpec.from_dict(meta["spec"])
    return StudentModel(
        ctx=ctx,
        weights=ApproximatorWeights(spec, arrays["weights"]),
        target_weights=ApproximatorWeights(spec, arrays["target_weights"]),
        schedule=NoiseSchedule(levels=arrays["levels"], sigma_data=meta["sigma_data"]),
        emb_width=meta["emb_width"],
    )
