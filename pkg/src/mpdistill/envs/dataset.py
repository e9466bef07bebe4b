"""Demonstration datasets: expert rollouts sliced into fitted segments.

Each record pairs the observation at a slice start with the executed
end-effector trajectory over the following horizon, the boundary condition
at the slice start, and the least-squares primitive parameters reproducing
that segment. Records whose fit residual exceeds the configured threshold
are discarded (counted in the header). Standardization statistics over the
kept records travel with the file so downstream models are self-contained.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import prodmp, storage
from ..context import PolicyContext
from ..prodmp import BoundaryCondition, ProDMPConfig, Trajectory
from . import env_info, make_env, make_expert

_DATASET_FORMAT = "demo-dataset"
_DATASET_VERSION = 1

# Demonstration mix over difficulty tiers for tiered environments,
# normalized internally (three easy : three medium : one hard).
DEFAULT_TIER_WEIGHTS = {"easy": 3, "medium": 3, "hard": 1}


@dataclass(frozen=True)
class DatasetConfig:
    tau: float = 1.0
    rate: float = 20.0
    stride: int = 4
    fit_residual_max: float = 0.02
    num_basis: int = 10
    alpha: float = 25.0
    grid_points: int = 1000

    @property
    def horizon(self) -> int:
        return int(round(self.tau * self.rate))

    def seg_times(self) -> np.ndarray:
        return np.arange(self.horizon) / self.rate

    def prodmp_cfg(self, dof: int) -> ProDMPConfig:
        return ProDMPConfig(
            num_basis=self.num_basis, alpha=self.alpha, tau=self.tau,
            dof=dof, grid_points=self.grid_points,
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        return cls(**d)


@dataclass
class Dataset:
    env_name: str
    cfg: DatasetConfig
    observations: np.ndarray   # (R, obs_dim)
    segments: np.ndarray       # (R, H, dof) executed positions
    bc_pos: np.ndarray         # (R, dof)
    bc_vel: np.ndarray         # (R, dof)
    theta: np.ndarray          # (R, dof*(K+1)) fitted raw parameters
    fit_rms: np.ndarray        # (R,)
    tier_id: np.ndarray        # (R,) index into env tiers
    episode_id: np.ndarray     # (R,)
    discarded: int = 0
    episodes: int = 0
    attempts: int = 0

    def __len__(self) -> int:
        return self.observations.shape[0]

    @property
    def dof(self) -> int:
        return self.segments.shape[2] if self.segments.size else env_info(self.env_name).dof

    @property
    def tiers(self) -> tuple[str, ...]:
        return env_info(self.env_name).tiers

    def save(self, path) -> None:
        meta = {
            "env_name": self.env_name,
            "cfg": self.cfg.to_dict(),
            "discarded": self.discarded,
            "episodes": self.episodes,
            "attempts": self.attempts,
            "obs_dim": int(self.observations.shape[1]) if self.observations.size else env_info(self.env_name).obs_dim,
        }
        arrays = {
            "observations": self.observations,
            "segments": self.segments,
            "bc_pos": self.bc_pos,
            "bc_vel": self.bc_vel,
            "theta": self.theta,
            "fit_rms": self.fit_rms,
            "tier_id": self.tier_id,
            "episode_id": self.episode_id,
        }
        storage.write_container(path, _DATASET_FORMAT, _DATASET_VERSION, meta, arrays)

    @classmethod
    def load(cls, path) -> "Dataset":
        meta, arrays = storage.read_container(path, _DATASET_FORMAT, _DATASET_VERSION)
        return cls(
            env_name=meta["env_name"],
            cfg=DatasetConfig.from_dict(meta["cfg"]),
            discarded=meta["discarded"],
            episodes=meta["episodes"],
            attempts=meta["attempts"],
            **arrays,
        )

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(
            env_name=self.env_name, cfg=self.cfg,
            observations=self.observations[indices],
            segments=self.segments[indices],
            bc_pos=self.bc_pos[indices], bc_vel=self.bc_vel[indices],
            theta=self.theta[indices], fit_rms=self.fit_rms[indices],
            tier_id=self.tier_id[indices], episode_id=self.episode_id[indices],
            discarded=self.discarded, episodes=self.episodes, attempts=self.attempts,
        )


def _tier_counts(env_name: str, count: int) -> list[tuple[str, int]]:
    tiers = env_info(env_name).tiers
    if len(tiers) == 1:
        return [(tiers[0], count)]
    weights = np.array([DEFAULT_TIER_WEIGHTS.get(t, 1) for t in tiers], dtype=float)
    raw = weights / weights.sum() * count
    counts = np.floor(raw).astype(int)
    for i in np.argsort(raw - counts)[::-1][: count - counts.sum()]:
        counts[i] += 1
    return list(zip(tiers, counts.tolist()))


def _rollout(env, expert) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run the expert to episode end; returns (obs, ee_pos, ee_vel) per step."""
    obs_log, pos_log, vel_log = [], [], []
    while not env.done:
        obs_log.append(env.observe())
        p, v = env.ee_state()
        pos_log.append(p)
        vel_log.append(v)
        env.step(expert.command(env))
    obs_log.append(env.observe())
    p, v = env.ee_state()
    pos_log.append(p)
    vel_log.append(v)
    return np.asarray(obs_log), np.asarray(pos_log), np.asarray(vel_log)


def generate_dataset(
    env_name: str, count: int, cfg: DatasetConfig, seed: int, tier: str | None = None
) -> Dataset:
    """Collect `count` successful expert demonstrations and slice them.

    Tiered environments split `count` across tiers by the default weights
    unless a single tier is forced. Deterministic given the seed; failed
    expert attempts consume seeds and are counted, not stored.
    """
    info = env_info(env_name)
    H = cfg.horizon
    table = prodmp.precompute_basis(cfg.prodmp_cfg(info.dof))
    seg_times = cfg.seg_times()
    seeds = np.random.default_rng(seed).integers(0, 2**63 - 1, size=max(8 * count, 64))

    plan = [(tier, count)] if tier is not None else _tier_counts(env_name, count)
    rows = {k: [] for k in ("obs", "seg", "bcp", "bcv", "theta", "rms", "tier", "ep")}
    discarded = 0
    episodes = 0
    attempts = 0
    seed_cursor = 0
    for tier_name, tier_count in plan:
        tier_idx = info.tiers.index(tier_name) if tier_name else 0
        got = 0
        while got < tier_count:
            if seed_cursor >= seeds.size:
                raise RuntimeError(
                    f"expert failed too often on {env_name}/{tier_name}; "
                    f"collected {got}/{tier_count}"
                )
            env = make_env(env_name, int(seeds[seed_cursor]), tier=tier_name)
            seed_cursor += 1
            attempts += 1
            expert = make_expert(env)
            obs_log, pos_log, vel_log = _rollout(env, expert)
            if not env.success:
                continue
            got += 1
            ep_id = episodes
            episodes += 1
            for s in range(0, len(pos_log) - H + 1, cfg.stride):
                segment = pos_log[s : s + H]
                bc = BoundaryCondition(pos_log[s], vel_log[s])
                traj = Trajectory(times=seg_times, positions=segment,
                                  velocities=vel_log[s : s + H])
                fit = prodmp.fit_params(traj, bc, table)
                if fit.residual_rms > cfg.fit_residual_max:
                    discarded += 1
                    continue
                rows["obs"].append(obs_log[s])
                rows["seg"].append(segment)
                rows["bcp"].append(pos_log[s])
                rows["bcv"].append(vel_log[s])
                rows["theta"].append(fit.params.flat)
                rows["rms"].append(fit.residual_rms)
                rows["tier"].append(tier_idx)
                rows["ep"].append(ep_id)

    n = len(rows["obs"])
    dof = info.dof
    theta_dim = dof * (cfg.num_basis + 1)
    return Dataset(
        env_name=env_name,
        cfg=cfg,
        observations=np.asarray(rows["obs"]).reshape(n, info.obs_dim),
        segments=np.asarray(rows["seg"]).reshape(n, H, dof),
        bc_pos=np.asarray(rows["bcp"]).reshape(n, dof),
        bc_vel=np.asarray(rows["bcv"]).reshape(n, dof),
        theta=np.asarray(rows["theta"]).reshape(n, theta_dim),
        fit_rms=np.asarray(rows["rms"], dtype=np.float64),
        tier_id=np.asarray(rows["tier"], dtype=np.int64),
        episode_id=np.asarray(rows["ep"], dtype=np.int64),
        discarded=discarded,
        episodes=episodes,
        attempts=attempts,
    )


def build_context(dataset: Dataset) -> PolicyContext:
    """Policy context with standardization statistics from the dataset."""
    if len(dataset) == 0:
        raise ValueError("cannot build a context from an empty dataset")
    info = env_info(dataset.env_name)
    traj_flat = dataset.segments.reshape(len(dataset), -1)
    return PolicyContext(
        env_name=dataset.env_name,
        prodmp_cfg=dataset.cfg.prodmp_cfg(info.dof),
        seg_times=dataset.cfg.seg_times(),
        obs_dim=info.obs_dim,
        bc_pos_idx=np.asarray(info.bc_pos_idx),
        bc_vel_idx=np.asarray(info.bc_vel_idx),
        theta_mean=dataset.theta.mean(axis=0),
        theta_std=dataset.theta.std(axis=0),
        traj_mean=traj_flat.mean(axis=0),
        traj_std=traj_flat.std(axis=0),
        obs_mean=dataset.observations.mean(axis=0),
        obs_std=dataset.observations.std(axis=0),
    )


def training_arrays(dataset: Dataset, ctx: PolicyContext):
    """Standardized (obs, traj, bc_pos, bc_vel) arrays for training loops."""
    obs_std = (dataset.observations - ctx.obs_mean) / ctx.obs_std
    traj_flat = dataset.segments.reshape(len(dataset), -1)
    tau_std = (traj_flat - ctx.traj_mean) / ctx.traj_std
    return obs_std, tau_std, dataset.bc_pos.copy(), dataset.bc_vel.copy()


def split_by_episode(dataset: Dataset, holdout_fraction: float, seed: int):
    """(train, heldout) split along whole episodes, deterministic."""
    rng = np.random.default_rng(seed)
    eps = np.unique(dataset.episode_id)
    rng.shuffle(eps)
    n_hold = max(1, int(round(holdout_fraction * eps.size)))
    hold = set(eps[:n_hold].tolist())
    mask = np.array([e in hold for e in dataset.episode_id])
    return dataset.subset(np.flatnonzero(~mask)), dataset.subset(np.flatnonzero(mask))


def subsample_fraction(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Episode-level subselection keeping tier proportions fixed."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    if fraction == 1.0:
        return dataset
    rng = np.random.default_rng(seed)
    keep_eps = []
    for t in np.unique(dataset.tier_id):
        eps = np.unique(dataset.episode_id[dataset.tier_id == t])
        rng.shuffle(eps)
        n_keep = max(1, int(round(fraction * eps.size)))
        keep_eps.extend(eps[:n_keep].tolist())
    keep = set(keep_eps)
    mask = np.array([e in keep for e in dataset.episode_id])
    return dataset.subset(np.flatnonzero(mask))
