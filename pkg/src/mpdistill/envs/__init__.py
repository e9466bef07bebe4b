"""Toy environments with scripted experts, plus the dataset pipeline."""

from __future__ import annotations

from dataclasses import dataclass

from . import ballcatch, pushblock


@dataclass(frozen=True)
class EnvInfo:
    name: str
    obs_dim: int
    dof: int
    bc_pos_idx: tuple[int, ...]
    bc_vel_idx: tuple[int, ...]
    tiers: tuple[str, ...]
    dt: float


ENV_INFO = {
    "pushblock": EnvInfo(
        name="pushblock",
        obs_dim=pushblock.OBS_DIM,
        dof=pushblock.DOF,
        bc_pos_idx=pushblock.BC_POS_IDX,
        bc_vel_idx=pushblock.BC_VEL_IDX,
        tiers=("default",),
        dt=0.05,
    ),
    "ballcatch": EnvInfo(
        name="ballcatch",
        obs_dim=ballcatch.OBS_DIM,
        dof=ballcatch.DOF,
        bc_pos_idx=ballcatch.BC_POS_IDX,
        bc_vel_idx=ballcatch.BC_VEL_IDX,
        tiers=ballcatch.TIERS,
        dt=0.05,
    ),
}


def env_info(name: str) -> EnvInfo:
    try:
        return ENV_INFO[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; known: {sorted(ENV_INFO)}") from None


def make_env(name: str, seed: int, tier: str = None, **overrides):
    if name == "pushblock":
        cfg = pushblock.PushConfig(**overrides) if overrides else None
        return pushblock.PushBlockEnv(seed, cfg=cfg)
    if name == "ballcatch":
        cfg = ballcatch.CatchConfig(**overrides) if overrides else None
        return ballcatch.BallCatchEnv(seed, tier=tier or "easy", cfg=cfg)
    raise ValueError(f"unknown environment {name!r}")


def make_expert(env):
    """Scripted per-step controller for an environment instance."""
    if isinstance(env, pushblock.PushBlockEnv):
        return pushblock.PushExpert(env.cfg)
    if isinstance(env, ballcatch.BallCatchEnv):
        return ballcatch.CatchExpert(env.cfg)
    raise ValueError(f"no expert for {type(env).__name__}")
