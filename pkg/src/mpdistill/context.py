"""Shared conditioning context for the trajectory policies.

Bundles everything a policy needs besides its network weights: the
primitive configuration, the planning-horizon sample times, per-coordinate
standardization statistics for parameters / trajectories / observations,
and which observation entries hold the end-effector state used as the
decode boundary condition. Derived decode machinery (basis table sampled at
the horizon grid, least-squares pullback matrix) is cached on first use.

All diffusion-side quantities are standardized: trajectories and parameter
vectors are shifted/scaled per coordinate to zero mean and unit variance
over the training set, so noise levels are in data-scale units and the
one-step policy's latent draws are plain standard normals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels, prodmp
from .prodmp import BasisTable, BoundaryCondition, ProDMPConfig, ProDMPParams, Trajectory


def _std_floor(std: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    out = np.asarray(std, dtype=np.float64).copy()
    out[out < floor] = 1.0
    return out


@dataclass(frozen=True)
class PolicyContext:
    env_name: str
    prodmp_cfg: ProDMPConfig
    seg_times: np.ndarray          # (H,) relative sample times of a plan
    obs_dim: int
    bc_pos_idx: np.ndarray         # observation indices of end-effector position
    bc_vel_idx: np.ndarray         # observation indices of end-effector velocity
    theta_mean: np.ndarray         # (theta_dim,)
    theta_std: np.ndarray
    traj_mean: np.ndarray          # (H*dof,) flattened time-major
    traj_std: np.ndarray
    obs_mean: np.ndarray           # (obs_dim,)
    obs_std: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("seg_times", "theta_mean", "traj_mean", "obs_mean"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        for name in ("theta_std", "traj_std", "obs_std"):
            object.__setattr__(self, name, _std_floor(getattr(self, name)))
        for name in ("bc_pos_idx", "bc_vel_idx"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))

    # -- dimensions -------------------------------------------------------
    @property
    def dof(self) -> int:
        return self.prodmp_cfg.dof

    @property
    def horizon(self) -> int:
        return self.seg_times.size

    @property
    def theta_dim(self) -> int:
        return self.prodmp_cfg.theta_dim

    @property
    def traj_dim(self) -> int:
        return self.horizon * self.dof

    # -- cached decode machinery ------------------------------------------
    @property
    def basis(self) -> BasisTable:
        if "basis" not in self._cache:
            self._cache["basis"] = prodmp.precompute_basis(self.prodmp_cfg)
        return self._cache["basis"]

    @property
    def _horizon_samples(self):
        if "hs" not in self._cache:
            self._cache["hs"] = self.basis.sample_at(self.seg_times)
        return self._cache["hs"]

    @property
    def position_map(self) -> np.ndarray:
        """(traj_dim, theta_dim) map from flat theta to flat positions."""
        if "pos_map" not in self._cache:
            L = prodmp.decode_linear_map(self.basis, self.seg_times, self.dof)
            self._cache["pos_map"] = np.ascontiguousarray(L[: self.traj_dim])
        return self._cache["pos_map"]

    @property
    def pullback(self) -> np.ndarray:
        """(theta_dim, traj_dim) pseudo-inverse of the position map."""
        if "pullback" not in self._cache:
            self._cache["pullback"] = np.linalg.pinv(self.position_map)
        return self._cache["pullback"]

    # -- boundary conditions ----------------------------------------------
    def bc_from_obs(self, obs: np.ndarray) -> BoundaryCondition:
        obs = np.asarray(obs, dtype=np.float64)
        return BoundaryCondition(obs[self.bc_pos_idx], obs[self.bc_vel_idx])

    def complementary_positions(self, bc: BoundaryCondition) -> np.ndarray:
        """Flat homogeneous-solution positions at the horizon grid."""
        _, _, y1q, y2q, _, _ = self._horizon_samples
        c1, c2 = prodmp.boundary_coefficients(bc, self.basis)
        return (np.outer(y1q, c1) + np.outer(y2q, c2)).reshape(-1)

    def complementary_positions_batch(self, bc_pos: np.ndarray, bc_vel: np.ndarray) -> np.ndarray:
        """Row-wise complementary positions, shape (B, H*dof)."""
        _, _, y1q, y2q, _, _ = self._horizon_samples
        omega = self.prodmp_cfg.omega
        c1 = np.asarray(bc_pos, dtype=np.float64)
        c2 = np.asarray(bc_vel, dtype=np.float64) + omega * c1
        B = c1.shape[0]
        comp = y1q[None, :, None] * c1[:, None, :] + y2q[None, :, None] * c2[:, None, :]
        return comp.reshape(B, -1)

    def decode_horizon(self, theta_raw: np.ndarray, bc: BoundaryCondition) -> Trajectory:
        """Decode a raw flat parameter vector on the horizon grid."""
        phi_q, phid_q, y1q, y2q, y1dq, y2dq = self._horizon_samples
        c1, c2 = prodmp.boundary_coefficients(bc, self.basis)
        theta = np.ascontiguousarray(theta_raw.reshape(self.dof, -1))
        P, V = _kernels.decode_combine(phi_q, phid_q, y1q, y2q, y1dq, y2dq, c1, c2, theta)
        return Trajectory(times=self.seg_times, positions=P, velocities=V)

    # -- standardization ---------------------------------------------------
    def std_obs(self, obs: np.ndarray) -> np.ndarray:
        return (np.asarray(obs, dtype=np.float64) - self.obs_mean) / self.obs_std

    def std_traj(self, flat_pos: np.ndarray) -> np.ndarray:
        return (flat_pos - self.traj_mean) / self.traj_std

    def unstd_traj(self, flat_std: np.ndarray) -> np.ndarray:
        return self.traj_mean + self.traj_std * flat_std

    def std_theta(self, theta_raw: np.ndarray) -> np.ndarray:
        return (theta_raw - self.theta_mean) / self.theta_std

    def unstd_theta(self, theta_std: np.ndarray) -> np.ndarray:
        return self.theta_mean + self.theta_std * theta_std

    def theta_params(self, theta_std: np.ndarray) -> ProDMPParams:
        return ProDMPParams.from_flat(self.unstd_theta(theta_std), self.dof)

    def pullback_theta_std(self, traj_std: np.ndarray, comp_flat: np.ndarray) -> np.ndarray:
        """Least-squares parameter estimate for a (noisy) standardized trajectory.

        Works row-wise for 2-D input. comp_flat is the boundary-condition
        complementary part to subtract before the pullback (per row for 2-D).
        """
        raw = self.unstd_traj(traj_std) - comp_flat
        theta_raw = raw @ self.pullback.T
        return self.std_theta(theta_raw)

    # -- serialization ------------------------------------------------------
    def to_meta(self) -> dict:
        return {
            "env_name": self.env_name,
            "prodmp_cfg": self.prodmp_cfg.to_dict(),
            "obs_dim": self.obs_dim,
        }

    def stat_arrays(self) -> dict[str, np.ndarray]:
        return {
            "seg_times": self.seg_times,
            "bc_pos_idx": self.bc_pos_idx,
            "bc_vel_idx": self.bc_vel_idx,
            "theta_mean": self.theta_mean,
            "theta_std": self.theta_std,
            "traj_mean": self.traj_mean,
            "traj_std": self.traj_std,
            "obs_mean": self.obs_mean,
            "obs_std": self.obs_std,
        }

    @classmethod
    def from_storage(cls, meta: dict, arrays: dict) -> "PolicyContext":
        return cls(
            env_name=meta["env_name"],
            prodmp_cfg=ProDMPConfig.from_dict(meta["prodmp_cfg"]),
            obs_dim=meta["obs_dim"],
            **{k: arrays[k] for k in (
                "seg_times", "bc_pos_idx", "bc_vel_idx", "theta_mean", "theta_std",
                "traj_mean", "traj_std", "obs_mean", "obs_std",
            )},
        )
