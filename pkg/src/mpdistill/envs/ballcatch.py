"""Vertical-plane ball interception environment with a scripted expert.

A ball follows an exact closed-form ballistic arc (horizontal x, vertical
z, gravity 9.81 down) toward the catch plane x = 0. The end-effector moves
in the same plane under velocity commands with acceleration and speed
limits. An episode succeeds when, at the instant the ball crosses the catch
plane, the end-effector is within ``catch_radius`` of the ball and its
velocity differs from the ball's by at most ``v_rel_max`` (the
momentum-absorbing deceleration the task is about). Launches are randomized
per seed inside one of three difficulty tiers defined by launch spread.

Observation layout (11 floats):

    [0:2]  ee position      [2:4]  ee velocity
    [4:6]  ball position    [6:8]  ball velocity
    [8]    time to plane crossing (clamped at 0 after crossing)
    [9]    predicted crossing height
    [10]   predicted vertical ball velocity at crossing

The derived features are computed from the (possibly noise-injected) ball
state with the same ballistic formulas available to any observer. Set
``obs_noise_pos``/``obs_noise_vel`` to nonzero to corrupt the observed ball
state; the default observation is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OBS_DIM = 11
DOF = 2
BC_POS_IDX = (0, 1)
BC_VEL_IDX = (2, 3)

GRAVITY = 9.81

TIERS = ("easy", "medium", "hard")


@dataclass(frozen=True)
class CatchConfig:
    dt: float = 0.05
    max_steps: int = 32
    catch_radius: float = 0.05
    v_rel_max: float = 0.5
    v_max: float = 3.5
    a_max: float = 25.0
    ee_start: tuple[float, float] = (0.0, 1.0)
    workspace_x: tuple[float, float] = (-0.8, 0.9)
    workspace_z: tuple[float, float] = (0.0, 2.2)
    launch_x: float = 1.4
    launch_z: float = -2.5
    # Launch spread per tier: (time-to-plane range, vertical-speed spread).
    tier_cross_time: dict = None
    tier_vz_spread: dict = None
    obs_noise_pos: float = 0.0
    obs_noise_vel: float = 0.0

    def __post_init__(self):
        if self.tier_cross_time is None:
            object.__setattr__(self, "tier_cross_time", {
                "easy": (0.80, 0.90), "medium": (0.75, 0.95), "hard": (0.70, 1.00),
            })
        if self.tier_vz_spread is None:
            object.__setattr__(self, "tier_vz_spread", {
                "easy": 0.25, "medium": 0.55, "hard": 0.85,
            })


def ballistic_state(p0: np.ndarray, v0: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ballistic position and velocity after time t."""
    g = np.array([0.0, -GRAVITY])
    return p0 + v0 * t + 0.5 * g * t**2, v0 + g * t


def crossing_prediction(ball_pos, ball_vel, plane_x: float = 0.0):
    """(time_to_cross, crossing point, ball velocity at crossing) or None.

    None when the ball is already past the plane or not approaching it.
    """
    dx = plane_x - ball_pos[0]
    if ball_vel[0] >= -1e-9:
        return None
    t_c = dx / ball_vel[0]
    if t_c <= 0:
        return None
    p, v = ballistic_state(np.asarray(ball_pos, float), np.asarray(ball_vel, float), t_c)
    return t_c, p, v


class BallCatchEnv:
    """Deterministic given the construction seed and the action sequence."""

    name = "ballcatch"

    def __init__(self, seed: int, tier: str = "easy", cfg: CatchConfig | None = None):
        if tier not in TIERS:
            raise ValueError(f"unknown tier {tier!r}; expected one of {TIERS}")
        self.cfg = cfg or CatchConfig()
        self.tier = tier
        self._rng = np.random.default_rng(seed)
        self.reset()

    def reset(self) -> np.ndarray:
        cfg = self.cfg
        rng = self._rng
        t_lo, t_hi = cfg.tier_cross_time[self.tier]
        t_c = rng.uniform(t_lo, t_hi)
        launch_pos = np.array([cfg.launch_x, cfg.launch_z])
        vx = -cfg.launch_x / t_c
        # Vertical speed aimed so the nominal crossing height sits mid
        # workspace, then spread by tier.
        z_target = 0.5 * (cfg.workspace_z[0] + cfg.workspace_z[1]) * 0.91
        vz_nominal = (z_target - cfg.launch_z + 0.5 * GRAVITY * t_c**2) / t_c
        vz = vz_nominal + rng.uniform(-1.0, 1.0) * cfg.tier_vz_spread[self.tier]
        self._set_launch(launch_pos, np.array([vx, vz]))
        self.ee = np.array(cfg.ee_start, dtype=np.float64)
        self.ee_vel = np.zeros(2)
        self.steps = 0
        self.done = False
        self._success = False
        self._crossed = False
        self._miss_distance = np.nan
        self._contact_speed = np.nan
        self._obs_cache_step = -1
        self._obs_noise = np.zeros(4)
        return self.observe()

    def _set_launch(self, pos: np.ndarray, vel: np.ndarray) -> None:
        """Install a launch state (tests use this to aim the ball exactly)."""
        self.ball_launch_pos = np.asarray(pos, dtype=np.float64)
        self.ball_launch_vel = np.asarray(vel, dtype=np.float64)
        if self.ball_launch_vel[0] >= 0:
            raise ValueError("ball must move toward the catch plane (vx < 0)")
        self.cross_time = -self.ball_launch_pos[0] / self.ball_launch_vel[0]

    set_launch = _set_launch

    # -- dynamics -----------------------------------------------------------
    def step(self, action: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        v_cmd = np.asarray(action, dtype=np.float64)
        dv = v_cmd - self.ee_vel
        dv_norm = np.linalg.norm(dv)
        if dv_norm > cfg.a_max * cfg.dt:
            dv = dv * (cfg.a_max * cfg.dt / dv_norm)
        v_new = self.ee_vel + dv
        speed = np.linalg.norm(v_new)
        if speed > cfg.v_max:
            v_new *= cfg.v_max / speed
        t_prev = self.steps * cfg.dt
        t_next = t_prev + cfg.dt
        if not self._crossed and t_prev < self.cross_time <= t_next:
            ee_at = self.ee + v_new * (self.cross_time - t_prev)
            ball_p, ball_v = ballistic_state(
                self.ball_launch_pos, self.ball_launch_vel, self.cross_time
            )
            self._miss_distance = float(np.linalg.norm(ee_at - ball_p))
            self._contact_speed = float(np.linalg.norm(v_new - ball_v))
            self._success = (
                self._miss_distance <= cfg.catch_radius
                and self._contact_speed <= cfg.v_rel_max
            )
            self._crossed = True
        self.ee_vel = v_new
        self.ee = self.ee + v_new * cfg.dt
        self.ee[0] = np.clip(self.ee[0], *cfg.workspace_x)
        self.ee[1] = np.clip(self.ee[1], *cfg.workspace_z)
        self.steps += 1
        if self.steps >= cfg.max_steps:
            self.done = True
        return self.observe()

    # -- introspection --------------------------------------------------------
    def ball_state(self) -> tuple[np.ndarray, np.ndarray]:
        return ballistic_state(self.ball_launch_pos, self.ball_launch_vel, self.steps * self.cfg.dt)

    def observe(self) -> np.ndarray:
        cfg = self.cfg
        ball_p, ball_v = self.ball_state()
        if cfg.obs_noise_pos > 0 or cfg.obs_noise_vel > 0:
            if self._obs_cache_step != self.steps:
                self._obs_noise = np.concatenate([
                    cfg.obs_noise_pos * self._rng.standard_normal(2),
                    cfg.obs_noise_vel * self._rng.standard_normal(2),
                ])
                self._obs_cache_step = self.steps
            ball_p = ball_p + self._obs_noise[:2]
            ball_v = ball_v + self._obs_noise[2:]
        pred = crossing_prediction(ball_p, ball_v)
        if pred is None:
            t_c, z_c, vz_c = 0.0, ball_p[1], ball_v[1]
        else:
            t_c, cross_p, cross_v = pred
            z_c, vz_c = cross_p[1], cross_v[1]
        return np.concatenate([
            self.ee, self.ee_vel, ball_p, ball_v, [t_c, z_c, vz_c],
        ])

    def ee_state(self) -> tuple[np.ndarray, np.ndarray]:
        return self.ee.copy(), self.ee_vel.copy()

    def is_success(self) -> bool:
        return self._success

    @property
    def success(self) -> bool:
        return self._success

    def task_metrics(self) -> dict:
        return {"miss_distance": self._miss_distance, "contact_speed": self._contact_speed}


def min_jerk(p0, v0, pf, vf, T: float):
    """Quintic with zero boundary accelerations; returns (pos, vel) callables.

    Coefficients per axis: with D = pf - p0 - v0 T and V = vf - v0,
    c3 = (10 D - 4 V T) / T^3, c4 = (-15 D + 7 V T) / T^4,
    c5 = (6 D - 3 V T) / T^5.
    """
    p0 = np.asarray(p0, float)
    v0 = np.asarray(v0, float)
    pf = np.asarray(pf, float)
    vf = np.asarray(vf, float)
    D = pf - p0 - v0 * T
    V = vf - v0
    c3 = (10 * D - 4 * V * T) / T**3
    c4 = (-15 * D + 7 * V * T) / T**4
    c5 = (6 * D - 3 * V * T) / T**5

    def pos(t):
        t = np.asarray(t, float)[..., None]
        return p0 + v0 * t + c3 * t**3 + c4 * t**4 + c5 * t**5

    def vel(t):
        t = np.asarray(t, float)[..., None]
        return v0 + 3 * c3 * t**2 + 4 * c4 * t**3 + 5 * c5 * t**4

    return pos, vel


class CatchExpert:
    """Analytic interception: min-jerk to the predicted crossing state.

    Plans a horizon-long segment every call to ``plan``: ride a quintic
    from the current end-effector state to the crossing point, arriving at
    crossing time with velocity matched to ``match_fraction`` of the ball's
    (momentum absorption), then brake to rest. Replans each control cycle.
    """

    def __init__(self, cfg: CatchConfig | None = None, seg_times: np.ndarray | None = None,
                 replan_interval: int = 4, match_fraction: float = 0.85):
        self.cfg = cfg or CatchConfig()
        self.seg_times = seg_times if seg_times is not None else np.arange(20) * 0.05
        self.replan_interval = replan_interval
        self.match_fraction = match_fraction
        self._offset = 0
        self._plan = None

    def reset(self) -> None:
        self._offset = 0
        self._plan = None

    def plan(self, obs: np.ndarray):
        """Positions/velocities over the horizon from an observation vector."""
        cfg = self.cfg
        ee_p, ee_v = obs[0:2], obs[2:4]
        ball_p, ball_v = obs[4:6], obs[6:8]
        pred = crossing_prediction(ball_p, ball_v)
        H = self.seg_times
        if pred is None:
            return self._brake_segment(ee_p, ee_v)
        t_c, cross_p, cross_v = pred
        target = np.array([
            np.clip(cross_p[0], *cfg.workspace_x),
            np.clip(cross_p[1], *cfg.workspace_z),
        ])
        v_target = self.match_fraction * cross_v
        v_norm = np.linalg.norm(v_target)
        if v_norm > 0.95 * cfg.v_max:
            v_target *= 0.95 * cfg.v_max / v_norm
        if t_c < 0.15:
            # Too late for a fresh swing: ride through the catch at matched
            # velocity, with a bounded correction toward the crossing point.
            corr = (target - (ee_p + v_target * t_c)) / max(t_c, 0.05)
            n = np.linalg.norm(corr)
            if n > 1.5:
                corr *= 1.5 / n
            return self._ride_segment(ee_p, v_target + corr)
        T1 = max(t_c, 0.12)
        pos1, vel1 = min_jerk(ee_p, ee_v, target, v_target, T1)
        t_brake = 0.3
        brake_target = target + v_target * t_brake * 0.5
        pos2, vel2 = min_jerk(target, v_target, brake_target, np.zeros(2), t_brake)
        P = np.empty((H.size, 2))
        V = np.empty((H.size, 2))
        for i, t in enumerate(H):
            if t <= T1:
                P[i], V[i] = pos1(t), vel1(t)
            elif t <= T1 + t_brake:
                P[i], V[i] = pos2(t - T1), vel2(t - T1)
            else:
                P[i], V[i] = brake_target, 0.0
        return P, V

    def _ride_segment(self, ee_p, v_ride):
        H = self.seg_times
        P = ee_p[None, :] + H[:, None] * v_ride[None, :]
        V = np.tile(v_ride, (H.size, 1))
        return P, V

    def _brake_segment(self, ee_p, ee_v):
        t_b = 0.3
        target = ee_p + ee_v * t_b * 0.5
        pos, vel = min_jerk(ee_p, ee_v, target, np.zeros(2), t_b)
        H = self.seg_times
        P = np.empty((H.size, 2))
        V = np.empty((H.size, 2))
        for i, t in enumerate(H):
            if t <= t_b:
                P[i], V[i] = pos(t), vel(t)
            else:
                P[i], V[i] = target, 0.0
        return P, V

    def command(self, env: BallCatchEnv) -> np.ndarray:
        if self._plan is None or self._offset >= self.replan_interval:
            self._plan = self.plan(env.observe())
            self._offset = 0
        # Track the next planned position; commanding the sample at the
        # current offset would replay the current velocity and lag the plan.
        P, _ = self._plan
        idx = min(self._offset + 1, P.shape[0] - 1)
        v = (P[idx] - env.ee) / self.cfg.dt
        self._offset += 1
        return v
