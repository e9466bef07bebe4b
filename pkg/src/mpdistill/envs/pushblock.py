"""Planar quasi-static push-block environment with a scripted expert.

A circular pusher moves under velocity commands in the unit square; an
axis-aligned square block is displaced by a non-penetration projection
whenever the pusher overlaps it. The task is to push the block center into
a goal disc, then retreat the pusher to an end zone. Because block faces
are axis-aligned, contact moves the block along face normals, so the
scripted expert pushes one axis at a time (dominant goal component first).

Observation layout (12 floats):

    [0:2]  pusher position        [2:4]   pusher velocity (last applied)
    [4:6]  block center           [6:8]   goal center
    [8:10] goal - block           [10:12] block - pusher
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OBS_DIM = 12
DOF = 2
BC_POS_IDX = (0, 1)
BC_VEL_IDX = (2, 3)


@dataclass(frozen=True)
class PushConfig:
    dt: float = 0.05
    pusher_radius: float = 0.02
    block_half: float = 0.04
    goal_radius: float = 0.03
    end_zone_center: tuple[float, float] = (0.1, 0.9)
    end_zone_radius: float = 0.06
    v_max: float = 0.25
    max_steps: int = 400


class PushBlockEnv:
    """Deterministic given the construction seed and the action sequence."""

    name = "pushblock"
    tier = "default"

    def __init__(self, seed: int, cfg: PushConfig | None = None):
        self.cfg = cfg or PushConfig()
        self._rng = np.random.default_rng(seed)
        self.reset()

    # -- lifecycle ----------------------------------------------------------
    def reset(self) -> np.ndarray:
        cfg = self.cfg
        rng = self._rng
        self.block = rng.uniform(0.3, 0.7, size=2)
        # Goal offset away from the block so every episode needs a push.
        while True:
            goal = rng.uniform(0.2, 0.8, size=2)
            if np.linalg.norm(goal - self.block) > 0.15:
                break
        self.goal = goal
        while True:
            pusher = rng.uniform(0.15, 0.85, size=2)
            if np.linalg.norm(pusher - self.block) > cfg.block_half + cfg.pusher_radius + 0.05:
                break
        self.pusher = pusher
        self.pusher_vel = np.zeros(2)
        self.steps = 0
        self.done = False
        self._success = False
        return self.observe()

    def clone_state(self) -> dict:
        return {
            "block": self.block.copy(), "goal": self.goal.copy(),
            "pusher": self.pusher.copy(), "pusher_vel": self.pusher_vel.copy(),
            "steps": self.steps, "done": self.done, "success": self._success,
        }

    def restore_state(self, s: dict) -> None:
        self.block = s["block"].copy()
        self.goal = s["goal"].copy()
        self.pusher = s["pusher"].copy()
        self.pusher_vel = s["pusher_vel"].copy()
        self.steps = s["steps"]
        self.done = s["done"]
        self._success = s["success"]

    # -- dynamics -----------------------------------------------------------
    def step(self, action: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        v = np.asarray(action, dtype=np.float64).copy()
        speed = np.linalg.norm(v)
        if speed > cfg.v_max:
            v *= cfg.v_max / speed
        self.pusher_vel = v
        self.pusher = np.clip(self.pusher + v * cfg.dt, 0.0, 1.0)
        self._resolve_contact()
        self.block = np.clip(self.block, cfg.block_half, 1.0 - cfg.block_half)
        self.steps += 1
        if self.is_success():
            self._success = True
            self.done = True
        elif self.steps >= cfg.max_steps:
            self.done = True
        return self.observe()

    def _resolve_contact(self) -> None:
        """Push the block out along the contact normal (quasi-static)."""
        cfg = self.cfg
        lo = self.block - cfg.block_half
        hi = self.block + cfg.block_half
        closest = np.clip(self.pusher, lo, hi)
        delta = self.pusher - closest
        dist = np.linalg.norm(delta)
        if dist >= cfg.pusher_radius:
            return
        if dist > 1e-12:
            normal = delta / dist
            depth = cfg.pusher_radius - dist
        else:
            # Center inside the block: exit through the nearest face.
            gaps = np.concatenate([self.pusher - lo, hi - self.pusher])
            i = int(np.argmin(gaps))
            normal = np.zeros(2)
            normal[i % 2] = -1.0 if i < 2 else 1.0
            depth = cfg.pusher_radius + gaps[i]
        self.block -= normal * depth

    # -- introspection --------------------------------------------------------
    def observe(self) -> np.ndarray:
        return np.concatenate([
            self.pusher, self.pusher_vel, self.block, self.goal,
            self.goal - self.block, self.block - self.pusher,
        ])

    def ee_state(self) -> tuple[np.ndarray, np.ndarray]:
        return self.pusher.copy(), self.pusher_vel.copy()

    def block_to_goal(self) -> float:
        return float(np.linalg.norm(self.goal - self.block))

    def in_end_zone(self) -> bool:
        c = np.asarray(self.cfg.end_zone_center)
        return np.linalg.norm(self.pusher - c) <= self.cfg.end_zone_radius

    def is_success(self) -> bool:
        return self.block_to_goal() <= self.cfg.goal_radius and self.in_end_zone()

    @property
    def success(self) -> bool:
        return self._success

    def task_metrics(self) -> dict:
        return {"block_to_goal": self.block_to_goal()}


class PushExpert:
    """Waypoint controller: approach behind a face, push one axis, retreat.

    Axis order is fixed (x until aligned, then y), so the command is a pure
    function of the environment state; commands are bounded by v_max.
    """

    ALIGN_TOL = 0.008

    def __init__(self, cfg: PushConfig | None = None):
        self.cfg = cfg or PushConfig()

    def reset(self) -> None:
        pass

    def command(self, env: PushBlockEnv) -> np.ndarray:
        cfg = self.cfg
        pusher, block, goal = env.pusher, env.block, env.goal
        delta = goal - block
        align_tol = self.ALIGN_TOL
        if env.block_to_goal() <= cfg.goal_radius * 0.7 or np.all(np.abs(delta) <= align_tol):
            return self._go_to(pusher, np.asarray(cfg.end_zone_center), block, avoid=True)

        ax = 0 if abs(delta[0]) > align_tol else 1
        direction = np.sign(delta[ax])

        contact_gap = cfg.block_half + cfg.pusher_radius
        approach = block.copy()
        approach[ax] -= direction * (contact_gap + 0.03)

        behind = (pusher[ax] - block[ax]) * direction < -(contact_gap - 0.01)
        lateral_off = abs(pusher[1 - ax] - block[1 - ax])
        if behind and lateral_off < cfg.block_half * 0.9:
            v = np.zeros(2)
            scale = min(1.0, abs(delta[ax]) / 0.05 + 0.25)
            v[ax] = direction * cfg.v_max * scale
            v[1 - ax] = np.clip(3.0 * (block[1 - ax] - pusher[1 - ax]),
                                -0.3 * cfg.v_max, 0.3 * cfg.v_max)
            return self._clip(v)
        return self._go_to(pusher, approach, block, avoid=True)

    def _go_to(self, pusher, target, block, avoid: bool) -> np.ndarray:
        cfg = self.cfg
        to_target = target - pusher
        dist = np.linalg.norm(to_target)
        if dist < 1e-9:
            return np.zeros(2)
        waypoint = target
        if avoid and self._segment_near_block(pusher, target, block):
            waypoint = self._detour(pusher, block)
        v = waypoint - pusher
        n = np.linalg.norm(v)
        gain = min(cfg.v_max, 4.0 * dist)
        return self._clip(v / max(n, 1e-9) * gain)

    def _segment_near_block(self, a, b, block) -> bool:
        cfg = self.cfg
        clearance = cfg.block_half + cfg.pusher_radius + 0.01
        ab = b - a
        L = np.linalg.norm(ab)
        if L < 1e-9:
            return False
        t = np.clip(np.dot(block - a, ab) / L**2, 0.0, 1.0)
        closest = a + t * ab
        return bool(np.linalg.norm(block - closest) < clearance)

    def _detour(self, pusher, block) -> np.ndarray:
        cfg = self.cfg
        radius = cfg.block_half + cfg.pusher_radius + 0.04
        rel = pusher - block
        n = np.linalg.norm(rel)
        if n < 1e-9:
            rel, n = np.array([1.0, 0.0]), 1.0
        # Slide around the block tangentially.
        tangent = np.array([-rel[1], rel[0]]) / n
        return block + rel / n * radius + tangent * radius * 0.9

    def _clip(self, v: np.ndarray) -> np.ndarray:
        speed = np.linalg.norm(v)
        if speed > self.cfg.v_max:
            return v * (self.cfg.v_max / speed)
        return v
