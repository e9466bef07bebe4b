"""Receding-horizon execution for any planner, with latency accounting.

A planner produces a horizon-long trajectory from the current observation;
the loop executes it as position-tracking velocity commands (command k
steers to the plan's next sample) and replans every ``replan_interval``
steps. Two latency modes:

- measure-only: plans apply instantly; wall-clock latency is recorded but
  never influences execution, so runs are bit-reproducible.
- simulate-deadline: the planner gets a compute budget of ``deadline``
  seconds per replan slot. A plan needing d = floor(latency / deadline)
  extra slots applies d slots late and time-shifted (it was built for the
  state at request time), while the previous plan keeps executing. This
  turns "the planner is slower than the control rate" into a seedable,
  measurable effect. Slot arithmetic uses the planner's warmup-median
  latency so jitter cannot flip behavior mid-episode.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .prodmp import Trajectory


@dataclass(frozen=True)
class LoopConfig:
    replan_interval: int = 4
    horizon_steps: int = 20
    latency_mode: str = "measure-only"   # or "simulate-deadline"
    deadline: float | None = None        # seconds, simulate-deadline only
    max_steps: int | None = None         # cap episode length (env decides otherwise)

    def __post_init__(self):
        if not 1 <= self.replan_interval <= self.horizon_steps:
            raise ValueError("require 1 <= replan_interval <= horizon_steps")
        if self.latency_mode not in ("measure-only", "simulate-deadline"):
            raise ValueError(f"unknown latency mode {self.latency_mode!r}")
        if self.latency_mode == "simulate-deadline" and not self.deadline:
            raise ValueError("simulate-deadline mode needs a deadline")


@dataclass
class PlanStats:
    latency_s: float
    net_evals: int


class Planner:
    """Interface: produce a Trajectory from an observation."""

    tag = "planner"

    def plan(self, obs: np.ndarray, rng: np.random.Generator) -> Trajectory:
        raise NotImplementedError

    def net_eval_count(self) -> int:
        return 0


class TeacherPlanner(Planner):
    tag = "teacher"

    def __init__(self, model, n_steps: int | None = None):
        from .teacher import make_schedule

        self.model = model
        if n_steps is None or n_steps == model.schedule.n:
            self.schedule = model.schedule
        else:
            lv = model.schedule.levels
            self.schedule = make_schedule(
                n_steps, float(lv[-1]), float(lv[0]), sigma_data=model.schedule.sigma_data
            )

    def plan(self, obs, rng):
        from .teacher import sample_multistep

        _, traj = sample_multistep(self.model, obs, self.schedule, rng)
        return traj

    def net_eval_count(self):
        return self.model.net_evals


class StudentPlanner(Planner):
    tag = "student"

    def __init__(self, model):
        self.model = model

    def plan(self, obs, rng):
        from .student import one_step_generate

        _, traj = one_step_generate(self.model, obs, rng)
        return traj

    def net_eval_count(self):
        return self.model.net_evals


class ExpertPlanner(Planner):
    """Scripted expert wrapped as a planner (harness upper bound)."""

    tag = "expert"

    def __init__(self, env):
        from .envs import ballcatch, pushblock

        self._env = env
        self._seg_times = np.arange(20) * env.cfg.dt
        if isinstance(env, ballcatch.BallCatchEnv):
            self._catch = ballcatch.CatchExpert(env.cfg, seg_times=self._seg_times)
            self._push = None
        elif isinstance(env, pushblock.PushBlockEnv):
            self._push = pushblock.PushExpert(env.cfg)
            self._catch = None
        else:
            raise ValueError(f"no expert planner for {type(env).__name__}")

    def plan(self, obs, rng):
        if self._catch is not None:
            P, V = self._catch.plan(obs)
            return Trajectory(times=self._seg_times, positions=P, velocities=V)
        # Simulate the per-step push controller on a state snapshot.
        env = self._env
        snap = env.clone_state()
        done_flag = env.done
        P = np.empty((self._seg_times.size, 2))
        V = np.empty_like(P)
        P[0], V[0] = env.ee_state()
        for i in range(1, self._seg_times.size):
            env.step(self._push.command(env))
            P[i], V[i] = env.ee_state()
        env.restore_state(snap)
        env.done = done_flag
        return Trajectory(times=self._seg_times, positions=P, velocities=V)


@dataclass
class EpisodeResult:
    success: bool
    steps: int
    plan_latencies: np.ndarray          # seconds, one per computed plan
    handoff_jumps: np.ndarray           # max |plan start - state| per applied plan
    actions: np.ndarray                 # executed velocity commands (T, dof)
    states: np.ndarray                  # end-effector positions (T, dof)
    task_metrics: dict
    net_evals_per_plan: float
    effective_replan_period: int        # steps between applied plans
    log_records: list = field(default_factory=list)


def _planner_nominal_latency(planner, obs, rng, warmup: int = 3) -> float:
    lat = []
    for _ in range(warmup):
        t0 = time.perf_counter()
        planner.plan(obs, rng)
        lat.append(time.perf_counter() - t0)
    return float(np.median(lat))


def run_episode(env, planner: Planner, cfg: LoopConfig, rng: np.random.Generator) -> EpisodeResult:
    """Execute one closed-loop episode; returns the full accounting record."""
    dt = env.cfg.dt
    deadline_slots = 0
    if cfg.latency_mode == "simulate-deadline":
        nominal = getattr(planner, "nominal_latency", None)
        if nominal is None:
            nominal = _planner_nominal_latency(planner, env.observe(), rng)
            planner.nominal_latency = nominal
        deadline_slots = int(np.floor(nominal / cfg.deadline))

    latencies: list[float] = []
    jumps: list[float] = []
    actions: list[np.ndarray] = []
    states: list[np.ndarray] = []
    records: list[dict] = []

    active: Trajectory | None = None
    offset = 0
    pending: Trajectory | None = None
    pending_apply_step = -1
    next_request_step = 0
    plan_id = -1
    max_steps = cfg.max_steps or getattr(env.cfg, "max_steps", 1000)
    evals_start = planner.net_eval_count()

    step = 0
    while not env.done and step < max_steps:
        latency_this_step = None
        if pending is not None and step == pending_apply_step:
            active = pending
            offset = deadline_slots * cfg.replan_interval
            pending = None
            pos, vel = env.ee_state()
            k0 = min(offset, active.times.size - 1)
            jumps.append(max(
                float(np.max(np.abs(active.positions[k0] - pos))),
                float(np.max(np.abs(active.velocities[k0] - vel))),
            ))
        if step == next_request_step:
            t0 = time.perf_counter()
            plan = planner.plan(env.observe(), rng)
            latency = time.perf_counter() - t0
            latencies.append(latency)
            latency_this_step = latency
            plan_id += 1
            if cfg.latency_mode == "measure-only" or deadline_slots == 0:
                active = plan
                offset = 0
                pos, vel = env.ee_state()
                jumps.append(max(
                    float(np.max(np.abs(plan.positions[0] - pos))),
                    float(np.max(np.abs(plan.velocities[0] - vel))),
                ))
                next_request_step = step + cfg.replan_interval
            else:
                pending = plan
                pending_apply_step = step + deadline_slots * cfg.replan_interval
                next_request_step = pending_apply_step

        pos, _ = env.ee_state()
        if active is not None and offset + 1 < active.times.size:
            v_cmd = (active.positions[offset + 1] - pos) / dt
        else:
            v_cmd = np.zeros_like(pos)
        offset += 1

        actions.append(np.asarray(v_cmd, dtype=np.float64))
        states.append(pos)
        records.append({
            "step": step,
            "t": round(step * dt, 9),
            "position": pos.tolist(),
            "action": np.asarray(v_cmd).tolist(),
            "plan_id": plan_id,
            "latency_s": latency_this_step,
        })
        env.step(v_cmd)
        step += 1

    evals = planner.net_eval_count() - evals_start
    n_plans = max(len(latencies), 1)
    return EpisodeResult(
        success=bool(env.success),
        steps=step,
        plan_latencies=np.asarray(latencies),
        handoff_jumps=np.asarray(jumps) if jumps else np.zeros(0),
        actions=np.asarray(actions),
        states=np.asarray(states),
        task_metrics=env.task_metrics(),
        net_evals_per_plan=evals / n_plans if evals else 0.0,
        effective_replan_period=max(1, deadline_slots) * cfg.replan_interval,
        log_records=records,
    )
