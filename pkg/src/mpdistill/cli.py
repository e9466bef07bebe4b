"""Command-line pipeline: data, training, distillation, evaluation, benchmarks.

Every command takes its settings from (in increasing precedence) built-in
defaults, an optional YAML config file (--config), and command-line flags.
Each artifact gets a JSON manifest alongside it recording the command,
the full config snapshot, seeds, and input hashes; artifact bytes contain
no wall-clock data, so reruns with the same seeds are bit-identical.
Relative output paths resolve against $MPDISTILL_OUTPUT_ROOT (default: cwd).
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import click
import numpy as np
import yaml

from . import _kernels, metrics, storage
from .control import (ExpertPlanner, LoopConfig, StudentPlanner, TeacherPlanner, run_episode)
from .envs import env_info, make_env
from .envs.dataset import Dataset, DatasetConfig, generate_dataset, split_by_episode, subsample_fraction
from .student import DistillConfig, load_student, save_student, train_student
from .teacher import TeacherTrainConfig, load_teacher, save_teacher, train_teacher

SCHEMA_EVAL = "eval-v1"
SCHEMA_LATENCY = "latency-v1"
SCHEMA_SWEEP = "sweep-v1"
SCHEMA_MOTION = "motion-v1"
SCHEMA_KERNELS = "kernels-v1"

EVAL_COLUMNS = [
    "schema", "env", "tier", "method", "mode", "episodes", "successes",
    "success_rate", "ci_low", "ci_high", "jerk_mean", "handoff_max",
    "net_evals_per_plan", "effective_replan_period", "seed",
    "latency_mean_ms", "latency_std_ms", "latency_p50_ms", "latency_p95_ms",
]
# Columns whose values depend on the wall clock (excluded from
# reproducibility comparisons).
EVAL_TIMING_COLUMNS = [
    "latency_mean_ms", "latency_std_ms", "latency_p50_ms", "latency_p95_ms",
]

LATENCY_COLUMNS = [
    "schema", "method", "repetitions", "warmup", "mean_ms", "std_ms",
    "p50_ms", "p95_ms", "min_ms", "max_ms", "net_evals_per_plan",
]

SWEEP_COLUMNS = [
    "schema", "env", "tier", "fraction", "train_records", "seed", "method",
    "episodes", "successes", "success_rate", "ci_low", "ci_high",
]

MOTION_COLUMNS = [
    "schema", "log", "steps", "plans", "isj", "max_handoff", "mean_speed",
]

KERNEL_COLUMNS = [
    "schema", "kernel", "backend", "shape", "repetitions", "mean_us", "p50_us",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


def _load_config(config_path, section: str) -> dict:
    if not config_path:
        return {}
    data = yaml.safe_load(Path(config_path).read_text()) or {}
    return data.get(section, {}) or {}


def derive_seed(*parts) -> int:
    """Stable child seed from heterogeneous parts."""
    enc = [abs(hash(p)) % (2**32) if isinstance(p, str) else int(p) for p in parts]
    return int(np.random.SeedSequence(enc).generate_state(1, np.uint64)[0] % (2**63 - 1))


@click.group()
def main():
    """Movement-primitive one-step diffusion pipeline."""


# ---------------------------------------------------------------------------
@main.command("gen-data")
@click.option("--env", "env_name", required=True, type=click.Choice(["pushblock", "ballcatch"]))
@click.option("--count", required=True, type=int, help="Successful demonstrations to collect.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--tier", default=None, help="Force a single difficulty tier.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def cmd_gen_data(env_name, count, seed, out, tier, config_path):
    """Roll out the scripted expert and build a demonstration dataset."""
    t0 = time.perf_counter()
    cfg = DatasetConfig(**_load_config(config_path, "dataset"))
    ds = generate_dataset(env_name, count, cfg, seed, tier=tier)
    out = storage.resolve_out(out)
    ds.save(out)
    storage.write_manifest(
        out, "gen-data",
        {"env": env_name, "count": count, "tier": tier, "dataset": cfg.to_dict()},
        {"seed": seed}, {}, time.perf_counter() - t0,
    )
    click.echo(
        f"wrote {out}: {len(ds)} records from {ds.episodes} episodes "
        f"({ds.attempts} attempts, {ds.discarded} segments discarded)"
    )


# ---------------------------------------------------------------------------
def _teacher_cfg_from_flags(config_path, **flags) -> TeacherTrainConfig:
    base = TeacherTrainConfig().to_dict()
    base.update(_load_config(config_path, "teacher"))
    for key, val in flags.items():
        if val is not None:
            base[key] = val
    if isinstance(base.get("hidden_dims"), str):
        base["hidden_dims"] = [int(x) for x in base["hidden_dims"].split(",")]
    return TeacherTrainConfig.from_dict(base)


@main.command("train-teacher")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--steps", default=None, type=int)
@click.option("--batch", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--hidden-dims", "hidden_dims", default=None, help="Comma-separated widths.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def cmd_train_teacher(dataset_path, out, seed, steps, batch, lr, hidden_dims, config_path):
    """Train the multi-step diffusion teacher on a dataset."""
    t0 = time.perf_counter()
    cfg = _teacher_cfg_from_flags(
        config_path, steps=steps, batch=batch, lr=lr, hidden_dims=hidden_dims
    )
    ds = Dataset.load(dataset_path)
    model, history = train_teacher(ds, cfg, seed)
    out = storage.resolve_out(out)
    save_teacher(model, out)
    storage.write_manifest(
        out, "train-teacher", {"teacher": cfg.to_dict()}, {"seed": seed},
        {"dataset": dataset_path}, time.perf_counter() - t0,
    )
    click.echo(
        f"wrote {out}: loss {history[:50].mean():.4f} -> {history[-50:].mean():.4f} "
        f"over {cfg.steps} steps"
    )


# ---------------------------------------------------------------------------
@main.command("distill")
@click.option("--teacher", "teacher_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--steps", default=None, type=int)
@click.option("--batch", default=None, type=int)
@click.option("--lr", default=None, type=float)
@click.option("--k", default=None, type=int, help="Teacher skip interval.")
@click.option("--mu", default=None, type=float, help="EMA rate of the target network.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def cmd_distill(teacher_path, dataset_path, out, seed, steps, batch, lr, k, mu, config_path):
    """Distill a trained teacher into a one-step student."""
    t0 = time.perf_counter()
    base = DistillConfig().to_dict()
    base.update(_load_config(config_path, "distill"))
    for key, val in (("steps", steps), ("batch", batch), ("lr", lr), ("k", k), ("mu", mu)):
        if val is not None:
            base[key] = val
    cfg = DistillConfig.from_dict(base)
    teacher = load_teacher(teacher_path)
    ds = Dataset.load(dataset_path)
    if ds.env_name != teacher.ctx.env_name:
        raise click.ClickException(
            f"dataset is for {ds.env_name!r} but teacher was trained on "
            f"{teacher.ctx.env_name!r}"
        )
    student, history = train_student(teacher, ds, cfg, seed)
    out = storage.resolve_out(out)
    save_student(student, out)
    storage.write_manifest(
        out, "distill", {"distill": cfg.to_dict()}, {"seed": seed},
        {"teacher": teacher_path, "dataset": dataset_path}, time.perf_counter() - t0,
    )
    click.echo(
        f"wrote {out}: loss {history[:100].mean():.5f} -> {history[-100:].mean():.5f} "
        f"over {cfg.steps} steps"
    )


# ---------------------------------------------------------------------------
def _planners_from_flags(env_name, teacher_path, student_path, expert, teacher_steps):
    builders = []
    if teacher_path:
        model = load_teacher(teacher_path)
        if model.ctx.env_name != env_name:
            raise click.ClickException(
                f"teacher checkpoint is for {model.ctx.env_name!r}, not {env_name!r}"
            )
        builders.append(("teacher", lambda env, m=model: TeacherPlanner(m, teacher_steps)))
    if student_path:
        model = load_student(student_path)
        if model.ctx.env_name != env_name:
            raise click.ClickException(
                f"student checkpoint is for {model.ctx.env_name!r}, not {env_name!r}"
            )
        builders.append(("student", lambda env, m=model: StudentPlanner(m)))
    if expert:
        builders.append(("expert", lambda env: ExpertPlanner(env)))
    if not builders:
        raise click.ClickException("select at least one of --teacher/--student/--expert")
    return builders


def _eval_rows(env_name, tiers, builders, episodes, seed, mode, deadline, log_dir):
    rows = []
    logs = []
    loop_kwargs = dict(latency_mode=mode, deadline=deadline)
    for tier in tiers:
        for method, build in builders:
            lat_all, jerks, handoffs, evals, succ = [], [], [], [], 0
            planner = None
            period = None
            for ep in range(episodes):
                env = make_env(env_name, derive_seed(env_name, tier, seed, ep), tier=tier)
                if planner is None or method == "expert":
                    planner = build(env)
                elif method == "expert":
                    planner = build(env)
                cfg = LoopConfig(**loop_kwargs)
                rng = np.random.default_rng([seed, abs(hash(method)) % 2**31, ep])
                res = run_episode(env, planner, cfg, rng)
                succ += res.success
                lat_all.extend(res.plan_latencies.tolist())
                jerks.append(metrics.integrated_squared_jerk(res.actions, env.cfg.dt))
                if res.handoff_jumps.size:
                    handoffs.append(res.handoff_jumps.max())
                evals.append(res.net_evals_per_plan)
                period = res.effective_replan_period
                if log_dir:
                    log_path = Path(log_dir) / f"{method}_{tier}_{ep:03d}.jsonl"
                    log_path.parent.mkdir(parents=True, exist_ok=True)
                    with open(log_path, "w") as f:
                        for rec in res.log_records:
                            f.write(json.dumps(rec, sort_keys=True) + "\n")
                    logs.append(log_path)
            lat = metrics.latency_summary(np.asarray(lat_all))
            ci_low, ci_high = metrics.wilson_interval(succ, episodes)
            rows.append({
                "schema": SCHEMA_EVAL, "env": env_name, "tier": tier,
                "method": method, "mode": mode, "episodes": episodes,
                "successes": succ, "success_rate": succ / episodes,
                "ci_low": ci_low, "ci_high": ci_high,
                "jerk_mean": float(np.mean(jerks)),
                "handoff_max": float(np.max(handoffs)) if handoffs else 0.0,
                "net_evals_per_plan": float(np.mean(evals)),
                "effective_replan_period": period, "seed": seed,
                "latency_mean_ms": lat["mean_ms"], "latency_std_ms": lat["std_ms"],
                "latency_p50_ms": lat["p50_ms"], "latency_p95_ms": lat["p95_ms"],
            })
    return rows, logs


@main.command("eval")
@click.option("--env", "env_name", required=True, type=click.Choice(["pushblock", "ballcatch"]))
@click.option("--teacher", "teacher_path", default=None, type=click.Path(exists=True))
@click.option("--student", "student_path", default=None, type=click.Path(exists=True))
@click.option("--expert", is_flag=True, default=False, help="Include the scripted expert.")
@click.option("--episodes", default=50, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--tier", default="all", show_default=True)
@click.option("--mode", default="measure-only", show_default=True,
              type=click.Choice(["measure-only", "simulate-deadline"]))
@click.option("--deadline", default=None, type=float, help="Seconds, simulate-deadline only.")
@click.option("--teacher-steps", default=None, type=int, help="Override sampler step count.")
@click.option("--log-dir", default=None, type=click.Path(), help="Write per-episode JSONL logs.")
@click.option("--out", required=True, type=click.Path())
def cmd_eval(env_name, teacher_path, student_path, expert, episodes, seed, tier, mode,
             deadline, teacher_steps, log_dir, out):
    """Run seeded closed-loop episodes and write a metrics CSV."""
    if episodes <= 0:
        raise click.ClickException("--episodes must be positive")
    t0 = time.perf_counter()
    info = env_info(env_name)
    tiers = list(info.tiers) if tier == "all" else [tier]
    for t in tiers:
        if t not in info.tiers:
            raise click.ClickException(f"unknown tier {t!r} for {env_name}")
    builders = _planners_from_flags(env_name, teacher_path, student_path, expert, teacher_steps)
    rows, _ = _eval_rows(env_name, tiers, builders, episodes, seed, mode, deadline, log_dir)
    out = storage.resolve_out(out)
    _write_csv(out, EVAL_COLUMNS, rows)
    inputs = {}
    if teacher_path:
        inputs["teacher"] = teacher_path
    if student_path:
        inputs["student"] = student_path
    storage.write_manifest(
        out, "eval",
        {"env": env_name, "episodes": episodes, "tiers": tiers, "mode": mode,
         "deadline": deadline, "teacher_steps": teacher_steps},
        {"seed": seed}, inputs, time.perf_counter() - t0,
    )
    for row in rows:
        click.echo(
            f"{row['env']}/{row['tier']} {row['method']}: "
            f"{row['successes']}/{row['episodes']} "
            f"({100 * row['success_rate']:.0f}%), latency {row['latency_mean_ms']:.2f} ms"
        )


# ---------------------------------------------------------------------------
@main.command("bench-latency")
@click.option("--teacher", "teacher_path", required=True, type=click.Path(exists=True))
@click.option("--student", "student_path", required=True, type=click.Path(exists=True))
@click.option("--repetitions", default=200, type=int, show_default=True)
@click.option("--warmup", default=10, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--teacher-steps", default=None, type=int)
@click.option("--out", required=True, type=click.Path())
def cmd_bench_latency(teacher_path, student_path, repetitions, warmup, seed, teacher_steps, out):
    """Wall-clock per-plan latency of student vs teacher on identical inputs."""
    if repetitions < 1:
        raise click.ClickException("--repetitions must be >= 1")
    t0 = time.perf_counter()
    teacher = load_teacher(teacher_path)
    student = load_student(student_path)
    if teacher.ctx.env_name != student.ctx.env_name:
        raise click.ClickException("teacher and student are for different environments")
    env = make_env(teacher.ctx.env_name, derive_seed("bench", seed),
                   tier=env_info(teacher.ctx.env_name).tiers[0])
    obs = env.observe()
    planners = [
        ("student", StudentPlanner(student)),
        ("teacher", TeacherPlanner(teacher, teacher_steps)),
    ]
    rows = []
    for method, planner in planners:
        rng = np.random.default_rng([seed, abs(hash(method)) % 2**31])
        for _ in range(warmup):
            planner.plan(obs, rng)
        evals_before = planner.net_eval_count()
        lat = np.empty(repetitions)
        for i in range(repetitions):
            t1 = time.perf_counter()
            planner.plan(obs, rng)
            lat[i] = time.perf_counter() - t1
        summary = metrics.latency_summary(lat)
        summary["net_evals_per_plan"] = (planner.net_eval_count() - evals_before) / repetitions
        rows.append({
            "schema": SCHEMA_LATENCY, "method": method,
            "repetitions": repetitions, "warmup": warmup, **summary,
        })
    out = storage.resolve_out(out)
    _write_csv(out, LATENCY_COLUMNS, rows)
    storage.write_manifest(
        out, "bench-latency",
        {"repetitions": repetitions, "warmup": warmup, "teacher_steps": teacher_steps},
        {"seed": seed},
        {"teacher": teacher_path, "student": student_path},
        time.perf_counter() - t0,
    )
    by = {r["method"]: r for r in rows}
    ratio = by["student"]["mean_ms"] / by["teacher"]["mean_ms"]
    click.echo(
        f"student {by['student']['mean_ms']:.3f} ms vs teacher "
        f"{by['teacher']['mean_ms']:.3f} ms per plan (ratio {ratio:.3f})"
    )


# ---------------------------------------------------------------------------
@main.command("sweep-data-efficiency")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--fractions", default="0.25,0.5,1.0", show_default=True)
@click.option("--seeds", default=3, type=int, show_default=True)
@click.option("--episodes", default=50, type=int, show_default=True)
@click.option("--eval-tier", default=None, help="Defaults to the first tier.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def cmd_sweep_data_efficiency(dataset_path, fractions, seeds, episodes, eval_tier, config_path, out):
    """Retrain teacher+student on dataset fractions and chart success rates.

    Episode-level subsampling keeps difficulty-tier proportions fixed.
    """
    t0 = time.perf_counter()
    ds = Dataset.load(dataset_path)
    info = env_info(ds.env_name)
    tier = eval_tier or info.tiers[0]
    fracs = [float(x) for x in fractions.split(",")]
    tcfg_base = TeacherTrainConfig().to_dict()
    tcfg_base.update(_load_config(config_path, "teacher"))
    dcfg_base = DistillConfig().to_dict()
    dcfg_base.update(_load_config(config_path, "distill"))
    tcfg = TeacherTrainConfig.from_dict(tcfg_base)
    dcfg = DistillConfig.from_dict(dcfg_base)
    rows = []
    for frac in fracs:
        for s in range(seeds):
            sub = subsample_fraction(ds, frac, seed=derive_seed("sub", frac, s))
            teacher, _ = train_teacher(sub, tcfg, seed=derive_seed("teach", frac, s))
            student, _ = train_student(teacher, sub, dcfg, seed=derive_seed("dist", frac, s))
            for method, planner_fn in (
                ("teacher", lambda e: TeacherPlanner(teacher)),
                ("student", lambda e: StudentPlanner(student)),
            ):
                succ = 0
                planner = planner_fn(None)
                for ep in range(episodes):
                    env = make_env(ds.env_name, derive_seed(ds.env_name, tier, s, ep), tier=tier)
                    res = run_episode(env, planner, LoopConfig(), np.random.default_rng([s, ep]))
                    succ += res.success
                ci_low, ci_high = metrics.wilson_interval(succ, episodes)
                rows.append({
                    "schema": SCHEMA_SWEEP, "env": ds.env_name, "tier": tier,
                    "fraction": frac, "train_records": len(sub), "seed": s,
                    "method": method, "episodes": episodes, "successes": succ,
                    "success_rate": succ / episodes, "ci_low": ci_low, "ci_high": ci_high,
                })
    out = storage.resolve_out(out)
    _write_csv(out, SWEEP_COLUMNS, rows)
    storage.write_manifest(
        out, "sweep-data-efficiency",
        {"fractions": fracs, "seeds": seeds, "episodes": episodes, "tier": tier,
         "teacher": tcfg.to_dict(), "distill": dcfg.to_dict()},
        {"seeds": list(range(seeds))}, {"dataset": dataset_path}, time.perf_counter() - t0,
    )
    click.echo(f"wrote {out}: {len(rows)} sweep cells")


# ---------------------------------------------------------------------------
@main.command("motion-report")
@click.argument("logs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--dt", default=0.05, type=float, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
def cmd_motion_report(logs, dt, out_dir):
    """Velocity traces, integrated squared jerk, and handoff continuity."""
    t0 = time.perf_counter()
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = storage.resolve_out(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for log_path in logs:
        records = [json.loads(line) for line in Path(log_path).read_text().splitlines()]
        actions = np.asarray([r["action"] for r in records])
        positions = np.asarray([r["position"] for r in records])
        times = np.asarray([r["t"] for r in records])
        plan_ids = np.asarray([r["plan_id"] for r in records])
        isj = metrics.integrated_squared_jerk(actions, dt)
        # Handoff discontinuity: command change across plan switches beyond
        # the change implied by one control period.
        switches = np.flatnonzero(np.diff(plan_ids) != 0) + 1
        jump = 0.0
        for s in switches:
            jump = max(jump, float(np.max(np.abs(actions[s] - actions[s - 1]))))
        rows.append({
            "schema": SCHEMA_MOTION, "log": Path(log_path).name,
            "steps": len(records), "plans": int(plan_ids.max() + 1),
            "isj": isj, "max_handoff": jump,
            "mean_speed": float(np.linalg.norm(actions, axis=1).mean()),
        })
        fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
        for d in range(actions.shape[1]):
            axes[0].plot(times, actions[:, d], label=f"axis {d}")
            axes[1].plot(times, positions[:, d], label=f"axis {d}")
        for s in switches:
            axes[0].axvline(times[s], color="k", alpha=0.1, lw=0.8)
        axes[0].set_ylabel("commanded velocity")
        axes[1].set_ylabel("position")
        axes[1].set_xlabel("time (s)")
        axes[0].legend(loc="upper right", fontsize=8)
        fig.suptitle(Path(log_path).name)
        fig.tight_layout()
        fig.savefig(out_dir / (Path(log_path).stem + ".svg"))
        plt.close(fig)
    csv_path = out_dir / "motion_report.csv"
    _write_csv(csv_path, MOTION_COLUMNS, rows)
    storage.write_manifest(
        csv_path, "motion-report", {"dt": dt, "logs": [str(p) for p in logs]},
        {}, {}, time.perf_counter() - t0,
    )
    click.echo(f"wrote {csv_path} and {len(rows)} velocity plots")


# ---------------------------------------------------------------------------
@main.command("basis-cache")
@click.option("--num-basis", default=10, type=int, show_default=True)
@click.option("--alpha", default=25.0, type=float, show_default=True)
@click.option("--tau", default=1.0, type=float, show_default=True)
@click.option("--dof", default=2, type=int, show_default=True)
@click.option("--grid-points", default=1000, type=int, show_default=True)
@click.option("--out", required=True, type=click.Path())
def cmd_basis_cache(num_basis, alpha, tau, dof, grid_points, out):
    """Precompute and cache the primitive basis table."""
    from .prodmp import ProDMPConfig, precompute_basis

    t0 = time.perf_counter()
    cfg = ProDMPConfig(num_basis=num_basis, alpha=alpha, tau=tau, dof=dof, grid_points=grid_points)
    table = precompute_basis(cfg)
    out = storage.resolve_out(out)
    table.save(out)
    storage.write_manifest(out, "basis-cache", {"prodmp": cfg.to_dict()}, {}, {},
                           time.perf_counter() - t0)
    click.echo(f"wrote {out}")


# ---------------------------------------------------------------------------
@main.command("bench-kernels")
@click.option("--repetitions", default=2000, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", required=True, type=click.Path())
def cmd_bench_kernels(repetitions, seed, out):
    """Time the hot kernels on both backends (compiled vs numpy)."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    shapes = {
        "dense_fwd": (192, 96),
        "dense_fwd_batch": (192, 96, 128),
        "act_fwd": (192,),
        "decode_combine": (20, 11, 2),
    }
    rows = []
    for backend_name in _kernels.available_backends():
        backend = _kernels.get_backend(backend_name)
        for kernel, shape in shapes.items():
            if kernel == "dense_fwd":
                m, n = shape
                W, b, x = rng.standard_normal((m, n)), rng.standard_normal(m), rng.standard_normal(n)
                fn = lambda: backend.dense_fwd(W, b, x)
                reps = repetitions
            elif kernel == "dense_fwd_batch":
                m, n, B = shape
                W, b, X = rng.standard_normal((m, n)), rng.standard_normal(m), rng.standard_normal((B, n))
                fn = lambda: backend.dense_fwd_batch(W, b, X)
                reps = max(repetitions // 20, 10)
            elif kernel == "act_fwd":
                z = rng.standard_normal(shape[0])
                fn = lambda: backend.act_fwd(_kernels.ACT_GELU, z)
                reps = repetitions
            else:
                H, K1, dof = shape
                pos_b = rng.standard_normal((H, K1))
                vel_b = rng.standard_normal((H, K1))
                y1, y2, y1d, y2d = (rng.standard_normal(H) for _ in range(4))
                c1, c2 = rng.standard_normal(dof), rng.standard_normal(dof)
                theta = rng.standard_normal((dof, K1))
                fn = lambda: backend.decode_combine(pos_b, vel_b, y1, y2, y1d, y2d, c1, c2, theta)
                reps = repetitions
            for _ in range(50):
                fn()
            lat = np.empty(reps)
            for i in range(reps):
                t1 = time.perf_counter()
                fn()
                lat[i] = time.perf_counter() - t1
            rows.append({
                "schema": SCHEMA_KERNELS, "kernel": kernel, "backend": backend_name,
                "shape": "x".join(str(s) for s in shape), "repetitions": reps,
                "mean_us": float(lat.mean() * 1e6), "p50_us": float(np.percentile(lat, 50) * 1e6),
            })
    out = storage.resolve_out(out)
    _write_csv(out, KERNEL_COLUMNS, rows)
    storage.write_manifest(out, "bench-kernels", {"repetitions": repetitions},
                           {"seed": seed}, {}, time.perf_counter() - t0)
    for row in rows:
        click.echo(
            f"{row['kernel']:18s} {row['backend']:9s} {row['shape']:12s} "
            f"{row['mean_us']:9.2f} us"
        )


if __name__ == "__main__":
    main()
