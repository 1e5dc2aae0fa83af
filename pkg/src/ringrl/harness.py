"""Seeded multi-run experiments, per-run CSVs, manifest and aggregation."""
from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import json
import logging
import math
import subprocess
import tempfile
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .agents import Agent, AgentConfig, Transition, Variant
from .envs import GridWorld
from .ring import RingConfig
from .rnn import RnnConfig

log = logging.getLogger(__name__)

CSV_HEADER = ["seed", "variant", "episode", "steps", "return", "wallclock_ms"]
SCHEMA_VERSION = "ringrl-experiment/1"
TOP_LEVEL_KEYS = ("env", "agent", "ring", "rnn", "experiment")


@dataclass
class ExperimentSettings:
    variants: list = field(default_factory=lambda: ["Baseline", "Ring", "RingUA"])
    n_seeds: int = 10
    episodes_per_run: int = 300
    base_seed: int = 0
    record_wallclock: bool = False
    save_checkpoints: bool = False
    jobs: int = 1
    output_dir: Optional[str] = None

    def __post_init__(self):
        self.variants = [Variant(v).value for v in self.variants]
        if self.n_seeds < 1 or self.episodes_per_run < 1 or self.jobs < 1:
            raise ValueError("n_seeds, episodes_per_run and jobs must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSettings":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class ExperimentConfig:
    env: dict = field(default_factory=dict)
    agent: AgentConfig = field(default_factory=AgentConfig)
    ring: RingConfig = field(default_factory=RingConfig)
    rnn: RnnConfig = field(default_factory=RnnConfig)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)

    def __post_init__(self):
        GridWorld.from_dict(self.env)  # validate eagerly

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - set(TOP_LEVEL_KEYS)
        if unknown:
            raise ValueError(f"unknown top-level config keys: {sorted(unknown)}")
        return cls(
            env=dict(data.get("env", {})),
            agent=AgentConfig.from_dict(data.get("agent", {})),
            ring=RingConfig.from_dict(data.get("ring", {})),
            rnn=RnnConfig.from_dict(data.get("rnn", {})),
            experiment=ExperimentSettings.from_dict(data.get("experiment", {})),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "env": GridWorld.from_dict(self.env).to_dict(),
            "agent": self.agent.to_dict(),
            "ring": self.ring.to_dict(),
            "rnn": dataclasses.asdict(self.rnn),
            "experiment": dataclasses.asdict(self.experiment),
        }


@dataclass
class EpisodeRow:
    episode: int
    steps: int
    ret: float
    wallclock_ms: float = 0.0


@dataclass
class RunRecord:
    seed: int
    variant: str
    rows: list = field(default_factory=list)
    status: str = "ok"
    error: Optional[str] = None

    @property
    def returns(self) -> np.ndarray:
        return np.array([r.ret for r in self.rows], dtype=float)


def run_seed(base_seed: int, variant: str, seed_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([base_seed, zlib.crc32(variant.encode()), seed_index])


def run_single(config: ExperimentConfig, variant: str, seed_index: int,
               checkpoint_path: Optional[Path] = None) -> RunRecord:
    """Train one agent for ``episodes_per_run`` episodes and record each episode."""
    settings = config.experiment
    ss = run_seed(settings.base_seed, variant, seed_index)
    agent_ss, act_ss = ss.spawn(2)
    env = GridWorld.from_dict(config.env)
    agent = Agent(dataclasses.replace(config.agent, variant=Variant(variant)), env.state_dim,
                  env.n_actions, np.random.default_rng(agent_ss), config.ring, config.rnn)
    act_rng = np.random.default_rng(act_ss)
    record = RunRecord(seed=seed_index, variant=variant)
    try:
        for ep in range(settings.episodes_per_run):
            t0 = time.perf_counter()
            s = env.reset(seed_index)
            agent.begin_episode()
            ret, done = 0.0, False
            while not done:
                h_prev = None if agent.hidden is None else agent.hidden.copy()
                a = agent.select_action(s, act_rng)
                s_next, r, done = env.step(a)
                # time-limit cut-offs still bootstrap
                agent.observe(Transition(s, a, r, s_next, done and not env.truncated, h_prev))
                ret += r
                s = s_next
            ms = (time.perf_counter() - t0) * 1000.0 if settings.record_wallclock else 0.0
            record.rows.append(EpisodeRow(ep, env.t, ret, ms))
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
        log.error("run %s/%d failed: %s", variant, seed_index, record.error)
    if checkpoint_path is not None:
        agent.save_checkpoint(checkpoint_path)
    return record


def csv_name(variant: str, seed_index: int) -> str:
    return f"{variant}_seed{seed_index:03d}.csv"


def write_run_csv(record: RunRecord, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in record.rows:
            w.writerow([record.seed, record.variant, row.episode, row.steps,
                        repr(float(row.ret)), f"{row.wallclock_ms:.3f}"])


def read_run_csv(path) -> RunRecord:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        record = None
        for seed, variant, episode, steps, ret, ms in reader:
            if record is None:
                record = RunRecord(seed=int(seed), variant=variant)
            record.rows.append(EpisodeRow(int(episode), int(steps), float(ret), float(ms)))
    if record is None:
        raise ValueError(f"{path}: no episodes")
    return record


def _git_describe() -> Optional[str]:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return None
    if out.returncode != 0:
        return None
    return out.stdout.strip() or None


def _ensure_writable(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=out_dir):
        pass


def _run_job(args):
    config, variant, seed_index, ckpt = args
    return run_single(config, variant, seed_index, ckpt)


def run_experiment(config: ExperimentConfig, out_dir=None) -> list[RunRecord]:
    """Run every (variant, seed) pair and write one CSV each plus ``manifest.json``."""
    settings = config.experiment
    out = Path(out_dir or settings.output_dir or "runs")
    _ensure_writable(out)
    jobs = []
    for variant in settings.variants:
        for k in range(settings.n_seeds):
            ckpt = out / f"{variant}_seed{k:03d}.ckpt.json" if settings.save_checkpoints else None
            jobs.append((config, variant, k, ckpt))

    if settings.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(settings.jobs) as pool:
            records = list(pool.map(_run_job, jobs))
    else:
        records = [_run_job(j) for j in jobs]

    runs = []
    for rec in records:
        name = csv_name(rec.variant, rec.seed)
        write_run_csv(rec, out / name)
        runs.append({"variant": rec.variant, "seed_index": rec.seed,
                     "seed_entropy": list(run_seed(settings.base_seed, rec.variant, rec.seed).entropy),
                     "csv": name, "status": rec.status, "error": rec.error,
                     "episodes": len(rec.rows)})
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "git_describe": _git_describe(),
        "config": config.to_dict(),
        "runs": runs,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return records


def load_records(run_dir) -> list[RunRecord]:
    """Read the successful runs listed in a run directory's manifest."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        names = [r["csv"] for r in manifest["runs"] if r["status"] == "ok"]
    else:
        names = sorted(p.name for p in run_dir.glob("*.csv"))
    return [read_run_csv(run_dir / n) for n in names]


def aulc(returns) -> float:
    return float(np.sum(returns))


def aggregate(records: list[RunRecord]) -> dict:
    """Per variant: mean and median return per episode, and AULC per seed."""
    if not records:
        raise ValueError("no records to aggregate")
    by_variant: dict[str, list[RunRecord]] = {}
    for rec in records:
        by_variant.setdefault(rec.variant, []).append(rec)
    summary = {}
    for variant in sorted(by_variant):
        recs = sorted(by_variant[variant], key=lambda r: r.seed)
        lengths = {len(r.rows) for r in recs}
        if len(lengths) != 1:
            raise ValueError(f"{variant}: inconsistent episode counts {sorted(lengths)}")
        curves = np.stack([r.returns for r in recs])
        areas = [aulc(r.returns) for r in recs]
        summary[variant] = {
            "episodes": int(curves.shape[1]),
            "seeds": [r.seed for r in recs],
            "mean": curves.mean(axis=0).tolist(),
            "median": np.median(curves, axis=0).tolist(),
            "aulc": areas,
            "aulc_mean": float(np.mean(areas)),
            "aulc_median": float(np.median(areas)),
        }
    return summary


def write_summary(summary: dict, path):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def effect_size(a, b) -> dict:
    """Difference of medians and Cohen's d (pooled sd) of ``a`` over ``b``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    pooled = np.sqrt((a.var(ddof=1) + b.var(ddof=1)) / 2) if len(a) > 1 and len(b) > 1 else 0.0
    diff = float(a.mean() - b.mean())
    if pooled > 0:
        d = diff / pooled
    else:
        d = math.copysign(math.inf, diff) if diff else 0.0
    return {
        "median_diff": float(np.median(a) - np.median(b)),
        "mean_diff": diff,
        "cohens_d": d,
    }
