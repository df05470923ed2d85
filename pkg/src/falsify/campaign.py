"""Campaign orchestration: the serial falsification loop and the
worker-pool parallel pipeline, plus result persistence.

Both runners share one shape: a coordinator owns the sampler and the
result tables, draws samples, hands them to a simulator, and folds the
evaluated outcome back into the sampler.  The parallel runner keeps up
to W samples in flight on worker threads; the coordinator remains the
only thread that ever touches sampler state, applying feedback in
completion order as it arrives (workers may finish out of dispatch
order).  Simulation releases the interpreter lock — the compiled kernel
runs lock-free and artificial delays sleep — so W workers overlap almost
perfectly when simulation dominates.

Sample ids are assigned at dispatch and are dense over dispatched
samples.  A worker that raises marks its sample failed: the id is logged
and counted, the sample joins neither table, and the campaign continues.
Coordinator-side errors abort the campaign with the partial result
attached to the raised CampaignError.
"""

from __future__ import annotations

import csv
import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, FalsifyError
from .monitor import Specification, evaluate
from .rulebook import FalsificationVector, Rulebook
from .samplers import (
    DEFAULT_ALPHA,
    SAMPLER_NAMES,
    SampleFeedback,
    make_sampler,
)
from .scenarios import (
    ScenarioConfig,
    feature_bindings,
    simulate,
    simulate_with_delay,
)
from .space import FeatureSpace, SampleVector

logger = logging.getLogger(__name__)

RECORD_FIELDS = (
    "id",
    "worker",
    "t_dispatch",
    "t_complete",
    "values",
    "buckets",
    "rho",
    "b",
    "counterexample",
    "termination",
    "sim_seconds",
)

ERROR_CSV = "error.csv"
SAFE_CSV = "safe.csv"
RECORDS_JSONL = "records.jsonl"
SUMMARY_JSON = "summary.json"
SNAPSHOT_JSON = "sampler_snapshot.json"


@dataclass(frozen=True)
class CampaignConfig:
    """Everything a falsification campaign needs, validated up front."""

    space: FeatureSpace
    scenario: ScenarioConfig
    spec: Specification
    rulebook: Rulebook
    sampler_name: str = "uniform"
    alpha: float = DEFAULT_ALPHA
    max_samples: int | None = None
    max_wall_seconds: float | None = None
    workers: int = 1
    seed: int = 0
    delay: float = 0.0
    checkpoint_interval: int | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if self.sampler_name not in SAMPLER_NAMES:
            raise ConfigError(
                f"unknown sampler {self.sampler_name!r}; "
                f"expected one of {SAMPLER_NAMES}"
            )
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.max_samples is None and self.max_wall_seconds is None:
            raise ConfigError(
                "at least one budget bound (max_samples or max_wall_seconds) "
                "must be set"
            )
        if self.max_samples is not None and self.max_samples < 1:
            raise ConfigError(f"max_samples must be >= 1, got {self.max_samples}")
        if self.max_wall_seconds is not None and not self.max_wall_seconds > 0:
            raise ConfigError(
                f"max_wall_seconds must be > 0, got {self.max_wall_seconds}"
            )
        if self.delay < 0:
            raise ConfigError(f"delay must be >= 0, got {self.delay}")
        if self.checkpoint_interval is not None and self.checkpoint_interval < 1:
            raise ConfigError(
                f"checkpoint_interval must be >= 1, got {self.checkpoint_interval}"
            )
        if len(self.spec) != self.rulebook.metric_count:
            raise ConfigError(
                f"spec has {len(self.spec)} metrics but the rulebook orders "
                f"{self.rulebook.metric_count}"
            )
        bindings = feature_bindings(self.scenario)
        if self.space.d != len(bindings):
            raise ConfigError(
                f"feature space has {self.space.d} dimensions but scenario "
                f"{self.scenario.scenario_id!r} binds {len(bindings)} features"
            )

    def describe(self) -> dict:
        """Config as a plain dict in the campaign-file schema."""
        return {
            "feature_space": {
                "dimensions": [
                    {"name": d.name, "lo": d.lo, "hi": d.hi}
                    for d in self.space.dims
                ],
                "buckets": self.space.bucket_count,
            },
            "scenario": {
                "id": self.scenario.scenario_id,
                "adversaries": self.scenario.adversaries,
            },
            "spec": [
                {
                    "metric": "joint_separation",
                    "agents": list(m.agents),
                    "threshold": m.threshold,
                }
                if hasattr(m, "agents")
                else {
                    "metric": "min_separation",
                    "agent": m.agent,
                    "threshold": m.threshold,
                }
                for m in self.spec.metrics
            ],
            "rulebook": {
                "metrics": self.rulebook.metric_count,
                "edges": sorted(list(e) for e in self.rulebook.edges),
            },
            "sampler": {"name": self.sampler_name, "alpha": self.alpha},
            "budget": {
                "max_samples": self.max_samples,
                "max_wall_seconds": self.max_wall_seconds,
            },
            "workers": self.workers,
            "seed": self.seed,
            "delay": self.delay,
            "checkpoint_interval": self.checkpoint_interval,
            "output_dir": self.output_dir,
        }


@dataclass(frozen=True)
class SampleRecord:
    """One completed simulation, as stored in the error/safe tables."""

    id: int
    worker: int
    t_dispatch: float
    t_complete: float
    sample: SampleVector
    rho: tuple[float, ...]
    b: tuple[bool, ...]
    is_counterexample: bool
    termination: str
    sim_seconds: float

    def __post_init__(self):
        if self.is_counterexample != any(self.b):
            raise ConfigError(
                "record flag is_counterexample must match its bit vector"
            )
        if len(self.rho) != len(self.b):
            raise ConfigError("rho and b must have equal length")

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "worker": self.worker,
            "t_dispatch": self.t_dispatch,
            "t_complete": self.t_complete,
            "values": list(self.sample.values),
            "buckets": list(self.sample.buckets),
            "rho": list(self.rho),
            "b": list(self.b),
            "counterexample": self.is_counterexample,
            "termination": self.termination,
            "sim_seconds": self.sim_seconds,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "SampleRecord":
        return cls(
            id=int(doc["id"]),
            worker=int(doc["worker"]),
            t_dispatch=float(doc["t_dispatch"]),
            t_complete=float(doc["t_complete"]),
            sample=SampleVector(
                tuple(float(v) for v in doc["values"]),
                tuple(int(b) for b in doc["buckets"]),
            ),
            rho=tuple(float(r) for r in doc["rho"]),
            b=tuple(bool(x) for x in doc["b"]),
            is_counterexample=bool(doc["counterexample"]),
            termination=str(doc["termination"]),
            sim_seconds=float(doc["sim_seconds"]),
        )


@dataclass(frozen=True)
class CampaignResult:
    """Aggregated campaign outcome; records are sorted by sample id."""

    config: CampaignConfig
    records: tuple[SampleRecord, ...]
    maximal: tuple[FalsificationVector, ...]
    snapshot: dict
    wall_seconds: float
    dispatched: int
    failed: int
    checkpoints: tuple[dict, ...] = ()

    @property
    def error_table(self) -> tuple[SampleRecord, ...]:
        return tuple(r for r in self.records if r.is_counterexample)

    @property
    def safe_table(self) -> tuple[SampleRecord, ...]:
        return tuple(r for r in self.records if not r.is_counterexample)

    @property
    def totals(self) -> dict:
        return {
            "samples": len(self.records),
            "counterexamples": len(self.error_table),
            "wall_seconds": self.wall_seconds,
        }


class CampaignError(FalsifyError):
    """Campaign aborted; .partial holds everything finished before the error."""

    def __init__(self, message: str, partial: CampaignResult):
        super().__init__(message)
        self.partial = partial


def default_simulator(config: CampaignConfig, sample: SampleVector):
    if config.delay > 0:
        return simulate_with_delay(config.scenario, sample, config.delay)
    return simulate(config.scenario, sample)


class _Runner:
    """Shared coordinator state for both execution modes."""

    def __init__(self, config: CampaignConfig, simulate_fn=None):
        self.config = config
        self.simulate_fn = simulate_fn or default_simulator
        self.sampler = make_sampler(
            config.sampler_name,
            config.space,
            config.seed,
            rulebook=config.rulebook,
            alpha=config.alpha,
        )
        self.records: list[SampleRecord] = []
        self.maximal: list[FalsificationVector] = []
        self.checkpoints: list[dict] = []
        self.failed = 0
        self.dispatched = 0
        self.t0 = time.perf_counter()

    # -- budget --------------------------------------------------------------

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def may_dispatch(self) -> bool:
        cfg = self.config
        if cfg.max_samples is not None and self.dispatched >= cfg.max_samples:
            return False
        if cfg.max_wall_seconds is not None and self.elapsed() >= cfg.max_wall_seconds:
            return False
        return True

    # -- bookkeeping -----------------------------------------------------------

    def simulate_one(self, sample: SampleVector):
        """Run one simulation + evaluation; returns (rho, termination, secs)."""
        t0 = time.perf_counter()
        traj = self.simulate_fn(self.config, sample)
        rho = evaluate(self.config.spec, traj)
        return rho, traj.termination, time.perf_counter() - t0

    def absorb(self, record: SampleRecord) -> None:
        """Fold one completed sample into sampler state and the tables."""
        feedback = SampleFeedback(
            sample=record.sample,
            rho=record.rho,
            b=record.b,
            is_counterexample=record.is_counterexample,
        )
        self.sampler.update(feedback)
        self.records.append(record)
        if record.is_counterexample:
            self.maximal, _ = self.config.rulebook.insert_maximal(
                self.maximal, record.b
            )
        interval = self.config.checkpoint_interval
        if interval and len(self.records) % interval == 0:
            self.checkpoints.append(self.sampler.snapshot())

    def result(self) -> CampaignResult:
        return CampaignResult(
            config=self.config,
            records=tuple(sorted(self.records, key=lambda r: r.id)),
            maximal=tuple(self.maximal),
            snapshot=self.sampler.snapshot(),
            wall_seconds=self.elapsed(),
            dispatched=self.dispatched,
            failed=self.failed,
            checkpoints=tuple(self.checkpoints),
        )

    def make_record(self, sid, worker, t_dispatch, t_complete, sample, rho,
                    termination, sim_seconds) -> SampleRecord:
        bits = tuple(bool(r < 0.0) for r in rho)
        return SampleRecord(
            id=sid,
            worker=worker,
            t_dispatch=t_dispatch,
            t_complete=t_complete,
            sample=sample,
            rho=tuple(float(r) for r in rho),
            b=bits,
            is_counterexample=any(bits),
            termination=termination,
            sim_seconds=sim_seconds,
        )


def run_serial(config: CampaignConfig, simulate_fn=None) -> CampaignResult:
    """Single-threaded loop: sample, simulate, evaluate, update, repeat."""
    runner = _Runner(config, simulate_fn)
    try:
        while runner.may_dispatch():
            sid = runner.dispatched
            t_dispatch = time.time()
            sample = runner.sampler.next_sample()
            runner.dispatched += 1
            rho, termination, sim_seconds = runner.simulate_one(sample)
            record = runner.make_record(
                sid, 0, t_dispatch, time.time(), sample, rho,
                termination, sim_seconds,
            )
            runner.absorb(record)
    except FalsifyError as exc:
        raise CampaignError(
            f"campaign aborted after {len(runner.records)} samples: {exc}",
            runner.result(),
        ) from exc
    return runner.result()


def _worker_loop(runner: _Runner, worker_id: int, tasks: queue.Queue,
                 results: queue.Queue) -> None:
    while True:
        task = tasks.get()
        if task is None:
            return
        sid, t_dispatch, sample = task
        try:
            rho, termination, sim_seconds = runner.simulate_one(sample)
        except Exception as exc:  # noqa: BLE001 - worker isolation boundary
            results.put(("failed", sid, worker_id, f"{type(exc).__name__}: {exc}"))
        else:
            record = runner.make_record(
                sid, worker_id, t_dispatch, time.time(), sample, rho,
                termination, sim_seconds,
            )
            results.put(("done", record))


def run_parallel(config: CampaignConfig, simulate_fn=None) -> CampaignResult:
    """Worker-pool pipeline: W simulators, one sampler-owning coordinator.

    The coordinator keeps up to ``workers`` samples outstanding and
    applies feedback as each result lands, without waiting for the rest
    of the batch — adaptive samplers therefore see feedback in
    completion order, which is the accepted nondeterminism of parallel
    mode.  With one worker the pipeline degenerates to the serial loop.
    """
    runner = _Runner(config, simulate_fn)
    tasks: queue.Queue = queue.Queue()
    results: queue.Queue = queue.Queue()
    threads = [
        threading.Thread(
            target=_worker_loop,
            args=(runner, w, tasks, results),
            name=f"falsify-worker-{w}",
            daemon=True,
        )
        for w in range(config.workers)
    ]
    for t in threads:
        t.start()

    in_flight = 0
    abort: Exception | None = None

    def handle(item) -> None:
        nonlocal abort
        if item[0] == "done":
            runner.absorb(item[1])
        else:
            _, sid, worker_id, message = item
            runner.failed += 1
            logger.warning("sample %d failed on worker %d: %s",
                           sid, worker_id, message)

    try:
        while True:
            # Apply any feedback that has already arrived.
            while True:
                try:
                    item = results.get_nowait()
                except queue.Empty:
                    break
                in_flight -= 1
                handle(item)
            if in_flight < config.workers and runner.may_dispatch():
                sample = runner.sampler.next_sample()
                tasks.put((runner.dispatched, time.time(), sample))
                runner.dispatched += 1
                in_flight += 1
                continue
            if in_flight == 0:
                break
            # Nothing to dispatch: block until a result lands.
            item = results.get()
            in_flight -= 1
            handle(item)
    except FalsifyError as exc:
        abort = exc
        # Absorb whatever was already in flight so the partial result is
        # as complete as possible, then let the workers exit.
        while in_flight > 0:
            item = results.get()
            in_flight -= 1
            try:
                handle(item)
            except FalsifyError:
                logger.exception("secondary error while draining results")
    finally:
        for _ in threads:
            tasks.put(None)
        for t in threads:
            t.join()

    if abort is not None:
        raise CampaignError(
            f"campaign aborted after {len(runner.records)} samples: {abort}",
            runner.result(),
        ) from abort
    return runner.result()


def run_campaign(config: CampaignConfig, simulate_fn=None) -> CampaignResult:
    """Dispatch to the serial loop (W=1) or the worker pool (W>1)."""
    if config.workers == 1:
        return run_serial(config, simulate_fn)
    return run_parallel(config, simulate_fn)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _write_table(path: Path, records) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            doc = r.to_json_dict()
            writer.writerow([
                doc["id"], doc["worker"], doc["t_dispatch"], doc["t_complete"],
                json.dumps(doc["values"]), json.dumps(doc["buckets"]),
                json.dumps(doc["rho"]), json.dumps(doc["b"]),
                doc["counterexample"], doc["termination"], doc["sim_seconds"],
            ])


def write_artifacts(result: CampaignResult, out_dir) -> dict:
    """Persist a campaign: tables, record log, summary, sampler snapshot."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    _write_table(out / ERROR_CSV, result.error_table)
    _write_table(out / SAFE_CSV, result.safe_table)

    with (out / RECORDS_JSONL).open("w") as fh:
        for r in result.records:
            fh.write(json.dumps(r.to_json_dict()) + "\n")

    summary = {
        "config": result.config.describe(),
        "totals": result.totals,
        "dispatched": result.dispatched,
        "failed": result.failed,
        "maximal": [list(bits) for bits in result.maximal],
        "metric_names": list(result.config.spec.names),
    }
    (out / SUMMARY_JSON).write_text(json.dumps(summary, indent=2) + "\n")
    (out / SNAPSHOT_JSON).write_text(json.dumps(result.snapshot, indent=2) + "\n")
    return {
        "error_csv": out / ERROR_CSV,
        "safe_csv": out / SAFE_CSV,
        "records": out / RECORDS_JSONL,
        "summary": out / SUMMARY_JSON,
        "snapshot": out / SNAPSHOT_JSON,
    }


def read_records(run_dir) -> list[SampleRecord]:
    path = Path(run_dir) / RECORDS_JSONL
    if not path.exists():
        raise ConfigError(f"no {RECORDS_JSONL} in {run_dir}")
    records = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(SampleRecord.from_json_dict(json.loads(line)))
    return records


def read_summary(run_dir) -> dict:
    path = Path(run_dir) / SUMMARY_JSON
    if not path.exists():
        raise ConfigError(f"no {SUMMARY_JSON} in {run_dir}")
    return json.loads(path.read_text())
