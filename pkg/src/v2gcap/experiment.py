"""Replication batches, parameter sweeps and their CSV outputs."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analytic, stats
from .distributions import replication_seed
from .engine import SimTrace, classify, run
from .errors import V2GError
from .scenario import EvStreams, ScenarioConfig, SweepSpec, generate_ev

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("time_min", "n1", "n2", "n3", "psi1", "psi2", "psi3", "c_rd_kw", "c_ru_kw")
SUMMARY_COLUMNS = (
    "param_name", "param_value",
    "l1_ana", "l2_ana", "l3_ana", "c_rd_ana", "c_ru_ana",
    "c_rd_sim", "c_ru_sim", "err_rd", "err_ru", "ci_rd", "ci_ru",
)
EMPIRICAL_COLUMNS = (
    "param_name", "param_value", "replications_ok", "replications_failed",
    "p1", "p2", "p3", "q1", "q2", "q1_cfg", "q2_cfg",
)
GENERATOR_PROBE_STREAM = 1000


@dataclass
class Replication:
    index: int
    seed: int
    trace: SimTrace | None = None
    error: str | None = None

    @property
    def ok(self):
        return self.trace is not None


@dataclass
class Batch:
    """All replications of one configuration."""

    config: ScenarioConfig
    warmup: float
    replications: list = field(default_factory=list)

    @property
    def traces(self):
        return [r.trace for r in self.replications if r.ok]

    def state_counts(self):
        return np.sum([t.state_arrivals for t in self.traces], axis=0) if self.traces else np.zeros(3)

    def empirical_p(self):
        counts = self.state_counts()
        total = counts.sum()
        return tuple(float(c / total) for c in counts) if total else None

    def empirical_q(self):
        if not self.traces:
            return None
        exits = np.sum([t.exits for t in self.traces], axis=0)
        done = np.sum([t.completions[:2] for t in self.traces], axis=0)
        cfg = (self.config.q1, self.config.q2)
        return tuple(float(e / d) if d else c for e, d, c in zip(exits, done, cfg))

    def queue_means(self):
        """Per-replication post-warm-up mean occupancy, shape (replications, 3)."""
        return np.array([[_series_mean(t.time, t.n[j], self.warmup) for j in range(3)] for t in self.traces])

    def network_params(self, p=None, q=None) -> analytic.NetworkParams:
        """Analytic parameters at the measured p's and q's of this batch."""
        p = p or self.empirical_p() or estimate_state_fractions(self.config)
        q = q or self.empirical_q() or (self.config.q1, self.config.q2)
        c = self.config
        return analytic.NetworkParams(c.lam, *_renormalize(p), *q, c.mu1, c.mu2, c.mu3, c.p_ev)


def _renormalize(p):
    total = sum(p)
    return p[0] / total, p[1] / total, 1.0 - p[0] / total - p[1] / total


def _series_mean(times, values, warmup):
    """Post-warm-up time average; falls back to the last value when nothing is past warm-up."""
    if len(times) >= 2 and times[-1] > warmup:
        return stats.steady_mean(times, values, warmup)
    return float(values[-1])


def estimate_state_fractions(config: ScenarioConfig, draws: int = 100_000, seed: int = 0):
    """Monte-Carlo estimate of (p1, p2, p3) straight from the EV generator."""
    streams = EvStreams(seed, offset=GENERATOR_PROBE_STREAM)
    counts = [0, 0, 0]
    for _ in range(draws):
        ev = generate_ev(config, streams)
        counts[classify(ev.x, ev.x_low, ev.x_high) - 1] += 1
    return tuple(c / draws for c in counts)


def _one(args):
    config, index, seed, horizon, sample_interval, backend = args
    try:
        return Replication(index, seed, trace=run(config, seed, horizon, sample_interval, backend))
    except V2GError as exc:
        return Replication(index, seed, error=f"{type(exc).__name__}: {exc}")


def run_replications(config, seed, replications=None, horizon=None, warmup=None,
                     sample_interval=None, backend=None, workers=1) -> Batch:
    """Run independent replications; replication ``k`` uses a seed derived from ``(seed, k)``."""
    replications = config.replications if replications is None else replications
    warmup = config.warmup if warmup is None else warmup
    jobs = [
        (config, k, replication_seed(seed, k), horizon, sample_interval, backend)
        for k in range(replications)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_one, jobs))
    else:
        done = [_one(job) for job in jobs]
    for rep in done:
        if not rep.ok:
            log.warning("replication %d (seed %d) failed: %s", rep.index, rep.seed, rep.error)
    return Batch(config, warmup, done)


@dataclass(frozen=True)
class SummaryRow:
    param_name: str
    param_value: float
    analytic: analytic.AnalyticResult
    c_rd_sim: float
    c_ru_sim: float
    err_rd: float
    err_ru: float
    ci_rd: float
    ci_ru: float
    p: tuple
    q: tuple
    ok: int
    failed: int

    def as_csv(self):
        a = self.analytic
        return [self.param_name, self.param_value, a.l1, a.l2, a.l3, a.c_rd, a.c_ru,
                self.c_rd_sim, self.c_ru_sim, self.err_rd, self.err_ru, self.ci_rd, self.ci_ru]


def summarize(batch: Batch, param_name="reference", param_value=math.nan) -> SummaryRow:
    params = batch.network_params()
    result = analytic.solve(params)
    means = batch.queue_means()
    if means.size:
        c_rd = batch.config.p_ev * (means[:, 0] + means[:, 1])
        c_ru = batch.config.p_ev * (means[:, 1] + means[:, 2])
    else:
        c_rd = c_ru = np.array([math.nan])
    if c_rd.size >= 2:
        est_rd, est_ru = stats.aggregate(c_rd), stats.aggregate(c_ru)
        sim_rd, sim_ru, ci_rd, ci_ru = est_rd.mean, est_ru.mean, est_rd.half_width, est_ru.half_width
    else:
        sim_rd, sim_ru, ci_rd, ci_ru = float(c_rd[0]), float(c_ru[0]), math.nan, math.nan
    return SummaryRow(
        param_name=param_name,
        param_value=param_value,
        analytic=result,
        c_rd_sim=sim_rd,
        c_ru_sim=sim_ru,
        err_rd=stats.relative_error(sim_rd, result.c_rd),
        err_ru=stats.relative_error(sim_ru, result.c_ru),
        ci_rd=ci_rd,
        ci_ru=ci_ru,
        p=(params.p1, params.p2, params.p3),
        q=(params.q1, params.q2),
        ok=len(batch.traces),
        failed=len(batch.replications) - len(batch.traces),
    )


def _cell(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_trace(trace: SimTrace, path) -> None:
    c_rd, c_ru = trace.c_rd, trace.c_ru
    rows = (
        (trace.time[k], *trace.n[:, k], *trace.psi[:, k], c_rd[k], c_ru[k])
        for k in range(trace.time.size)
    )
    _write_csv(path, TRACE_COLUMNS, rows)


def write_summary(rows, path) -> None:
    _write_csv(path, SUMMARY_COLUMNS, (r.as_csv() for r in rows))


def write_empirical(rows, config, path) -> None:
    _write_csv(
        path,
        EMPIRICAL_COLUMNS,
        ([r.param_name, r.param_value, r.ok, r.failed, *r.p, *r.q, config.q1, config.q2] for r in rows),
    )


@dataclass
class ExperimentResult:
    rows: list
    batches: list
    out_dir: Path | None

    @property
    def all_failed(self):
        return all(row.ok == 0 for row in self.rows)


def run_experiment(config: ScenarioConfig, seed: int, sweep: SweepSpec | None = None, out_dir=None,
                   replications=None, horizon=None, warmup=None, sample_interval=None,
                   backend=None, workers=1, write_traces=True) -> ExperimentResult:
    """Run the reference point or every sweep point and write the CSV outputs.

    Every sweep point reuses the same master seed, so the points share
    arrival and EV streams and differ only through the swept rate.
    """
    if warmup is not None:
        config = config.with_overrides(warmup=warmup)
    points = [("reference", math.nan, config)]
    if sweep is not None:
        points = [(sweep.target, v, config.with_overrides(**{sweep.target: v})) for v in sweep.values]

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if write_traces:
            (out / "traces").mkdir(exist_ok=True)

    rows, batches, failures = [], [], []
    for index, (name, value, cfg) in enumerate(points):
        batch = run_replications(cfg, seed, replications, horizon, None, sample_interval, backend, workers)
        batches.append(batch)
        rows.append(summarize(batch, name, value))
        for rep in batch.replications:
            if not rep.ok:
                failures.append((name, value, rep.index, rep.seed, rep.error))
            elif out is not None and write_traces:
                tag = "reference" if sweep is None else f"{name}_{index:03d}"
                write_trace(rep.trace, out / "traces" / f"{tag}_rep{rep.index:04d}.csv")

    if out is not None:
        write_summary(rows, out / "summary.csv")
        if sweep is not None:
            write_summary(rows, out / "sweep.csv")
        write_empirical(rows, config, out / "empirical.csv")
        if failures:
            _write_csv(out / "failures.csv", ("param_name", "param_value", "replication", "seed", "error"),
                       failures)
    return ExperimentResult(rows, batches, out)
