"""Seeded Monte-Carlo experiment runner with CSV output and op accounting.

Experiments are embarrassingly parallel over frames: every frame draws from
its own counter-based RNG substream keyed by (seed, stream index), and all
per-frame results are integers, so aggregate metrics are byte-identical
regardless of worker count or evaluation order.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .channel import FrameSpec, draw_frame, substream
from .classifiers import (
    CLASSIFIER_NAMES,
    classify_log_map,
    classify_max_log_map,
    classify_zf_alrt,
    log_map_scores,
    lord_layer_grids,
    max_log_scores,
    subspace_layer_grids,
)
from .constellation import ModulationType, build_constellation
from .detection import assumed_mt_detect, mt_aware_detect
from .errors import (
    ConfigError,
    DegenerateA,
    DegeneratePivot,
    NumericalFailure,
    RankDeficient,
)
from .opcount import OpCounter, table_bound

log = logging.getLogger(__name__)

CSV_HEADER = "classifier,snr_db,ccr,ccr_ci95,ser,frames,layers,dist_ops,exp_ops,log_ops"

DETECTOR_MODES = ("subspace", "lord")

_DECOMPOSITION_ERRORS = (RankDeficient, DegeneratePivot, DegenerateA)
_FAILURE_BUDGET = 1e-3  # fraction of frames allowed to fail decomposition


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one CCR or SER sweep. Modulation/classifier names use
    their external string forms; see validate() for the allowed values."""

    n: int = 4
    snr_grid_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    frames_per_point: int = 200
    t: int = 1000
    hypothesis_set: tuple[str, ...] = ("phi", "qpsk", "qam16", "qam64", "qam256")
    classifiers: tuple[str, ...] = ("subspace-log-map", "subspace-max-log-map")
    rho: float = 0.0
    slice_const: str = "qam1024"
    seed: int = 1
    output_path: str | None = None
    threads: int = 1
    # one classification decision accumulates T observations across this many
    # quasi-static channel blocks (per-layer MTs are constant per decision)
    channel_blocks: int = 20
    layer_mt: str = "qam64"
    layer_index: int = 0
    detectors: tuple[str, ...] = ("subspace", "lord")
    trace_path: str | None = None

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError(f"n: antenna count must be >= 1, got {self.n}")
        if not self.snr_grid_db:
            raise ConfigError("snr_db: grid must not be empty")
        if self.frames_per_point < 1:
            raise ConfigError(f"frames: must be >= 1, got {self.frames_per_point}")
        if self.t < 1:
            raise ConfigError(f"t: must be >= 1, got {self.t}")
        if not self.hypothesis_set:
            raise ConfigError("hypotheses: must name at least one modulation type")
        for name in self.hypothesis_set + (self.slice_const, self.layer_mt):
            try:
                ModulationType.from_name(name)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        for name in self.classifiers:
            if name not in CLASSIFIER_NAMES:
                raise ConfigError(
                    f"classifiers: unknown name {name!r} (valid: {', '.join(CLASSIFIER_NAMES)})"
                )
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"rho: correlation factor must be in [0, 1), got {self.rho}")
        if not 0 <= self.layer_index < self.n:
            raise ConfigError(f"layer_index: must be in 0..{self.n - 1}, got {self.layer_index}")
        for det in self.detectors:
            if det not in DETECTOR_MODES:
                raise ConfigError(f"detectors: unknown mode {det!r} (valid: subspace, lord)")
        if self.threads < 1:
            raise ConfigError(f"threads: must be >= 1, got {self.threads}")
        if self.channel_blocks < 1:
            raise ConfigError(f"channel_blocks: must be >= 1, got {self.channel_blocks}")
        if not 0 <= self.seed < (1 << 64):
            raise ConfigError("seed: must fit in an unsigned 64-bit integer")

    def validate_blocking(self) -> None:
        """Classification sweeps split T observations across channel blocks."""
        if self.t % self.channel_blocks:
            raise ConfigError(
                f"t: observation count {self.t} must divide evenly into "
                f"{self.channel_blocks} channel blocks"
            )

    @property
    def hypothesis_mts(self) -> tuple[ModulationType, ...]:
        return tuple(ModulationType.from_name(s) for s in self.hypothesis_set)

    @property
    def slice_mt(self) -> ModulationType:
        return ModulationType.from_name(self.slice_const)

    @property
    def layer_mt_type(self) -> ModulationType:
        return ModulationType.from_name(self.layer_mt)


@dataclass
class MetricRow:
    classifier: str
    snr_db: float
    ccr: float | None
    ccr_ci95: float | None
    ser: float | None
    frames: int
    layers: int
    dist_ops: int
    exp_ops: int
    log_ops: int


def binomial_ci95(successes: int, trials: int) -> float:
    if trials == 0:
        return 0.0
    p = successes / trials
    return 1.96 * math.sqrt(p * (1.0 - p) / trials)


def _decision_stream(cfg: ExperimentConfig, snr_idx: int, frame_idx: int, block: int) -> int:
    return (snr_idx * cfg.frames_per_point + frame_idx) * cfg.channel_blocks + block


def _block_spec(cfg: ExperimentConfig, snr_idx: int) -> FrameSpec:
    return FrameSpec(
        n=cfg.n,
        t=cfg.t // cfg.channel_blocks,
        hypothesis_set=cfg.hypothesis_mts,
        snr_db=cfg.snr_grid_db[snr_idx],
        rho=cfg.rho,
        seed=cfg.seed,
    )


def _classify_decision(cfg: ExperimentConfig, spec: FrameSpec, snr_idx: int,
                       frame_idx: int, trace: dict | None):
    """One classification decision: accumulate per-layer likelihoods over T
    observations spread across channel_blocks quasi-static blocks, all sharing
    the per-layer MTs drawn for the first block.

    Returns {classifier: [correct_layers, layer_decisions, OpCounter]}.
    """
    hyps = cfg.hypothesis_mts
    consts = [build_constellation(mt) for mt in hyps]
    slice_const = build_constellation(cfg.slice_mt)
    subspace = [c for c in cfg.classifiers if c.startswith("subspace-")]
    lord = [c for c in cfg.classifiers if c.startswith("lord-")]
    joint = [c for c in cfg.classifiers if c in ("log-map", "max-log-map")]
    result = {c: [0, 0, OpCounter()] for c in cfg.classifiers}
    acc = {c: np.zeros((cfg.n, len(hyps))) for c in cfg.classifiers if c not in joint}
    acc_joint = {c: None for c in joint}
    mts = None

    for block in range(cfg.channel_blocks):
        rng = substream(cfg.seed, _decision_stream(cfg, snr_idx, frame_idx, block))
        frame = draw_frame(spec, rng, fixed_mts=None if mts is None else dict(enumerate(mts)))
        if mts is None:
            mts = frame.mts
        inv_sigma2 = 1.0 / frame.sigma2
        for layer in range(frame.n):
            if subspace:
                grids = subspace_layer_grids(frame, layer, hyps, slice_const)
                for name in subspace:
                    score = (max_log_scores if name.endswith("max-log-map") else log_map_scores)(
                        grids, consts, inv_sigma2, result[name][2]
                    )
                    acc[name][layer] += score
            if lord:
                grids = lord_layer_grids(frame, layer, hyps, slice_const)
                for name in lord:
                    score = (max_log_scores if name.endswith("max-log-map") else log_map_scores)(
                        grids, consts, inv_sigma2, result[name][2]
                    )
                    acc[name][layer] += score
            if "zf-alrt" in cfg.classifiers:
                hs = classify_zf_alrt(frame, layer, hyps, counter=result["zf-alrt"][2])
                acc["zf-alrt"][layer] += hs.scores
        for name in joint:
            fn = classify_log_map if name == "log-map" else classify_max_log_map
            decision = fn(frame, hyps, counter=result[name][2])
            if acc_joint[name] is None:
                acc_joint[name] = decision.scores
            else:
                acc_joint[name] = acc_joint[name] + decision.scores

    winners: dict[str, list[int]] = {}
    for name, scores in acc.items():
        winners[name] = [int(np.argmax(scores[layer])) for layer in range(cfg.n)]
    for name in joint:
        combos = list(itertools.product(range(len(hyps)), repeat=cfg.n))
        winners[name] = list(combos[int(np.argmax(acc_joint[name]))])
    for name, win in winners.items():
        for layer in range(cfg.n):
            result[name][0] += hyps[win[layer]] is mts[layer]
            result[name][1] += 1
    if trace is not None:
        trace["true_mts"] = [mt.value for mt in mts]
        trace["winners"] = {c: [hyps[w].value for w in ws] for c, ws in winners.items()}
    return result


def _run_ccr_chunk(args):
    cfg, snr_idx, lo, hi = args
    spec = _block_spec(cfg, snr_idx)
    totals = {c: [0, 0, OpCounter()] for c in cfg.classifiers}
    frames_ok = 0
    frames_failed = 0
    traces = []
    for frame_idx in range(lo, hi):
        trace = {"frame": frame_idx, "snr_db": spec.snr_db} if cfg.trace_path else None
        try:
            result = _classify_decision(cfg, spec, snr_idx, frame_idx, trace)
        except _DECOMPOSITION_ERRORS as exc:
            frames_failed += 1
            if cfg.trace_path:
                traces.append({"frame": frame_idx, "snr_db": spec.snr_db, "error": str(exc)})
            continue
        frames_ok += 1
        for name, (correct, decisions, counter) in result.items():
            totals[name][0] += correct
            totals[name][1] += decisions
            totals[name][2].merge(counter)
        if trace is not None:
            traces.append(trace)
    return snr_idx, totals, frames_ok, frames_failed, traces


def _run_ser_chunk(args):
    # detection is per-observation, so each SER frame is one quasi-static
    # channel block with freshly hopped MTs on the interfering layers
    cfg, snr_idx, lo, hi = args
    spec = FrameSpec(
        n=cfg.n, t=cfg.t, hypothesis_set=cfg.hypothesis_mts,
        snr_db=cfg.snr_grid_db[snr_idx], rho=cfg.rho, seed=cfg.seed,
    )
    layer = cfg.layer_index
    layer_mt = cfg.layer_mt_type
    slice_const = build_constellation(cfg.slice_mt)
    variants = [
        (f"{det}-detect-{cfg.slice_const}", det, "assumed") for det in cfg.detectors
    ] + [(f"{det}-detect-aware", det, "aware") for det in cfg.detectors]
    totals = {name: [0, 0, OpCounter()] for name, _, _ in variants}
    frames_ok = 0
    frames_failed = 0
    traces = []
    for frame_idx in range(lo, hi):
        rng = substream(cfg.seed, snr_idx * cfg.frames_per_point + frame_idx)
        frame = draw_frame(spec, rng, fixed_mts={layer: layer_mt})
        truth = frame.x[layer]
        try:
            frame_counts = {}
            for name, det, flavor in variants:
                counter = OpCounter()
                if flavor == "assumed":
                    res = assumed_mt_detect(frame, layer, layer_mt, slice_const,
                                            mode=det, counter=counter)
                else:
                    res = mt_aware_detect(frame, layer, mode=det, counter=counter)
                errors = int(np.count_nonzero(res.hard_decisions != truth))
                frame_counts[name] = (errors, frame.t, counter)
        except _DECOMPOSITION_ERRORS as exc:
            frames_failed += 1
            if cfg.trace_path:
                traces.append({"frame": frame_idx, "snr_db": spec.snr_db, "error": str(exc)})
            continue
        frames_ok += 1
        for name, (errors, symbols, counter) in frame_counts.items():
            totals[name][0] += errors
            totals[name][1] += symbols
            totals[name][2].merge(counter)
        if cfg.trace_path:
            traces.append({
                "frame": frame_idx,
                "snr_db": spec.snr_db,
                "true_mts": [mt.value for mt in frame.mts],
                "errors": {name: counts[0] for name, counts in frame_counts.items()},
            })
    return snr_idx, totals, frames_ok, frames_failed, traces


def _chunked_tasks(cfg: ExperimentConfig, chunk: int = 25):
    for snr_idx in range(len(cfg.snr_grid_db)):
        for lo in range(0, cfg.frames_per_point, chunk):
            yield cfg, snr_idx, lo, min(lo + chunk, cfg.frames_per_point)


def _map_tasks(worker, tasks, threads: int):
    tasks = list(tasks)
    if threads <= 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, tasks))


def _write_trace(cfg: ExperimentConfig, traces) -> None:
    if not cfg.trace_path:
        return
    with open(cfg.trace_path, "w") as fh:
        for record in traces:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _check_failures(frames_failed: int, frames_total: int) -> None:
    if frames_total and frames_failed / frames_total > _FAILURE_BUDGET:
        raise NumericalFailure(
            f"{frames_failed}/{frames_total} frames failed decomposition "
            f"(budget {_FAILURE_BUDGET:.1%})"
        )


def _reduce_sweep(cfg: ExperimentConfig, results, names, is_ser: bool):
    per_point = {
        (name, snr_idx): [0, 0, OpCounter()]
        for name in names
        for snr_idx in range(len(cfg.snr_grid_db))
    }
    frames_ok = {snr_idx: 0 for snr_idx in range(len(cfg.snr_grid_db))}
    failed_total = 0
    traces = []
    for snr_idx, totals, ok, failed, chunk_traces in results:
        frames_ok[snr_idx] += ok
        failed_total += failed
        traces.extend(chunk_traces)
        for name, (num, den, counter) in totals.items():
            agg = per_point[(name, snr_idx)]
            agg[0] += num
            agg[1] += den
            agg[2].merge(counter)
    _check_failures(failed_total, len(cfg.snr_grid_db) * cfg.frames_per_point)
    _write_trace(cfg, traces)
    rows = []
    for name in names:
        for snr_idx, snr_db in enumerate(cfg.snr_grid_db):
            num, den, counter = per_point[(name, snr_idx)]
            if is_ser:
                ccr = ci = None
                ser = num / den if den else None
            else:
                ccr = num / den if den else None
                ci = binomial_ci95(num, den) if den else None
                ser = None
            rows.append(
                MetricRow(
                    classifier=name,
                    snr_db=snr_db,
                    ccr=ccr,
                    ccr_ci95=ci,
                    ser=ser,
                    frames=frames_ok[snr_idx],
                    layers=den,
                    dist_ops=counter.dist,
                    exp_ops=counter.exp,
                    log_ops=counter.log,
                )
            )
    return rows


def _warn_nonmonotone(cfg: ExperimentConfig, rows) -> None:
    by_clf: dict[str, list[MetricRow]] = {}
    for row in rows:
        if row.ccr is not None:
            by_clf.setdefault(row.classifier, []).append(row)
    for name, series in by_clf.items():
        series.sort(key=lambda r: r.snr_db)
        for prev, cur in zip(series, series[1:]):
            drop = prev.ccr - cur.ccr
            if drop > (prev.ccr_ci95 + cur.ccr_ci95):
                log.warning(
                    "CCR inversion beyond CI for %s: %.4f @ %g dB -> %.4f @ %g dB",
                    name, prev.ccr, prev.snr_db, cur.ccr, cur.snr_db,
                )


def run_ccr_experiment(cfg: ExperimentConfig):
    """Classify every layer of every frame and report per-classifier CCR."""
    cfg.validate()
    cfg.validate_blocking()
    results = _map_tasks(_run_ccr_chunk, _chunked_tasks(cfg), cfg.threads)
    rows = _reduce_sweep(cfg, results, list(cfg.classifiers), is_ser=False)
    _warn_nonmonotone(cfg, rows)
    if cfg.output_path:
        write_csv(rows, cfg.output_path)
    return rows


def run_ser_experiment(cfg: ExperimentConfig):
    """Fix the layer-of-interest MT, hop the others, and report hard-decision
    SER for dense-assumption and MT-aware detection."""
    cfg.validate()
    names = [f"{det}-detect-{cfg.slice_const}" for det in cfg.detectors]
    names += [f"{det}-detect-aware" for det in cfg.detectors]
    results = _map_tasks(_run_ser_chunk, _chunked_tasks(cfg), cfg.threads)
    rows = _reduce_sweep(cfg, results, names, is_ser=True)
    if cfg.output_path:
        write_csv(rows, cfg.output_path)
    return rows


@dataclass
class OpsReportRow:
    classifier: str
    per_obs: tuple[float, float, float]
    bound: tuple[int, int, int]
    within: bool


def count_ops_report(cfg: ExperimentConfig):
    """Measured per-observation operation counts against the complexity bounds.

    Per-layer classifiers are normalized per (observation, layer); the joint
    classifiers per observation. Measured counts must not exceed the bounds.
    """
    cfg.validate()
    rows = run_ccr_experiment(replace(cfg, output_path=None, trace_path=None))
    s = len(cfg.hypothesis_set)
    xmax = max(ModulationType.from_name(m).cardinality for m in cfg.hypothesis_set)
    totals: dict[str, list[int]] = {}
    units: dict[str, int] = {}
    for row in rows:
        agg = totals.setdefault(row.classifier, [0, 0, 0])
        agg[0] += row.dist_ops
        agg[1] += row.exp_ops
        agg[2] += row.log_ops
        obs = row.frames * cfg.t
        if row.classifier not in ("log-map", "max-log-map"):
            obs *= cfg.n
        units[row.classifier] = units.get(row.classifier, 0) + obs
    report = []
    for name in cfg.classifiers:
        bound = table_bound(name, cfg.n, s, xmax)
        u = units[name]
        per_obs = tuple(v / u for v in totals[name]) if u else (0.0, 0.0, 0.0)
        within = all(m <= b for m, b in zip(per_obs, bound.as_tuple()))
        report.append(OpsReportRow(classifier=name, per_obs=per_obs,
                                   bound=bound.as_tuple(), within=within))
    return report


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def rows_to_csv(rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    r.classifier, r.snr_db, r.ccr, r.ccr_ci95, r.ser,
                    r.frames, r.layers, r.dist_ops, r.exp_ops, r.log_ops,
                )
            )
        )
    return "\n".join(lines) + "\n"


def write_csv(rows, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(rows_to_csv(rows))


def parse_snr_grid(text: str) -> tuple[float, ...]:
    """Either 'start:stop:step' (stop inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"snr_db: expected start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("snr_db: step must be positive")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        if count < 1:
            raise ConfigError(f"snr_db: empty grid from {text!r}")
        return tuple(start + i * step for i in range(count))
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"snr_db: cannot parse {text!r}") from None


_LIST_KEYS = {"hypotheses", "classifiers", "detectors"}
_KEY_TO_FIELD = {
    "n": "n",
    "snr_db": "snr_grid_db",
    "frames": "frames_per_point",
    "t": "t",
    "hypotheses": "hypothesis_set",
    "classifiers": "classifiers",
    "rho": "rho",
    "slice_const": "slice_const",
    "seed": "seed",
    "out": "output_path",
    "threads": "threads",
    "channel_blocks": "channel_blocks",
    "layer_mt": "layer_mt",
    "layer_index": "layer_index",
    "detectors": "detectors",
    "trace": "trace_path",
}
_INT_FIELDS = {"n", "frames_per_point", "t", "seed", "threads", "layer_index", "channel_blocks"}


def parse_config_text(text: str) -> dict:
    """Flat 'key = value' lines with '#' comments; lists are comma-separated."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        field_name = _KEY_TO_FIELD[key]
        if key == "snr_db":
            values[field_name] = parse_snr_grid(value)
        elif key in _LIST_KEYS:
            values[field_name] = tuple(p.strip() for p in value.split(",") if p.strip())
        elif field_name in _INT_FIELDS:
            try:
                values[field_name] = int(value)
            except ValueError:
                raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
        elif key == "rho":
            try:
                values[field_name] = float(value)
            except ValueError:
                raise ConfigError(f"rho: expected a float, got {value!r}") from None
        else:
            values[field_name] = value
    return values


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    values: dict = {}
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg
