"""Two-condition connectivity analysis, end to end.

Per condition and subject: cut epochs, optionally reject on amplitude,
screen for weak stationarity, fit a VAR per configured channel pair (or one
joint model), turn each fit into a PDC spectrum, average spectra over a
subject's surviving segments per frequency, then average within bands. The
per-subject band values of the two conditions feed paired signed-rank tests
corrected across the full (pair, band) family.

Everything here is deterministic: identical inputs and config produce an
identical report apart from its timestamp field.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._version import __version__
from .errors import EstimationError, PipelineError
from .pdc import (
    DEFAULT_BANDS,
    FrequencyGrid,
    average_over_segments,
    band_average,
    compute_pdc,
)
from .signals import MultichannelSegment, Recording, extract_segments, screen_stationarity
from .stats import DEFAULT_ALPHA, compare_conditions, write_test_table_csv
from .var import check_stability, fit_var, select_order

__all__ = [
    "ORDER_MODE_FIXED",
    "ORDER_MODE_AUTO_AIC",
    "SCOPE_PER_PAIR",
    "SCOPE_JOINT",
    "PipelineConfig",
    "ConditionSummary",
    "AnalysisReport",
    "default_config",
    "run_pipeline",
    "report_to_dict",
    "write_report",
    "write_config_json",
    "read_config_json",
]

ORDER_MODE_FIXED = "fixed"
ORDER_MODE_AUTO_AIC = "auto_aic"
SCOPE_PER_PAIR = "per_pair"
SCOPE_JOINT = "joint"


@dataclass(frozen=True)
class PipelineConfig:
    """Analysis protocol. The defaults are the reference protocol: 900 ms
    epochs, fixed order 15, 4-30 Hz at 0.5 Hz, theta/alpha/beta1/beta2
    bands, alpha = 0.05.

    ``channel_pairs`` of None resolves at run time to every ordered pair of
    distinct recording channels (a 4-channel montage gives the standard
    12-pair, 48-hypothesis family).
    """

    sampling_rate_hz: float
    epoch_length_ms: float = 900.0
    channel_pairs: tuple | None = None
    bands: dict = field(default_factory=lambda: dict(DEFAULT_BANDS))
    freq_low_hz: float = 4.0
    freq_high_hz: float = 30.0
    freq_step_hz: float = 0.5
    order_mode: str = ORDER_MODE_FIXED
    fixed_order: int = 15
    p_scan_max: int = 20
    stationarity_n_windows: int = 3
    stationarity_mean_drift_tol: float = 0.5
    stationarity_variance_ratio_tol: float = 2.0
    alpha: float = DEFAULT_ALPHA
    amplitude_reject_threshold: float | None = None
    model_scope: str = SCOPE_PER_PAIR
    mean_center: bool = True

    def __post_init__(self):
        if not self.sampling_rate_hz > 0:
            raise ValueError(f"sampling_rate_hz must be positive, got {self.sampling_rate_hz}")
        if not self.epoch_length_ms > 0:
            raise ValueError(f"epoch_length_ms must be positive, got {self.epoch_length_ms}")
        if self.channel_pairs is not None:
            pairs = tuple((str(s), str(t)) for s, t in self.channel_pairs)
            if not pairs:
                raise ValueError("channel_pairs must be non-empty when given")
            for s, t in pairs:
                if s == t:
                    raise ValueError(f"channel pair ({s!r}, {t!r}) is not a directed pair")
            if len(set(pairs)) != len(pairs):
                raise ValueError("channel_pairs contains duplicates")
            object.__setattr__(self, "channel_pairs", pairs)
        bands = {str(name): (float(lo), float(hi)) for name, (lo, hi) in self.bands.items()}
        if not bands:
            raise ValueError("bands must be non-empty")
        for name, (lo, hi) in bands.items():
            if not 0 <= lo <= hi:
                raise ValueError(f"band {name!r} has invalid edges ({lo}, {hi})")
        object.__setattr__(self, "bands", bands)
        if not 0 <= self.freq_low_hz <= self.freq_high_hz:
            raise ValueError(
                f"invalid frequency range [{self.freq_low_hz}, {self.freq_high_hz}]"
            )
        if self.freq_high_hz > self.sampling_rate_hz / 2.0:
            raise ValueError(
                f"freq_high_hz {self.freq_high_hz} exceeds Nyquist "
                f"{self.sampling_rate_hz / 2.0}"
            )
        if self.freq_step_hz <= 0:
            raise ValueError(f"freq_step_hz must be positive, got {self.freq_step_hz}")
        if self.order_mode not in (ORDER_MODE_FIXED, ORDER_MODE_AUTO_AIC):
            raise ValueError(f"unknown order_mode {self.order_mode!r}")
        if self.fixed_order < 1:
            raise ValueError(f"fixed_order must be >= 1, got {self.fixed_order}")
        if self.p_scan_max < 1:
            raise ValueError(f"p_scan_max must be >= 1, got {self.p_scan_max}")
        if self.stationarity_n_windows < 2:
            raise ValueError(
                f"stationarity_n_windows must be >= 2, got {self.stationarity_n_windows}"
            )
        if self.stationarity_mean_drift_tol <= 0 or self.stationarity_variance_ratio_tol <= 0:
            raise ValueError("stationarity tolerances must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.amplitude_reject_threshold is not None and not self.amplitude_reject_threshold > 0:
            raise ValueError("amplitude_reject_threshold must be positive when given")
        if self.model_scope not in (SCOPE_PER_PAIR, SCOPE_JOINT):
            raise ValueError(f"unknown model_scope {self.model_scope!r}")

    def frequency_grid(self) -> FrequencyGrid:
        return FrequencyGrid.regular(self.freq_low_hz, self.freq_high_hz,
                                     self.freq_step_hz, self.sampling_rate_hz)


def default_config(sampling_rate_hz: float) -> PipelineConfig:
    """The reference protocol at a given sampling rate."""
    return PipelineConfig(sampling_rate_hz=sampling_rate_hz)


@dataclass(frozen=True)
class ConditionSummary:
    """Attrition counts and per-subject band values for one condition.

    The invariant ``segments_in = screened_out + failed_fit + used`` holds by
    construction; a segment where any configured fit fails counts once in
    failed_fit and contributes nothing.
    """

    n_subjects: int
    segments_in: int
    screened_out: int
    failed_fit: int
    used: int
    unstable_models: int
    degenerate_columns: int
    band_values: dict

    def __post_init__(self):
        if self.segments_in != self.screened_out + self.failed_fit + self.used:
            raise ValueError("attrition counts do not add up")


@dataclass(frozen=True)
class AnalysisReport:
    """Everything a run produced: config echo, per-condition band values and
    attrition, and the corrected test table over the full hypothesis family.
    """

    toolkit_version: str
    config_echo: dict
    channel_pairs: tuple
    band_names: tuple
    subjects_used: tuple
    condition_a: ConditionSummary
    condition_b: ConditionSummary
    test_results: dict
    timestamp_utc: str

    def __post_init__(self):
        expected = {(pair, band) for pair in self.channel_pairs for band in self.band_names}
        if set(self.test_results) != expected or len(self.test_results) != len(expected):
            raise ValueError("test table does not cover the (pair, band) family exactly once")


def _center(segment):
    return MultichannelSegment(
        samples=segment.samples - segment.samples.mean(axis=0),
        sampling_rate_hz=segment.sampling_rate_hz,
        channel_labels=segment.channel_labels,
        source_offset=segment.source_offset,
    )


def _fit_order(config: PipelineConfig, segment) -> int:
    if config.order_mode == ORDER_MODE_FIXED:
        return config.fixed_order
    return select_order(segment, config.p_scan_max).chosen_p


def _process_subject(config: PipelineConfig, recording: Recording, starts_ms,
                     pairs, groups, grid: FrequencyGrid):
    """One subject, one condition: returns (counts dict, band values or None).

    Band values map (pair, band) -> float; None when no segment survived, in
    which case the subject cannot contribute a paired observation.
    """
    counts = {"segments_in": 0, "screened_out": 0, "failed_fit": 0, "used": 0,
              "unstable_models": 0, "degenerate_columns": 0}
    segments = extract_segments(recording, config.epoch_length_ms, starts_ms)
    counts["segments_in"] = len(segments)

    survivors = []
    for seg in segments:
        if (config.amplitude_reject_threshold is not None
                and np.abs(seg.samples).max() > config.amplitude_reject_threshold):
            counts["screened_out"] += 1
            continue
        if config.mean_center:
            seg = _center(seg)
        report = screen_stationarity(
            seg,
            n_windows=config.stationarity_n_windows,
            mean_drift_tol=config.stationarity_mean_drift_tol,
            variance_ratio_tol=config.stationarity_variance_ratio_tol,
        )
        if not report.passed:
            counts["screened_out"] += 1
            continue
        survivors.append(seg)

    # group -> list of per-segment spectra; a segment enters either all
    # groups or none, so every group averages over the same segment set
    group_spectra = {g: [] for g in groups}
    for seg in survivors:
        try:
            fitted = {}
            unstable = 0
            for g in groups:
                sub = seg if g == "joint" else seg.select_channels(g)
                model, _ = fit_var(sub, _fit_order(config, sub))
                if not check_stability(model):
                    unstable += 1
                fitted[g] = compute_pdc(model, grid)
        except (ValueError, EstimationError):
            counts["failed_fit"] += 1
            continue
        counts["used"] += 1
        counts["unstable_models"] += unstable
        for g, spectrum in fitted.items():
            counts["degenerate_columns"] += len(spectrum.degenerate_columns)
            group_spectra[g].append(spectrum)

    if counts["used"] == 0:
        return counts, None

    band_values = {}
    for g, spectra in group_spectra.items():
        averaged = band_average(average_over_segments(spectra), config.bands)
        labels = averaged.channel_labels
        for source, target in pairs:
            if g != "joint" and (source not in labels or target not in labels):
                continue
            i = labels.index(target)
            j = labels.index(source)
            for band_name, matrix in averaged.bands.items():
                band_values[((source, target), band_name)] = float(matrix[i, j])
    return counts, band_values


def _resolve_pairs(config: PipelineConfig, labels: tuple) -> tuple:
    if config.channel_pairs is not None:
        for s, t in config.channel_pairs:
            for lab in (s, t):
                if lab not in labels:
                    raise ValueError(f"configured channel {lab!r} not in recording "
                                     f"channels {list(labels)}")
        return config.channel_pairs
    return tuple((s, t) for s in labels for t in labels if s != t)


def _fit_groups(config: PipelineConfig, pairs) -> tuple:
    if config.model_scope == SCOPE_JOINT:
        return ("joint",)
    groups = []
    for s, t in pairs:
        g = tuple(sorted((s, t)))
        if g not in groups:
            groups.append(g)
    return tuple(groups)


def _process_condition(config, subjects, pairs, groups, grid, threads, label):
    def work(item):
        index, (recording, starts) = item
        try:
            return _process_subject(config, recording, starts, pairs, groups, grid)
        except (ValueError, EstimationError) as exc:
            raise PipelineError(f"condition {label}, subject {index}: {exc}") from exc

    items = list(enumerate(subjects))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(work, items))
    else:
        outcomes = [work(item) for item in items]

    totals = {"segments_in": 0, "screened_out": 0, "failed_fit": 0, "used": 0,
              "unstable_models": 0, "degenerate_columns": 0}
    per_subject_values = []
    for counts, values in outcomes:
        for key in totals:
            totals[key] += counts[key]
        per_subject_values.append(values)
    return totals, per_subject_values


def _config_echo(config: PipelineConfig, resolved_pairs) -> dict:
    echo = _config_payload(config)
    echo["channel_pairs"] = [list(p) for p in resolved_pairs]
    return echo


def run_pipeline(config: PipelineConfig, condition_a_inputs, condition_b_inputs,
                 threads: int = 1) -> AnalysisReport:
    """Run the full two-condition analysis.

    Parameters
    ----------
    config : PipelineConfig
    condition_a_inputs, condition_b_inputs : sequence of (Recording, starts)
        One entry per subject, index-aligned between conditions (the test is
        paired); ``starts`` are epoch onsets in ms for that recording.
    threads : int
        Worker threads for per-subject processing. Output is identical for
        any thread count.

    Raises
    ------
    PipelineError
        If no subject retains a usable segment in both conditions; the
        message carries the per-stage attrition counts.
    ValueError
        On mismatched subject counts, channel sets, or sampling rates.
    """
    a_inputs = list(condition_a_inputs)
    b_inputs = list(condition_b_inputs)
    if len(a_inputs) != len(b_inputs):
        raise ValueError(
            f"paired design needs equal subject counts, got {len(a_inputs)} vs {len(b_inputs)}"
        )
    if not a_inputs:
        raise ValueError("no subjects given")
    labels = a_inputs[0][0].channel_labels
    for recording, _ in a_inputs + b_inputs:
        if recording.channel_labels != labels:
            raise ValueError("all recordings must share one channel set")
        if recording.sampling_rate_hz != config.sampling_rate_hz:
            raise ValueError(
                f"recording sampled at {recording.sampling_rate_hz} Hz but config "
                f"says {config.sampling_rate_hz} Hz"
            )

    pairs = _resolve_pairs(config, labels)
    groups = _fit_groups(config, pairs)
    grid = config.frequency_grid()
    threads = max(1, int(threads))

    totals_a, values_a = _process_condition(config, a_inputs, pairs, groups, grid,
                                            threads, "a")
    totals_b, values_b = _process_condition(config, b_inputs, pairs, groups, grid,
                                            threads, "b")

    subjects_used = tuple(i for i in range(len(a_inputs))
                          if values_a[i] is not None and values_b[i] is not None)
    if not subjects_used:
        raise PipelineError(
            "no subject kept a usable segment in both conditions; attrition "
            f"a={totals_a} b={totals_b}"
        )

    band_names = tuple(config.bands)
    keys = [(pair, band) for pair in pairs for band in band_names]
    bv_a = {k: [values_a[i][k] for i in subjects_used] for k in keys}
    bv_b = {k: [values_b[i][k] for i in subjects_used] for k in keys}
    test_results = compare_conditions(bv_a, bv_b, alpha=config.alpha)

    def summary(totals, values):
        return ConditionSummary(
            n_subjects=len(values),
            segments_in=totals["segments_in"],
            screened_out=totals["screened_out"],
            failed_fit=totals["failed_fit"],
            used=totals["used"],
            unstable_models=totals["unstable_models"],
            degenerate_columns=totals["degenerate_columns"],
            band_values={k: tuple(values[i][k] for i in subjects_used) for k in keys},
        )

    return AnalysisReport(
        toolkit_version=__version__,
        config_echo=_config_echo(config, pairs),
        channel_pairs=pairs,
        band_names=band_names,
        subjects_used=subjects_used,
        condition_a=summary(totals_a, values_a),
        condition_b=summary(totals_b, values_b),
        test_results=test_results,
        timestamp_utc=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )


def _pair_key(pair) -> str:
    return f"{pair[0]}->{pair[1]}"


def _condition_dict(summary: ConditionSummary, pairs, band_names) -> dict:
    values = {}
    for pair in pairs:
        values[_pair_key(pair)] = {
            band: list(summary.band_values[(pair, band)]) for band in band_names
        }
    return {
        "n_subjects": summary.n_subjects,
        "attrition": {
            "segments_in": summary.segments_in,
            "screened_out": summary.screened_out,
            "failed_fit": summary.failed_fit,
            "used": summary.used,
        },
        "unstable_models": summary.unstable_models,
        "degenerate_columns": summary.degenerate_columns,
        "band_values": values,
    }


def report_to_dict(report: AnalysisReport) -> dict:
    """JSON-safe view of a report (matrices row-major, NaN-free)."""
    tests = []
    for (pair, band), res in report.test_results.items():
        tests.append({
            "pair": _pair_key(pair),
            "direction": res.direction,
            "band": band,
            "n": res.n_effective,
            "W": None if res.untestable else res.statistic_w,
            "p_raw": res.p_raw,
            "p_adjusted": res.p_adjusted,
            "significant": res.significant,
            "untestable": res.untestable,
        })
    return {
        "toolkit_version": report.toolkit_version,
        "timestamp_utc": report.timestamp_utc,
        "config": report.config_echo,
        "subjects_used": list(report.subjects_used),
        "conditions": {
            "a": _condition_dict(report.condition_a, report.channel_pairs, report.band_names),
            "b": _condition_dict(report.condition_b, report.channel_pairs, report.band_names),
        },
        "tests": tests,
    }


def _write_atomic(path: str, writer) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        os.close(fd)
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: AnalysisReport, out_dir) -> dict:
    """Write report.json and test_table.csv into out_dir (atomically each).

    Returns the paths written, keyed 'report' and 'test_table'.
    """
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.json")
    table_path = os.path.join(out_dir, "test_table.csv")

    payload = report_to_dict(report)

    def dump_json(tmp):
        with open(tmp, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    _write_atomic(report_path, dump_json)
    _write_atomic(table_path, lambda tmp: write_test_table_csv(report.test_results, tmp))
    return {"report": report_path, "test_table": table_path}


def _config_payload(config: PipelineConfig) -> dict:
    return {
        "sampling_rate_hz": config.sampling_rate_hz,
        "epoch_length_ms": config.epoch_length_ms,
        "channel_pairs": None if config.channel_pairs is None
        else [list(p) for p in config.channel_pairs],
        "bands": {name: list(edges) for name, edges in config.bands.items()},
        "freq_grid": {
            "low_hz": config.freq_low_hz,
            "high_hz": config.freq_high_hz,
            "step_hz": config.freq_step_hz,
        },
        "order_mode": config.order_mode,
        "fixed_order": config.fixed_order,
        "p_scan_max": config.p_scan_max,
        "stationarity": {
            "n_windows": config.stationarity_n_windows,
            "mean_drift_tol": config.stationarity_mean_drift_tol,
            "variance_ratio_tol": config.stationarity_variance_ratio_tol,
        },
        "alpha": config.alpha,
        "amplitude_reject_threshold": config.amplitude_reject_threshold,
        "model_scope": config.model_scope,
        "mean_center": config.mean_center,
    }


def write_config_json(config: PipelineConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(_config_payload(config), fh, indent=2)
        fh.write("\n")


_CONFIG_KEYS = {
    "sampling_rate_hz", "epoch_length_ms", "channel_pairs", "bands", "freq_grid",
    "order_mode", "fixed_order", "p_scan_max", "stationarity", "alpha",
    "amplitude_reject_threshold", "model_scope", "mean_center",
}


def read_config_json(path) -> PipelineConfig:
    """Load a config; missing optional keys take the protocol defaults.

    Unknown keys are rejected so typos cannot silently change a run.
    """
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = set(payload) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    if "sampling_rate_hz" not in payload:
        raise ValueError(f"{path}: sampling_rate_hz is required")

    kwargs = {"sampling_rate_hz": float(payload["sampling_rate_hz"])}
    if "epoch_length_ms" in payload:
        kwargs["epoch_length_ms"] = float(payload["epoch_length_ms"])
    if payload.get("channel_pairs") is not None:
        kwargs["channel_pairs"] = tuple((s, t) for s, t in payload["channel_pairs"])
    if "bands" in payload:
        kwargs["bands"] = {name: (lo, hi) for name, (lo, hi) in payload["bands"].items()}
    if "freq_grid" in payload:
        grid = payload["freq_grid"]
        kwargs["freq_low_hz"] = float(grid["low_hz"])
        kwargs["freq_high_hz"] = float(grid["high_hz"])
        kwargs["freq_step_hz"] = float(grid["step_hz"])
    if "order_mode" in payload:
        kwargs["order_mode"] = payload["order_mode"]
    if "fixed_order" in payload:
        kwargs["fixed_order"] = int(payload["fixed_order"])
    if "p_scan_max" in payload:
        kwargs["p_scan_max"] = int(payload["p_scan_max"])
    if "stationarity" in payload:
        st = payload["stationarity"]
        kwargs["stationarity_n_windows"] = int(st["n_windows"])
        kwargs["stationarity_mean_drift_tol"] = float(st["mean_drift_tol"])
        kwargs["stationarity_variance_ratio_tol"] = float(st["variance_ratio_tol"])
    if "alpha" in payload:
        kwargs["alpha"] = float(payload["alpha"])
    if payload.get("amplitude_reject_threshold") is not None:
        kwargs["amplitude_reject_threshold"] = float(payload["amplitude_reject_threshold"])
    if "model_scope" in payload:
        kwargs["model_scope"] = payload["model_scope"]
    if "mean_center" in payload:
        kwargs["mean_center"] = bool(payload["mean_center"])
    return PipelineConfig(**kwargs)
