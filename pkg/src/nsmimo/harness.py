"""Monte Carlo experiments: configuration, paired sweeps, result files and datasets.

A run visits every (trial, SNR, scheme) cell.  The scenario of a trial is
shared by all schemes and all SNR points, and the noise of an SNR point is
shared by all schemes, so scheme differences are paired.  Results go to
``results.csv`` (sorted, byte-reproducible for a fixed config), ``summary.json``
(per-cell means with bootstrap intervals) and ``timings.json``; per-trial
diagnostics are written on request.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .baselines import NompConfig, alternative_scheme, linear_scheme, nomp_scheme
from .detection import DetectorConfig, import_detections
from .image import ImageConfig, export_png, make_labels, spectral_image, write_labels
from .metrics import ReconstructionReport, UndefinedMetricError
from .model import ConfigurationError, SystemConfig, sample_scenario, uplink_pilot_observation
from .pipeline import SchemeSettings, proposed_scheme
from .refinement import RefinerConfig

log = logging.getLogger(__name__)

SCHEMES = ("proposed", "alternative", "nomp", "ls", "lmmse")
IDENTIFIERS = ("box", "power")
CSV_COLUMNS = (
    "scheme", "snr_db", "trial", "nmse_ul_db", "nmse_dl_db", "se_bps_hz",
    "l_hat", "dl_symbols", "feedback_count", "failed",
)
BOOTSTRAP_RESAMPLES = 1000

# errors a single trial may raise without aborting the sweep
TRIAL_ERRORS = (ValueError, np.linalg.LinAlgError, UndefinedMetricError, FloatingPointError)


@dataclass
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    image: ImageConfig = field(default_factory=ImageConfig)
    refiner: RefinerConfig = field(default_factory=RefinerConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    nomp: NompConfig = field(default_factory=NompConfig)
    identifier: str = "power"
    delta: float = 0.2
    schemes: list[str] = field(default_factory=lambda: ["proposed"])
    snr_grid: list[float] = field(default_factory=lambda: [10.0])
    trials: int = 10
    seed: int = 0
    L_range: tuple[int, int] = (1, 10)
    out_dir: str = "results"
    detections: str | None = None
    diagnostics: bool = False
    dataset_snr_range: tuple[float, float] = (0.0, 10.0)

    def __post_init__(self):
        self.schemes = list(self.schemes)
        self.snr_grid = [float(s) for s in self.snr_grid]
        self.L_range = tuple(int(v) for v in self.L_range)
        self.dataset_snr_range = tuple(float(v) for v in self.dataset_snr_range)
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        if not self.snr_grid:
            raise ConfigurationError("snr_grid must not be empty")
        if not self.schemes:
            raise ConfigurationError("at least one scheme is required")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            raise ConfigurationError(f"unknown scheme(s) {unknown}; choose from {SCHEMES}")
        if self.identifier not in IDENTIFIERS:
            raise ConfigurationError(f"identifier must be one of {IDENTIFIERS}")
        if not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        if len(self.L_range) != 2 or not 1 <= self.L_range[0] <= self.L_range[1]:
            raise ConfigurationError(f"invalid L_range {self.L_range}")

    @property
    def settings(self) -> SchemeSettings:
        return SchemeSettings(self.image, self.refiner, self.detector, self.identifier, self.delta)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["L_range"] = list(self.L_range)
        d["dataset_snr_range"] = list(self.dataset_snr_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        nested = {"system": SystemConfig, "image": ImageConfig, "refiner": RefinerConfig,
                  "detector": DetectorConfig, "nomp": NompConfig}
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown config keys {sorted(extra)}")
        kwargs = {}
        for k, v in d.items():
            if k in nested:
                try:
                    kwargs[k] = nested[k](**v)
                except TypeError as exc:
                    raise ConfigurationError(f"bad '{k}' section: {exc}") from exc
            else:
                kwargs[k] = v
        return cls(**kwargs)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def trial_seed(seed: int, trial: int) -> int:
    """Scenario seed of ``trial``; independent of which schemes or SNRs are run."""
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def run_scheme(name: str, scenario, snr_db: float, cfg: ExperimentConfig, draw: int, trial: int,
               detections=None) -> ReconstructionReport:
    if name == "proposed":
        return proposed_scheme(scenario, snr_db, cfg.settings, draw, trial, detections)
    if name == "alternative":
        return alternative_scheme(scenario, snr_db, cfg.settings, draw, trial)
    if name == "nomp":
        return nomp_scheme(scenario, snr_db, cfg.nomp, draw, trial)
    if name in ("ls", "lmmse"):
        return linear_scheme(name, scenario, snr_db, draw, trial)
    raise ConfigurationError(f"unknown scheme {name!r}")


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> list[ReconstructionReport]:
    """Run the full sweep; failed trials are recorded and the sweep continues."""
    detections = import_detections(cfg.detections) if cfg.detections else None
    reports = []
    for trial in range(cfg.trials):
        scenario = sample_scenario(cfg.system, cfg.L_range, trial_seed(cfg.seed, trial))
        for draw, snr in enumerate(cfg.snr_grid):
            for name in cfg.schemes:
                t0 = time.perf_counter()
                try:
                    rep = run_scheme(name, scenario, snr, cfg, draw, trial, detections)
                except TRIAL_ERRORS as exc:
                    log.warning("trial %d, %s at %g dB failed: %s", trial, name, snr, exc)
                    rep = ReconstructionReport(name, snr, trial, failed=True, error=f"{type(exc).__name__}: {exc}",
                                               true_L=scenario.L)
                rep.timings["total"] = time.perf_counter() - t0
                reports.append(rep)
    reports.sort(key=_report_key)
    if write:
        write_outputs(reports, cfg)
    return reports


def _report_key(r):
    return (SCHEMES.index(r.scheme), r.snr_db, r.trial)


def write_outputs(reports, cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [r.csv_row() for r in reports]
    write_csv(rows, out / "results.csv")
    summary = summarize(rows, seed=cfg.seed)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    (out / "timings.json").write_text(json.dumps(timing_summary(reports), indent=2) + "\n")
    cfg.save(out / "config.json")
    if cfg.diagnostics:
        diag = [_jsonable(r.to_dict()) for r in reports]
        (out / "diagnostics.json").write_text(json.dumps(diag, indent=1) + "\n")
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.6f}"


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow([row["scheme"]] + [_fmt(row[c]) for c in CSV_COLUMNS[1:]])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = set(CSV_COLUMNS) - set(rows[0] if rows else CSV_COLUMNS)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    out = []
    for r in rows:
        out.append({
            "scheme": r["scheme"],
            "snr_db": float(r["snr_db"]),
            "trial": int(r["trial"]),
            "nmse_ul_db": float(r["nmse_ul_db"]),
            "nmse_dl_db": float(r["nmse_dl_db"]),
            "se_bps_hz": float(r["se_bps_hz"]),
            "l_hat": int(r["l_hat"]),
            "dl_symbols": int(r["dl_symbols"]),
            "feedback_count": int(r["feedback_count"]),
            "failed": int(r["failed"]),
        })
    return out


def bootstrap_ci(values, seed: int = 0, level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval of the mean."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return (float("nan"), float("nan"))
    if x.size == 1 or np.ptp(x) == 0:
        return (float(x[0]), float(x[0]))
    res = stats.bootstrap((x,), np.mean, n_resamples=BOOTSTRAP_RESAMPLES, confidence_level=level,
                          method="percentile", random_state=np.random.default_rng(seed))
    return (float(res.confidence_interval.low), float(res.confidence_interval.high))


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else float("-inf")


def summarize(rows, seed: int = 0) -> dict:
    """Per (scheme, SNR) aggregates over the successful trials.

    NMSE means are taken on the linear scale and reported in dB, the way
    averaged NMSE curves are usually drawn; their intervals are the dB images
    of the linear-scale bootstrap interval.
    """
    cells: dict[tuple[str, float], list[dict]] = {}
    for r in rows:
        cells.setdefault((r["scheme"], float(r["snr_db"])), []).append(r)
    out = []
    for (scheme, snr) in sorted(cells, key=lambda k: (SCHEMES.index(k[0]) if k[0] in SCHEMES else 99, k[1])):
        group = cells[(scheme, snr)]
        ok = [r for r in group if not int(r["failed"])]
        entry = {"scheme": scheme, "snr_db": snr, "trials": len(group), "failed": len(group) - len(ok)}
        for key in ("nmse_ul_db", "nmse_dl_db"):
            lin = [10.0 ** (r[key] / 10.0) for r in ok if not math.isnan(r[key])]
            if lin:
                lo, hi = bootstrap_ci(lin, seed)
                entry[key] = _db(float(np.mean(lin)))
                entry[key + "_ci"] = [_db(lo), _db(hi)]
                entry[key + "_mean_of_db"] = float(np.mean([r[key] for r in ok if not math.isnan(r[key])]))
            else:
                entry[key] = None
        se = [r["se_bps_hz"] for r in ok if not math.isnan(r["se_bps_hz"])]
        if se:
            entry["se_bps_hz"] = float(np.mean(se))
            entry["se_bps_hz_ci"] = list(bootstrap_ci(se, seed))
        for key in ("l_hat", "dl_symbols", "feedback_count"):
            vals = [r[key] for r in ok]
            entry["mean_" + key] = float(np.mean(vals)) if vals else None
            entry["total_" + key] = int(np.sum(vals)) if vals else 0
        out.append(entry)
    return {"cells": out}


def timing_summary(reports) -> dict:
    """Mean wall time per stage for each scheme (not part of the reproducible outputs)."""
    acc: dict[str, dict[str, list[float]]] = {}
    for r in reports:
        if r.failed:
            continue
        for stage, t in r.timings.items():
            acc.setdefault(r.scheme, {}).setdefault(stage, []).append(t)
    return {s: {k: float(np.mean(v)) for k, v in sorted(st.items())} for s, st in sorted(acc.items())}


def evaluate(results_csv, out_path=None, seed: int = 0) -> dict:
    """Recompute the summary from a saved ``results.csv``."""
    summary = summarize(read_csv(results_csv), seed=seed)
    if out_path is not None:
        Path(out_path).write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def generate_dataset(cfg: ExperimentConfig, count: int, out_dir) -> list[str]:
    """Write ``count`` images with YOLO-style labels.

    Scenario ``i`` uses seed ``trial_seed(cfg.seed, i)``; its SNR is uniform
    over ``cfg.dataset_snr_range``.  A ``manifest.jsonl`` records the seed and
    SNR of every sample so each image can be regenerated.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    lo, hi = cfg.dataset_snr_range
    ids = []
    with open(out / "manifest.jsonl", "w") as manifest:
        for i in range(count):
            seed = trial_seed(cfg.seed, i)
            scenario = sample_scenario(cfg.system, cfg.L_range, seed)
            snr = float(np.random.default_rng(seed).uniform(lo, hi)) if hi > lo else lo
            Y = uplink_pilot_observation(scenario, snr)
            img = spectral_image(Y, cfg.system.S, cfg.image)
            sid = f"{i:05d}"
            export_png(img, out / "images" / f"{sid}.png")
            write_labels(make_labels(scenario, cfg.image), out / "labels" / f"{sid}.txt")
            manifest.write(json.dumps({"id": sid, "seed": seed, "snr_db": snr, "L": scenario.L}) + "\n")
            ids.append(sid)
    return ids


def override(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy of ``cfg`` with the non-None ``changes`` applied (re-validated)."""
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj
