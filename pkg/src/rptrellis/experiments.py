"""Configuration-driven experiment runs behind the command line.

Every run is a pure function of its ``ExperimentConfig``: all seeds are
explicit, no timing or host information is written, JSON keys are sorted
and CSV floats are written with ``repr`` so identical configs give
byte-identical files.
"""

from __future__ import annotations

import csv
import enum
import functools
import itertools
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import _kernels
from .codec import (
    DEFAULT_MEMORY_BUDGET,
    IDENTITY_SEED,
    MemoryBudgetError,
    build_decoder,
    simulate,
    viterbi_encode,
    write_bits,
)
from .diagnostics import (
    DiagnosticsReport,
    covariance_sequence,
    marton_bound,
    plug_in_entropy_rate,
    scatter_pairs,
    symbols_to_bits,
    whiteness_band,
)
from .ratedist import (
    Kind,
    ReproductionDistribution,
    blahut_at_rate,
    discretize_source,
    find_shannon_reproduction,
    gaussian_distortion_rate,
)
from .sources import Family, SourceModel, sample

__all__ = [
    "Mode",
    "ExperimentConfig",
    "ConfigError",
    "PROFILES",
    "reproduction_for",
    "run_rd",
    "run_design",
    "run_encode",
    "run_simulate",
    "run_diagnose",
    "run_permutation_sweep",
    "run_performance_curve",
]


class ConfigError(ValueError):
    pass


class Mode(str, enum.Enum):
    ENCODE = "encode"
    SIMULATE = "simulate"
    RATE_DISTORTION = "rd"
    DIAGNOSE = "diagnose"
    PERMUTATION_SWEEP = "sweep-perm"


PROFILES = {
    "ci": {"n": 100_000, "permutation_seeds": [1], "max_L": 12},
    "full": {"n": 1_000_000, "permutation_seeds": [1, 2, 3], "max_L": 16},
}


@dataclass
class ExperimentConfig:
    source: SourceModel = field(default_factory=SourceModel.gaussian)
    rate: int = 1
    rates: list = field(default_factory=list)
    lengths: list = field(default_factory=lambda: [8, 10, 12])
    n: int = 100_000
    source_seed: int = 1
    permutation_seeds: list = field(default_factory=lambda: [1])
    simulation_seed: int = 1
    mode: Mode = Mode.ENCODE
    output_dir: str = "out"
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    max_L: int = 16
    max_lag: int = 10
    word_length: int | None = None
    grid_points: int = 2000
    prune_threshold: float = 1e-6
    span: float | None = None
    reproduction: ReproductionDistribution | None = None
    include_identity: bool = True
    scatter_points: int = 5000
    write_bits: bool = False

    def __post_init__(self):
        if isinstance(self.source, dict):
            self.source = SourceModel.from_dict(self.source)
        if isinstance(self.reproduction, dict):
            self.reproduction = ReproductionDistribution.from_dict(self.reproduction)
        self.mode = Mode(self.mode)
        self.lengths = [int(v) for v in self.lengths]
        self.rates = [int(v) for v in self.rates] or [int(self.rate)]
        self.permutation_seeds = [int(v) for v in self.permutation_seeds]
        self.validate()

    def validate(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        for r in self.rates + [self.rate]:
            if r not in (1, 2, 3, 4):
                raise ConfigError(f"rate must be in 1..4, got {r}")
        for L in self.lengths:
            if L <= self.rate:
                raise ConfigError(f"every L must exceed the rate (L={L}, R={self.rate})")
        if not self.permutation_seeds:
            raise ConfigError("at least one permutation seed is required")

    @classmethod
    def from_dict(cls, d: dict, profile: str | None = None) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = dict(PROFILES[profile]) if profile else {}
        merged.update(d)
        try:
            return cls(**merged)
        except ConfigError:
            raise
        except (TypeError, KeyError, ValueError) as err:
            raise ConfigError(str(err)) from err

    @classmethod
    def load(cls, path: str, profile: str | None = None) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        return cls.from_dict(d, profile)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source"] = self.source.to_dict()
        d["mode"] = self.mode.value
        d["reproduction"] = None if self.reproduction is None else self.reproduction.to_dict()
        return d


# --- helpers ---------------------------------------------------------------

def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h, "")) for h in header])


def _clean(d):
    """NaN -> None so JSON stays strict."""
    if isinstance(d, dict):
        return {k: _clean(v) for k, v in d.items()}
    if isinstance(d, list):
        return [_clean(v) for v in d]
    if isinstance(d, float) and not math.isfinite(d):
        return None
    return d


def _outdir(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


@functools.lru_cache(maxsize=32)
def _designed(model: SourceModel, rate: int, grid_points: int, prune_threshold: float, span):
    return find_shannon_reproduction(model, rate, grid_points, prune_threshold, span)


def reproduction_for(cfg: ExperimentConfig, rate: int | None = None) -> ReproductionDistribution:
    """The configured reproduction law, or the Shannon-optimal one for the source."""
    if cfg.reproduction is not None:
        return cfg.reproduction
    rate = cfg.rate if rate is None else rate
    return _designed(cfg.source, rate, cfg.grid_points, cfg.prune_threshold, cfg.span).reproduction


def _distortion_rate(cfg: ExperimentConfig, rate: int) -> float:
    return _dx(cfg.source, rate, cfg.grid_points, cfg.span)


@functools.lru_cache(maxsize=32)
def _dx(model, rate, grid_points, span):
    if model.family is Family.GAUSSIAN:
        return gaussian_distortion_rate(model.variance, rate).distortion
    pts, w = discretize_source(model, grid_points, span)
    return blahut_at_rate(pts, w, rate).distortion


# --- runs --------------------------------------------------------------------

def run_rd(cfg: ExperimentConfig, emit_reproduction: bool = False) -> list[dict]:
    """D_X(R) for every configured rate, from Blahut-Arimoto (analytic for Gaussian)."""
    out = _outdir(cfg)
    rows = []
    model = cfg.source
    for r in cfg.rates:
        if model.family is Family.GAUSSIAN:
            pt = gaussian_distortion_rate(model.variance, r)
            row = {"family": model.family.value, "rate": r, "achieved_rate": pt.rate,
                   "distortion": pt.distortion, "beta": pt.beta, "method": "analytic"}
        else:
            pts, w = discretize_source(model, cfg.grid_points, cfg.span)
            ba = blahut_at_rate(pts, w, r)
            row = {"family": model.family.value, "rate": r, "achieved_rate": ba.rate,
                   "distortion": ba.distortion, "beta": ba.beta, "method": "blahut",
                   "gap": ba.gap, "grid_points": cfg.grid_points}
        if emit_reproduction:
            repro = reproduction_for(replace(cfg, reproduction=None), r)
            name = f"reproduction_{model.family.value}_R{r}.json"
            _dump_json(os.path.join(out, name), repro.to_dict())
            row["reproduction_file"] = name
        rows.append(row)
    header = ["family", "rate", "achieved_rate", "distortion", "beta", "method", "gap", "grid_points",
              "reproduction_file"]
    _write_csv(os.path.join(out, "rd.csv"), header, rows)
    return rows


def run_design(cfg: ExperimentConfig) -> dict:
    """Shannon-optimal reproduction plus the decoder header for the first L and seed."""
    out = _outdir(cfg)
    repro = reproduction_for(cfg)
    _dump_json(os.path.join(out, "reproduction.json"), repro.to_dict())
    dec = build_decoder(repro, cfg.lengths[0], cfg.rate, cfg.permutation_seeds[0], cfg.memory_budget)
    _dump_json(os.path.join(out, "decoder.json"), dec.to_dict())
    return {"reproduction": repro.to_dict(), "decoder": dec.to_dict()}


def _encode_row(cfg, x, repro, L, seed, full_report=False):
    row = {"family": cfg.source.family.value, "rate": cfg.rate, "L": L, "permutation_seed": seed,
           "n": cfg.n, "source_seed": cfg.source_seed}
    try:
        dec = build_decoder(repro, L, cfg.rate, seed, cfg.memory_budget)
        res = viterbi_encode(dec, x, cfg.source.variance, cfg.memory_budget,
                             scratch_dir=cfg.output_dir)
    except MemoryBudgetError as err:
        row["status"] = f"skipped: {err}"
        return row, None, None
    bits = symbols_to_bits(res.bits, cfg.rate)
    h, wl = plug_in_entropy_rate(bits, cfg.word_length) if bits.size >= 200 else (math.nan, 0)
    row.update({"mse": res.mse, "snr_db": res.snr_db, "entropy_rate_estimate": h * cfg.rate,
                "word_length": wl, "marton_bound": marton_bound(cfg.rate, h * cfg.rate) if wl else math.nan,
                "status": "ok"})
    report = None
    if full_report:
        report = DiagnosticsReport.build(
            res.reproduction, x=x, d_target=_distortion_rate(cfg, cfg.rate), symbols=res.bits, R=cfg.rate,
            target=repro, max_lag=cfg.max_lag, source_mean=cfg.source.mean,
            source_variance=cfg.source.variance, word_length=cfg.word_length)
    if cfg.write_bits:
        write_bits(os.path.join(cfg.output_dir, f"bits_L{L}_s{seed}.bin"), res.bits, cfg.rate)
    return row, res, report


_ENCODE_HEADER = ["family", "rate", "L", "permutation_seed", "n", "source_seed", "mse", "snr_db",
                  "entropy_rate_estimate", "word_length", "marton_bound", "status"]


def _lengths(cfg):
    return [L for L in cfg.lengths if L <= cfg.max_L], [L for L in cfg.lengths if L > cfg.max_L]


def run_encode(cfg: ExperimentConfig, full_report: bool = False) -> dict:
    """Viterbi-encode one source sample with every (L, permutation seed) pair."""
    out = _outdir(cfg)
    x = sample(cfg.source, cfg.n, cfg.source_seed)
    repro = reproduction_for(cfg)
    run_L, skip_L = _lengths(cfg)
    rows, reports = [], []
    for L in cfg.lengths:
        for seed in cfg.permutation_seeds:
            if L in skip_L:
                rows.append({"family": cfg.source.family.value, "rate": cfg.rate, "L": L,
                             "permutation_seed": seed, "n": cfg.n, "source_seed": cfg.source_seed,
                             "status": f"skipped: L > max_L={cfg.max_L}"})
                continue
            row, _, rep = _encode_row(cfg, x, repro, L, seed, full_report)
            rows.append(row)
            if rep is not None:
                reports.append({"L": L, "permutation_seed": seed, "report": rep.to_dict()})
    _write_csv(os.path.join(out, "results.csv"), _ENCODE_HEADER, rows)
    summary = _summarize(rows)
    _write_csv(os.path.join(out, "summary.csv"), ["L", "seeds", "mean_mse", "min_mse", "max_mse"], summary)
    dx = _distortion_rate(cfg, cfg.rate)
    result = {"config": cfg.to_dict(), "distortion_rate": dx, "rows": rows, "summary": summary,
              "all_above_distortion_rate": all(r["mse"] >= dx for r in rows if r.get("status") == "ok")}
    if full_report:
        result["diagnostics"] = reports
    _dump_json(os.path.join(out, "report.json"), _clean(result))
    return result


def _summarize(rows):
    out = []
    for L, grp in itertools.groupby([r for r in rows if r.get("status") == "ok"], key=lambda r: r["L"]):
        m = [r["mse"] for r in grp]
        out.append({"L": L, "seeds": len(m), "mean_mse": math.fsum(m) / len(m), "min_mse": min(m),
                    "max_mse": max(m)})
    return out


def run_diagnose(cfg: ExperimentConfig) -> dict:
    """Encode, then the full set of optimality diagnostics for every row."""
    return run_encode(cfg, full_report=True)


def run_simulate(cfg: ExperimentConfig) -> dict:
    """Drive decoders with coin flips and check whiteness and marginal convergence.

    Uses the first permutation seed, plus the identity permutation when
    ``include_identity`` is set.
    """
    out = _outdir(cfg)
    repro = reproduction_for(cfg)
    run_L, _ = _lengths(cfg)
    seeds = [cfg.permutation_seeds[0]] + ([IDENTITY_SEED] if cfg.include_identity else [])
    rows, reports, scatter = [], [], []
    for L in run_L:
        for seed in seeds:
            variant = "identity" if seed == IDENTITY_SEED else "random"
            dec = build_decoder(repro, L, cfg.rate, seed, cfg.memory_budget)
            y = simulate(dec, cfg.n, cfg.simulation_seed)
            rep = DiagnosticsReport.build(y, target=repro, max_lag=min(cfg.max_lag, max(1, (cfg.n - 1) // 10)))
            row = {"L": L, "permutation_seed": seed, "variant": variant, "n": cfg.n,
                   "mean": rep.mean_hat, "variance": rep.var_hat, "marginal_t2": rep.marginal_t2}
            if rep.covariance_seq:
                ks = np.array([v for _, v in rep.covariance_seq])
                row.update({"k1": float(ks[0]), "max_abs_k": float(np.abs(ks).max()),
                            "band": rep.whiteness_band,
                            "white": bool(np.all(np.abs(ks) <= rep.whiteness_band)),
                            "lag1_corr": float(np.corrcoef(y[:-1], y[1:])[0, 1])})
            if repro.kind is Kind.DISCRETE:
                sup = np.asarray(repro.support)
                idx = np.clip(np.searchsorted(sup, y), 0, sup.size - 1)
                freq = np.bincount(idx, minlength=sup.size) / y.size
                row["max_freq_error"] = float(np.abs(freq - np.asarray(repro.pmf)).max())
            rows.append(row)
            reports.append({"L": L, "permutation_seed": seed, "variant": variant, "report": rep.to_dict()})
            pairs = scatter_pairs(y[: cfg.scatter_points + 1])
            scatter.extend({"variant": variant, "L": L, "x0": a, "x1": b} for a, b in pairs)
    header = ["L", "permutation_seed", "variant", "n", "mean", "variance", "marginal_t2", "k1", "max_abs_k",
              "band", "white", "lag1_corr", "max_freq_error"]
    _write_csv(os.path.join(out, "results.csv"), header, rows)
    _write_csv(os.path.join(out, "scatter.csv"), ["variant", "L", "x0", "x1"], scatter)
    result = {"config": cfg.to_dict(), "rows": rows, "diagnostics": reports}
    _dump_json(os.path.join(out, "report.json"), _clean(result))
    return result


def all_permutations(L: int) -> np.ndarray:
    size = 1 << L
    return np.array(list(itertools.permutations(range(size))), dtype=np.int64)


def run_permutation_sweep(cfg: ExperimentConfig) -> dict:
    """Encode one sample with every permutation of the L=3 register space."""
    L = cfg.lengths[0]
    if len(cfg.lengths) != 1 or L != 3:
        raise ConfigError("the permutation sweep is only defined for lengths == [3]")
    out = _outdir(cfg)
    repro = reproduction_for(cfg)
    base = build_decoder(repro, L, cfg.rate, IDENTITY_SEED)
    values = np.ascontiguousarray(base.labels)  # labels in register order under the identity
    perms = all_permutations(L)
    x = sample(cfg.source, cfg.n, cfg.source_seed)
    mse = _kernels.sweep_permutations(x, values, perms, L, cfg.rate) / cfg.n
    best = int(np.argmin(mse))
    result = {
        "L": L, "rate": cfg.rate, "n": cfg.n, "source_seed": cfg.source_seed,
        "num_permutations": int(perms.shape[0]),
        "best_mse": float(mse[best]), "mean_mse": math.fsum(mse) / mse.size,
        "worst_mse": float(mse.max()),
        "best_index": best, "best_permutation": perms[best].tolist(),
        "best_snr_db": 10.0 * math.log10(cfg.source.variance / float(mse[best])),
        "mean_snr_db": 10.0 * math.log10(cfg.source.variance / (math.fsum(mse) / mse.size)),
    }
    _write_csv(os.path.join(out, "results.csv"), list(result), [result])
    with open(os.path.join(out, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "permutation", "mse"])
        for i in range(perms.shape[0]):
            w.writerow([i, " ".join(map(str, perms[i])), repr(float(mse[i]))])
    _dump_json(os.path.join(out, "report.json"), {"config": cfg.to_dict(), **result})
    return result


def run_performance_curve(cfg: ExperimentConfig) -> dict:
    """Mean MSE over the permutation seeds for each L, and whether it falls with L."""
    res = run_encode(cfg)
    summary = res["summary"]
    means = [s["mean_mse"] for s in summary]
    monotone = all(b <= a for a, b in zip(means, means[1:])) if len(means) > 1 else None
    _write_csv(os.path.join(cfg.output_dir, "curve.csv"), ["L", "seeds", "mean_mse", "min_mse", "max_mse"],
               summary)
    res["monotone_nonincreasing"] = monotone
    _dump_json(os.path.join(cfg.output_dir, "report.json"), _clean(res))
    return res
