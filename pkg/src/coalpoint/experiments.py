"""Replicated simulations checked against the analytic predictions.

Every replicate draws from its own stream, derived from the master seed and
the replicate's coordinates, and results are merged in replicate order. A
report is therefore a pure function of its configuration, whatever the
number of worker processes.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import analytics
from .genealogy import open_uniform, simulate, subtending_measures
from .mutation import (
    allele_spectrum,
    brute_force_check,
    haplotype_keys,
    overlay,
    segregating_sites,
    site_spectrum,
    theta_scan,
)
from .scale_model import BirthDeath, CriticalBD, ScaleModel, Stable, Yule, format_model, parse_model

__all__ = [
    "KINDS",
    "ExperimentConfig",
    "ReportRow",
    "SummaryReport",
    "ConfigError",
    "derive_seed",
    "derive_substream",
    "run_experiment",
    "run_spectrum_experiment",
    "run_clt_experiment",
    "run_allele_experiment",
    "run_wtheta_experiment",
    "run_stable_experiment",
    "run_brownian_experiment",
    "run_census_equivalence",
    "run_oracle_check",
    "ks_statistic_with_atom",
]

KINDS = ("spectrum", "clt", "allele", "wtheta", "stable", "brownian", "census-equivalence", "oracle")

# Asymptotic 1% critical value of the one-sample Kolmogorov-Smirnov statistic.
KS_CRITICAL_1PCT = 1.63


class ConfigError(ValueError):
    """The configuration cannot be run as given."""


# -- seeding ----------------------------------------------------------------------

def derive_seed(master: int, index: int, *path: int) -> np.random.SeedSequence:
    """Seed of replicate ``index`` (optionally within blocks ``path``).

    The replicate coordinates become the ``spawn_key`` of a numpy
    ``SeedSequence`` on the master seed. That hash-based splitting is
    documented and stable across platforms, and distinct keys give distinct,
    independent streams.
    """
    if master < 0 or index < 0 or any(p < 0 for p in path):
        raise ValueError("seeds and indices must be nonnegative")
    return np.random.SeedSequence(int(master), spawn_key=tuple(int(p) for p in path) + (int(index),))


def derive_substream(master: int, index: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(derive_seed(master, index, *path)))


# -- configuration and reports ------------------------------------------------------

def _tuple(values, cast):
    if values is None:
        return ()
    if isinstance(values, (int, float, str)):
        values = [values]
    return tuple(cast(v) for v in values)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    model: str = "yule:a=1.0"
    theta: float = 1.0
    n: Tuple[int, ...] = (1000,)
    reps: int = 100
    k_max: int = 5
    lambdas: Tuple[float, ...] = (1.0,)
    # spectrum: "limit", "exact" or "auto" (exact when E H < inf)
    target: str = "auto"
    z_max: float = 4.0
    # absolute tolerance at the largest n (allele, stable, brownian)
    tolerance: Optional[float] = None
    census_p: float = 0.5
    compare_model: Optional[str] = None
    draws: int = 10**5
    pooled: int = 10**4
    instances: int = 1000
    max_mutations: int = 200_000
    workers: int = 1
    repro_path: Optional[str] = None

    def __post_init__(self):
        set_ = partial(object.__setattr__, self)
        set_("n", _tuple(self.n, int))
        set_("lambdas", _tuple(self.lambdas, float))
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        if self.seed is None or isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)):
            raise ConfigError("an explicit integer master seed is required")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.reps < 1:
            raise ConfigError("need at least one replicate")
        if not self.n or any(v < 2 for v in self.n):
            raise ConfigError("every sample size must be at least 2")
        if not (math.isfinite(self.theta) and self.theta >= 0):
            raise ConfigError("theta must be finite and nonnegative")
        if self.k_max < 1:
            raise ConfigError("k_max must be at least 1")
        if self.target not in ("auto", "limit", "exact"):
            raise ConfigError("target must be auto, limit or exact")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        try:
            self.parsed_model()
            if self.compare_model is not None:
                parse_model(self.compare_model)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def parsed_model(self) -> ScaleModel:
        return parse_model(self.model)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["n"] = list(self.n)
        out["lambdas"] = list(self.lambdas)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
        return cls(**data)


_ROW_TYPES = {
    "check": str,
    "n": int,
    "k": int,
    "lam": float,
    "formula_id": str,
    "mc_mean": float,
    "mc_stderr": float,
    "analytic": float,
    "z": float,
    "statistic": float,
    "threshold": float,
    "passed": bool,
    "note": str,
}


@dataclass(frozen=True)
class ReportRow:
    """One comparison. Fields that do not apply are ``None``.

    ``passed`` is ``None`` for diagnostic rows that carry no assertion.
    """

    check: str
    formula_id: str = ""
    n: Optional[int] = None
    k: Optional[int] = None
    lam: Optional[float] = None
    mc_mean: Optional[float] = None
    mc_stderr: Optional[float] = None
    analytic: Optional[float] = None
    z: Optional[float] = None
    statistic: Optional[float] = None
    threshold: Optional[float] = None
    passed: Optional[bool] = None
    note: str = ""

    def __post_init__(self):
        # plain Python scalars keep the CSV and JSON forms exact
        for name, kind in _ROW_TYPES.items():
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, kind(value))

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in _ROW_TYPES}


def _z(mean, stderr, analytic):
    if stderr is None or not stderr > 0 or not (math.isfinite(mean) and math.isfinite(analytic)):
        return None
    return (mean - analytic) / stderr


def _mean_row(check, values, analytic, formula_id, z_max, **extra):
    """Row comparing the replicate mean of ``values`` with ``analytic``."""
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if values.size < 2:
        return ReportRow(check, formula_id, mc_mean=mean, analytic=analytic,
                         note="insufficient replicates", **extra)
    stderr = float(values.std(ddof=1) / math.sqrt(values.size))
    z = _z(mean, stderr, analytic)
    if z is None:
        passed = bool(stderr == 0 and mean == analytic) if z_max is not None else None
    else:
        passed = bool(abs(z) <= z_max) if z_max is not None else None
    return ReportRow(check, formula_id, mc_mean=mean, mc_stderr=stderr, analytic=analytic,
                     z=z, threshold=z_max, passed=passed, **extra)


@dataclass(frozen=True)
class SummaryReport:
    kind: str
    config: ExperimentConfig
    rows: Tuple[ReportRow, ...]
    runtime_seconds: float
    seed: int
    status: str = "ok"
    notes: str = ""

    @property
    def failures(self) -> List[ReportRow]:
        return [r for r in self.rows if r.passed is False]

    @property
    def passed(self) -> bool:
        return self.status == "ok" and not self.failures

    @property
    def exit_code(self) -> int:
        if self.status != "ok":
            return 2
        return 1 if self.failures else 0

    def row(self, check: str, **where) -> ReportRow:
        hits = [r for r in self.rows if r.check == check and all(getattr(r, k) == v for k, v in where.items())]
        if len(hits) != 1:
            raise KeyError(f"expected one row {check!r} {where}, found {len(hits)}")
        return hits[0]

    # -- serialization ---------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "rows": [r.to_dict() for r in self.rows],
            "runtime_seconds": self.runtime_seconds,
            "seed": self.seed,
            "status": self.status,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "SummaryReport":
        return cls(
            kind=data["kind"],
            config=ExperimentConfig.from_dict(data["config"]),
            rows=tuple(ReportRow(**r) for r in data["rows"]),
            runtime_seconds=float(data["runtime_seconds"]),
            seed=int(data["seed"]),
            status=data.get("status", "ok"),
            notes=data.get("notes", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "SummaryReport":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        """Row table preceded by ``# key: json`` header lines for the metadata."""
        buf = io.StringIO()
        meta = self.to_dict()
        for key in ("kind", "seed", "runtime_seconds", "status", "notes", "config"):
            buf.write(f"# {key}: {json.dumps(meta[key])}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(_ROW_TYPES))
        for r in self.rows:
            writer.writerow([_csv_cell(getattr(r, name)) for name in _ROW_TYPES])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SummaryReport":
        lines = text.splitlines()
        meta = {}
        body_start = 0
        for i, line in enumerate(lines):
            if not line.startswith("# "):
                body_start = i
                break
            key, _, value = line[2:].partition(": ")
            meta[key] = json.loads(value)
        rows = []
        for rec in csv.DictReader(lines[body_start:]):
            rows.append(ReportRow(**{k: _csv_parse(rec[k], t) for k, t in _ROW_TYPES.items()}))
        meta["rows"] = rows
        data = dict(meta)
        data["rows"] = [r.to_dict() for r in rows]
        return cls.from_dict(data)


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_parse(text, kind):
    if text == "" and kind is not str:
        return None
    if kind is bool:
        return text == "True"
    return kind(text)


# -- replicate plumbing ---------------------------------------------------------------

def _map(func: Callable, indices: Sequence[int], workers: int) -> list:
    """``[func(i) for i in indices]``, optionally across processes, in index order."""
    if workers <= 1 or len(indices) < 2:
        return [func(i) for i in indices]
    chunk = max(1, len(indices) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, indices, chunksize=chunk))


def _finish(config, rows, started, status="ok", notes=""):
    if status == "ok" and any(r.note == "insufficient replicates" for r in rows):
        status, notes = "insufficient replicates", notes or "at least two replicates are needed for a standard error"
    return SummaryReport(config.kind, config, tuple(rows), time.perf_counter() - started,
                         config.seed, status, notes)


def _inapplicable(config, started, why):
    return SummaryReport(config.kind, config, (), time.perf_counter() - started, config.seed,
                         "inapplicable", why)


def _strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _trend_row(check, ns, deviations, formula_id, note=""):
    devs = [abs(d) for d in deviations]
    if len(devs) < 2:
        return ReportRow(check, formula_id, note="trend needs two or more sample sizes")
    if all(d == 0 for d in devs):
        return ReportRow(check, formula_id, statistic=0.0, passed=True, note="deviation identically zero")
    return ReportRow(
        check, formula_id, n=ns[-1], statistic=devs[-1], passed=_strictly_decreasing(devs),
        note="|deviation| by n: " + ", ".join(f"{n}:{d:.6g}" for n, d in zip(ns, devs)),
    )


# -- spectrum ---------------------------------------------------------------------------

def _spectrum_replicate(model_spec, theta, n, k_max, seed, index):
    stream = derive_substream(seed, index, n)
    sample = simulate(parse_model(model_spec), n, stream)
    ov = overlay(sample, theta, stream, collapse=True)
    counts = site_spectrum(sample, ov).counts
    out = np.zeros((2, k_max))
    top = min(k_max, n - 1)
    out[0, :top] = counts[:top]
    out[1, :top] = theta * subtending_measures(sample)[:top]
    return out


def run_spectrum_experiment(config: ExperimentConfig) -> SummaryReport:
    """S_n(k) against its finite-n expectation or its large-n limit.

    Each replicate also contributes theta * L_k, the spectrum's mean given the
    genealogy, as a lower-variance estimator of the same target.
    """
    started = time.perf_counter()
    model = config.parsed_model()
    theta = config.theta
    mean_h, _ = model.moments()
    target = config.target
    if target == "auto":
        target = "exact" if math.isfinite(mean_h) else "limit"
    if target == "limit":
        ok, why = analytics.spectrum_limit_applicable(model)
        if not ok:
            return _inapplicable(config, started, f"spectrum limit inapplicable: {why}")
    elif not math.isfinite(mean_h):
        return _inapplicable(config, started, "exact expectation is infinite because E H is infinite")
    if model.defect_mass() > 0:
        return _inapplicable(config, started, "defective branch law: apply horizon or condition_finite")

    rows = []
    for n in config.n:
        func = partial(_spectrum_replicate, config.model, theta, n, config.k_max, config.seed)
        data = np.stack(_map(func, range(config.reps), config.workers))
        for k in range(1, min(config.k_max, n - 1) + 1):
            if target == "exact":
                pred = analytics.expected_site_count_exact(model, theta, n, k)
                scale = 1.0
            else:
                pred = analytics.limit_site_spectrum(model, theta, k)
                scale = 1.0 / n
            rows.append(_mean_row("site_spectrum", data[:, 0, k - 1] * scale, pred.value,
                                  pred.formula_id, config.z_max, n=n, k=k))
            rows.append(_mean_row("site_spectrum_given_tree", data[:, 1, k - 1] * scale, pred.value,
                                  pred.formula_id, config.z_max if target == "exact" else None, n=n, k=k))
    if target == "limit" and theta > 0:
        for k in range(1, config.k_max + 1):
            est = analytics.limit_site_spectrum_mc_form(
                model, theta, k, derive_substream(config.seed, k, 0, 1), max(config.draws, 2)
            )
            quad = analytics.limit_site_spectrum(model, theta, k, method="quadrature")
            z = _z(est.value, est.stderr, quad.value)
            rows.append(ReportRow("site_spectrum_mc_form", quad.formula_id, k=k, mc_mean=est.value,
                                  mc_stderr=est.stderr, analytic=quad.value, z=z, threshold=config.z_max,
                                  passed=None if z is None else bool(abs(z) <= config.z_max)))
    return _finish(config, rows, started)


# -- CLT ------------------------------------------------------------------------------------

def _sites_replicate(model_spec, theta, n, seed, index):
    stream = derive_substream(seed, index, n)
    sample = simulate(parse_model(model_spec), n, stream)
    return segregating_sites(sample, theta, stream)


def _site_counts(config, n):
    func = partial(_sites_replicate, config.model, config.theta, n, config.seed)
    return np.array(_map(func, range(config.reps), config.workers), dtype=float)


def run_clt_experiment(config: ExperimentConfig) -> SummaryReport:
    """Sample variance of sqrt(n) (S_n/n - theta E H) against the limit variance."""
    started = time.perf_counter()
    model = config.parsed_model()
    theta = config.theta
    try:
        pred = analytics.clt_variance(model, theta)
    except ValueError as exc:
        return _inapplicable(config, started, str(exc))
    rate = analytics.limit_sites_rate(model, theta).value
    rows = []
    for n in config.n:
        x = math.sqrt(n) * (_site_counts(config, n) / n - rate)
        R = x.size
        if R < 2:
            rows.append(ReportRow("clt_variance", pred.formula_id, n=n, analytic=pred.value,
                                  note="insufficient replicates"))
            continue
        var = float(x.var(ddof=1))
        lo = pred.value * stats.chi2.ppf(0.005, R - 1) / (R - 1)
        hi = pred.value * stats.chi2.ppf(0.995, R - 1) / (R - 1)
        rows.append(ReportRow(
            "clt_variance", pred.formula_id, n=n, mc_mean=var, analytic=pred.value,
            statistic=var, threshold=hi, passed=bool(lo <= var <= hi),
            note=f"99% chi-square interval [{lo:.6g}, {hi:.6g}]",
        ))
        mean = float(x.mean())
        rows.append(ReportRow("clt_mean", pred.formula_id, n=n, mc_mean=mean,
                              mc_stderr=float(x.std(ddof=1) / math.sqrt(R)), analytic=0.0,
                              note="diagnostic: the centering omits O(Y_n / sqrt n) terms"))
        skew = float(stats.skew(x)) if var > 0 else 0.0
        rows.append(ReportRow("clt_skewness", "", n=n, statistic=skew,
                              threshold=2.0 * math.sqrt(6.0 / R), note="diagnostic"))
    return _finish(config, rows, started)


# -- alleles ---------------------------------------------------------------------------

def _allele_replicate(model_spec, theta, n, k_max, seed, index):
    stream = derive_substream(seed, index, n)
    sample = simulate(parse_model(model_spec), n, stream)
    ov = overlay(sample, theta, stream, collapse=True)
    spec = allele_spectrum(haplotype_keys(sample, ov))
    out = np.zeros(k_max + 1)
    out[0] = spec.total
    top = min(k_max, n)
    out[1 : top + 1] = spec.counts[:top]
    return out


def run_allele_experiment(config: ExperimentConfig) -> SummaryReport:
    """A_n/n and A_n(k)/n against their limits across the sample sizes.

    Only the largest n is held to a tolerance, max(tolerance, z_max stderr),
    and the deviation of A_n/n must shrink strictly as n grows.
    """
    started = time.perf_counter()
    model = config.parsed_model()
    theta = config.theta
    if model.defect_mass() > 0:
        return _inapplicable(config, started, "defective branch law: apply horizon or condition_finite")
    tol = 0.01 if config.tolerance is None else config.tolerance
    rows = []
    if theta == 0:
        for n in config.n:
            func = partial(_allele_replicate, config.model, 0.0, n, 1, config.seed)
            totals = np.stack(_map(func, range(config.reps), config.workers))[:, 0]
            rows.append(ReportRow("allele_count_theta0", "trivial", n=n, mc_mean=float(totals.mean()),
                                  analytic=1.0, passed=bool(np.all(totals == 1))))
        return _finish(config, rows, started)

    fraction = analytics.limit_allele_fraction(model, theta)
    spectrum = [analytics.limit_allele_spectrum(model, theta, k) for k in range(1, config.k_max + 1)]
    largest = max(config.n)
    deviations = []
    for n in config.n:
        func = partial(_allele_replicate, config.model, theta, n, config.k_max, config.seed)
        data = np.stack(_map(func, range(config.reps), config.workers)) / n
        targets = [("allele_fraction", None, data[:, 0], fraction)]
        targets += [("allele_spectrum", k, data[:, k], spectrum[k - 1]) for k in range(1, config.k_max + 1)]
        for check, k, values, pred in targets:
            row = _mean_row(check, values, pred.value, pred.formula_id, None, n=n, k=k)
            if n == largest and row.mc_stderr is not None:
                bound = max(tol, config.z_max * row.mc_stderr)
                row = dataclasses.replace(row, statistic=abs(row.mc_mean - pred.value), threshold=bound,
                                          passed=bool(abs(row.mc_mean - pred.value) <= bound))
            rows.append(row)
            if check == "allele_fraction":
                deviations.append(row.mc_mean - pred.value)
    rows.append(_trend_row("allele_fraction_trend", list(config.n), deviations, fraction.formula_id))
    return _finish(config, rows, started)


# -- thinned process E^theta ---------------------------------------------------------------

def _wtheta_replicate(model_spec, theta, n, seed, index):
    stream = derive_substream(seed, index, n)
    sample = simulate(parse_model(model_spec), n, stream)
    # branch-0 mutations are shared with individual 0 and cannot affect E^theta
    ov = overlay(sample, theta, stream, root=False, collapse=True)
    scan = theta_scan(sample, ov)
    return scan.lengths, scan.increments


def ks_statistic_with_atom(finite_values, n_atom: int, cdf, cdf_at_infinity: float) -> float:
    """One-sample KS distance when part of the sample sits at +infinity.

    ``cdf`` is the (possibly defective) distribution function on [0, inf)
    and ``cdf_at_infinity`` its limit; the ``n_atom`` infinite observations
    only enter through the empirical mass at infinity.
    """
    x = np.sort(np.asarray(finite_values, dtype=float))
    total = x.size + n_atom
    if total == 0:
        raise ValueError("empty sample")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, x.size + 1)
    d = abs(x.size / total - cdf_at_infinity)
    if x.size:
        d = max(d, float(np.max(i / total - F)), float(np.max(F - (i - 1) / total)))
    return d


def run_wtheta_experiment(config: ExperimentConfig) -> SummaryReport:
    """Law of the branch lengths of E^theta against survival 1/W_theta.

    Replicates are taken in index order until ``pooled`` finite values are
    collected; each replicate also ends with one observation that is infinite
    (or lies beyond the sample), which enters the KS comparison as mass at
    infinity whenever W_theta is bounded.
    """
    started = time.perf_counter()
    model = config.parsed_model()
    theta = config.theta
    if not theta > 0:
        return _inapplicable(config, started, "theta must be positive")
    if model.defect_mass() > 0:
        return _inapplicable(config, started, "defective branch law: apply horizon or condition_finite")
    n = max(config.n)
    batch = max(64, 16 * config.workers)
    values, pairs = [], []
    pooled = replicates = 0
    index = 0
    while pooled < config.pooled:
        func = partial(_wtheta_replicate, config.model, theta, n, config.seed)
        for lengths, increments in _map(func, range(index, index + batch), config.workers):
            values.append(lengths)
            if increments.size >= 2:
                pairs.append(np.stack([increments[:-1], increments[1:]], axis=1))
            pooled += lengths.size
            replicates += 1
            if pooled >= config.pooled:
                break
        index += batch
    finite = np.concatenate(values)
    m = finite.size
    w_inf = model.w_theta_limit(theta)
    atom = 1.0 / w_inf

    def cdf(x):
        return 1.0 - 1.0 / np.asarray(model.w_theta(theta, x), dtype=float)

    rows = []
    note = f"{m} finite values from {replicates} replicates of n={n}"
    if atom > 0:
        total = m + replicates
        d = ks_statistic_with_atom(finite, replicates, cdf, 1.0 - atom)
        rows.append(ReportRow("ks_survival_1_over_w_theta", "thinned_branch_law", n=n, statistic=d,
                              threshold=KS_CRITICAL_1PCT / math.sqrt(total),
                              passed=bool(d < KS_CRITICAL_1PCT / math.sqrt(total)),
                              note=note + f" plus {replicates} terminal infinite observations"))
        cond = stats.kstest(finite, lambda x: (cdf(x)) / (1.0 - atom)).statistic
        rows.append(ReportRow("ks_conditioned_finite", "thinned_branch_law", n=n, statistic=float(cond),
                              threshold=KS_CRITICAL_1PCT / math.sqrt(m),
                              passed=bool(cond < KS_CRITICAL_1PCT / math.sqrt(m)), note=note))
    else:
        d = float(stats.kstest(finite, cdf).statistic)
        rows.append(ReportRow("ks_survival_1_over_w_theta", "thinned_branch_law", n=n, statistic=d,
                              threshold=KS_CRITICAL_1PCT / math.sqrt(m),
                              passed=bool(d < KS_CRITICAL_1PCT / math.sqrt(m)), note=note))
    if pairs:
        p = np.concatenate(pairs).astype(float)
        r = float(np.corrcoef(p[:, 0], p[:, 1])[0, 1]) if p.shape[0] >= 3 and np.all(p.std(axis=0) > 0) else 0.0
        rows.append(ReportRow("lag1_increment_correlation", "thinned_index_iid", n=n, statistic=r,
                              threshold=4.0 / math.sqrt(m), passed=bool(abs(r) <= 4.0 / math.sqrt(m)),
                              note=f"{p.shape[0]} consecutive increment pairs"))
    return _finish(config, rows, started)


# -- stable and Brownian regimes ----------------------------------------------------------

def run_stable_experiment(config: ExperimentConfig) -> SummaryReport:
    """Empirical Laplace transform of S_n / n^beta against its limit."""
    started = time.perf_counter()
    model = config.parsed_model()
    theta = config.theta
    if not (isinstance(model, Stable) and model.horizon is None and 1 < model.alpha < 2):
        return _inapplicable(config, started, "needs an untruncated stable law with 1 < alpha < 2")
    if not theta > 0:
        return _inapplicable(config, started, "theta must be positive")
    tol = 0.02 if config.tolerance is None else config.tolerance
    beta = 1.0 / (model.alpha - 1.0)
    largest = max(config.n)
    rows = []
    deviations: Dict[float, list] = {lam: [] for lam in config.lambdas}
    counts = {n: _site_counts(config, n) for n in config.n}
    for lam in config.lambdas:
        pred = analytics.stable_laplace_transform(model.alpha, model.c, theta, lam)
        for n in config.n:
            values = np.exp(-lam * counts[n] / float(n) ** beta)
            row = _mean_row("stable_laplace", values, pred.value, pred.formula_id, None, n=n, lam=lam)
            if lam == 0:
                row = dataclasses.replace(row, passed=bool(np.all(values == 1.0)))
            elif n == largest and row.mc_stderr is not None:
                bound = max(tol, config.z_max * row.mc_stderr)
                dev = abs(row.mc_mean - pred.value)
                row = dataclasses.replace(row, statistic=dev, threshold=bound, passed=bool(dev <= bound))
            rows.append(row)
            deviations[lam].append(row.mc_mean - pred.value)
        if lam > 0:
            trend = _trend_row("stable_laplace_trend", list(config.n), deviations[lam], pred.formula_id)
            rows.append(dataclasses.replace(trend, lam=lam))
    return _finish(config, rows, started)


def run_brownian_experiment(config: ExperimentConfig) -> SummaryReport:
    """Median of S_n / (n ln n) against theta / c for W = 1 + c x."""
    started = time.perf_counter()
    model = config.parsed_model()
    try:
        pred = analytics.brownian_growth_constant(model, config.theta)
    except ValueError as exc:
        return _inapplicable(config, started, str(exc))
    tol = 0.30 if config.tolerance is None else config.tolerance
    largest = max(config.n)
    rows, deviations = [], []
    for n in config.n:
        ratio = _site_counts(config, n) / (n * math.log(n))
        med = float(np.median(ratio))
        dev = med - pred.value
        deviations.append(dev)
        passed = bool(abs(dev) <= tol) if n == largest else None
        rows.append(ReportRow("brownian_median", pred.formula_id, n=n, mc_mean=med, analytic=pred.value,
                              statistic=abs(dev), threshold=tol if n == largest else None, passed=passed,
                              note="median over replicates"))
    rows.append(_trend_row("brownian_trend", list(config.n), deviations, pred.formula_id))
    return _finish(config, rows, started)


# -- Bernoulli census --------------------------------------------------------------------------

def run_census_equivalence(config: ExperimentConfig) -> SummaryReport:
    """Max over a Geometric(p) number of branch draws against the censused law.

    Also checks that censusing W = 1 + x at intensity p gives exactly
    W = 1 + p x on a grid.
    """
    started = time.perf_counter()
    model = config.parsed_model()
    p = config.census_p
    if model.horizon is not None or model.defect_mass() > 0:
        return _inapplicable(config, started, "census equivalence needs an untruncated proper law")
    rows = []
    if 0 < p <= 1:
        compare = parse_model(config.compare_model) if config.compare_model else model.census(p)
        s1 = derive_substream(config.seed, 0, 0)
        s2 = derive_substream(config.seed, 1, 0)
        draws = config.draws
        g = s1.geometric(p, size=draws)
        branches = np.asarray(model.sample(open_uniform(s1, int(g.sum()))))
        starts = np.concatenate([[0], np.cumsum(g)[:-1]])
        constructed = np.maximum.reduceat(branches, starts)
        direct = np.asarray(compare.sample(open_uniform(s2, draws)))
        ks = stats.ks_2samp(constructed, direct)
        rows.append(ReportRow("census_two_sample_ks", "bernoulli_census", statistic=float(ks.statistic),
                              threshold=0.01, passed=bool(ks.pvalue >= 0.01),
                              note=f"p-value {ks.pvalue:.6g}; compared against {format_model(compare)}"))
    grid = np.linspace(0.0, 100.0, 1000)
    q = p if p > 0 else 1.0
    censused = Stable(2.0, 1.0).census(q)
    equal = bool(np.array_equal(censused.scale(grid), CriticalBD(q).scale(grid)))
    rows.append(ReportRow("brownian_census_identity", "bernoulli_census", statistic=float(q), passed=equal,
                          note="Stable(2,1) censused at p against CriticalBD(p), exact on 1000 points"))
    return _finish(config, rows, started)


# -- oracle ---------------------------------------------------------------------------------

_ORACLE_THETAS = (0.3, 1.0, 3.0)


def _oracle_model(i: int, stream: np.random.Generator) -> ScaleModel:
    family = i % 4
    if family == 0:
        return Yule(float(stream.choice([0.5, 1.0, 2.0])))
    if family == 1:
        return CriticalBD(float(stream.choice([0.5, 1.0, 2.0])))
    if family == 2:
        b, d = (1.0, 2.0) if stream.random() < 0.5 else (2.0, 1.0)
        return BirthDeath(b, d, horizon=float(stream.choice([2.0, 5.0])))
    return Stable(float(stream.choice([1.6, 1.8, 2.0])), float(stream.choice([0.5, 1.0])))


def _oracle_instance(seed, max_mutations, index):
    stream = derive_substream(seed, index, 0, 2)
    model = _oracle_model(index, stream)
    theta = 0.0 if stream.random() < 0.05 else float(stream.choice(_ORACLE_THETAS))
    n = int(stream.integers(1, 51))
    # heavy tails occasionally put a huge number of mutations under Y_n
    for _ in range(100):
        sample = simulate(model, n, stream)
        ov = overlay(sample, theta, stream)
        if ov.total <= max_mutations:
            break
    fast_sites = site_spectrum(sample, ov)
    fast_alleles = allele_spectrum(haplotype_keys(sample, ov))
    slow_sites, slow_alleles = brute_force_check(sample, ov)
    ok = fast_sites == slow_sites and fast_alleles == slow_alleles
    if ok:
        return None
    return {
        "index": index,
        "model": format_model(model),
        "theta": theta,
        "lengths": sample.lengths.tolist(),
        "mutations": {str(i): ov.branch(i).tolist() for i in range(sample.n) if ov.branch(i).size},
        "fast": {"sites": fast_sites.as_dict(), "alleles": fast_alleles.as_dict()},
        "brute_force": {"sites": slow_sites.as_dict(), "alleles": slow_alleles.as_dict()},
    }


def run_oracle_check(config: ExperimentConfig) -> SummaryReport:
    """Fast spectra against the literal carrying rule on random small instances."""
    started = time.perf_counter()
    func = partial(_oracle_instance, config.seed, config.max_mutations)
    results = _map(func, range(config.instances), config.workers)
    mismatches = [r for r in results if r is not None]
    note = f"{config.instances} instances"
    if mismatches:
        path = config.repro_path or f"oracle_mismatch_seed{config.seed}.json"
        with open(path, "w") as fh:
            json.dump(mismatches, fh, indent=2)
        note += f"; reproduction cases written to {path}"
    rows = [ReportRow("oracle_mismatches", "brute_force", statistic=float(len(mismatches)),
                      threshold=0.0, passed=not mismatches, note=note)]
    return _finish(config, rows, started)


_RUNNERS = {
    "spectrum": run_spectrum_experiment,
    "clt": run_clt_experiment,
    "allele": run_allele_experiment,
    "wtheta": run_wtheta_experiment,
    "stable": run_stable_experiment,
    "brownian": run_brownian_experiment,
    "census-equivalence": run_census_equivalence,
    "oracle": run_oracle_check,
}


def run_experiment(config: ExperimentConfig) -> SummaryReport:
    return _RUNNERS[config.kind](config)
