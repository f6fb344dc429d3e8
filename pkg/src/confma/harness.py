"""Experiment orchestration and metric aggregation.

Three evaluation modes produce :class:`EvalRow` tables, one row per
(weight scheme, variant, adaptive) cell:

* :func:`run_monte_carlo` repeats a simulated design and scores the
  interval at a fresh evaluation point each replication;
* :func:`leave_one_out_eval` holds out each row of a cross-section in turn;
* :func:`rolling_window_eval` moves a fixed-length window through a series.

Replications run in worker processes when ``CONFMA_THREADS`` asks for more
than one; results are folded in replication order, so the output does not
depend on the worker count.
"""

from __future__ import annotations

import enum
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .conformal import full_conformal, split_conformal
from .core import (ConfmaError, ConformalConfig, Dataset, IntervalReport, ModelSet,
                   Ordering, Variant, WeightScheme, ALL_SCHEMES)
from .dgp import EquityConfig, HansenConfig, gen_equity, gen_hansen, replication_rng
from .ensemble import AugmentedFits, EnsembleFitter

log = logging.getLogger(__name__)


class ZeroActual(ConfmaError, ValueError):
    pass


class LengthMismatch(ConfmaError, ValueError):
    pass


class InsufficientData(ConfmaError, ValueError):
    pass


# ---------------------------------------------------------------------------
# point-forecast metrics


def _pair(pred, actual):
    pred = np.asarray(pred, dtype=float).ravel()
    actual = np.asarray(actual, dtype=float).ravel()
    if pred.shape != actual.shape or pred.size == 0:
        raise LengthMismatch(f"pred has {pred.size} entries, actual has {actual.size}")
    return pred, actual


def rmspe(pred, actual) -> float:
    pred, actual = _pair(pred, actual)
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def mspe(pred, actual) -> float:
    pred, actual = _pair(pred, actual)
    return float(np.mean((pred - actual) ** 2))


def hit_rate(pred, actual, tau: float = 0.2) -> float:
    """Share of forecasts with ``|pred - actual| / |actual| <= tau``."""
    pred, actual = _pair(pred, actual)
    if np.any(actual == 0):
        raise ZeroActual("relative error undefined for zero actual values")
    rel = np.abs(pred - actual) / np.abs(actual)
    # tolerate rounding at the boundary, e.g. |12 - 10| / 10 computed as 0.2000000000000001
    return float(np.mean(rel <= tau * (1.0 + 1e-12)))


# ---------------------------------------------------------------------------
# configuration and results


class Design(str, enum.Enum):
    HANSEN_HOMO = "hansen_homo"
    HANSEN_HETERO = "hansen_hetero"
    EQUITY = "equity"
    CSV_CROSS_SECTION = "csv_cross_section"
    CSV_TIME_SERIES = "csv_time_series"


@dataclass(frozen=True)
class Cell:
    scheme: WeightScheme
    variant: Variant
    adaptive: bool

    @property
    def key(self):
        return (self.scheme.name, self.variant.value, self.adaptive)


DEFAULT_VARIANTS = ((Variant.FULL, False), (Variant.SPLIT, False))


@dataclass(frozen=True)
class ExperimentConfig:
    design: Design = Design.HANSEN_HOMO
    schemes: tuple[WeightScheme, ...] = ALL_SCHEMES
    variants: tuple[tuple[Variant, bool], ...] = DEFAULT_VARIANTS
    replications: int = 500
    alpha: float = 0.10
    dgp: HansenConfig | EquityConfig | None = None
    window: int = 212
    n_predictions: int = 100
    master_seed: int = 0
    grid_points: int = 200
    grid_expansion: float = 1.5
    split_fraction: float = 0.5
    tau: float = 0.2
    variance_columns: tuple[int, ...] | None = None
    max_evals: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "design", Design(self.design))
        object.__setattr__(self, "variants",
                           tuple((Variant(v), bool(a)) for v, a in self.variants))
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.schemes:
            raise ValueError("at least one weight scheme is required")
        if not self.variants:
            raise ValueError("at least one variant is required")

    def cells(self) -> list[Cell]:
        return [Cell(s, v, a) for s in self.schemes for v, a in self.variants]

    def conformal(self, variant: Variant, adaptive: bool, seed: int = 0) -> ConformalConfig:
        return ConformalConfig(alpha=self.alpha, grid_points=self.grid_points,
                               grid_expansion=self.grid_expansion, adaptive=adaptive,
                               variant=variant, split_fraction=self.split_fraction, seed=seed,
                               variance_columns=self.variance_columns)

    def resolved_dgp(self):
        if self.dgp is not None:
            return self.dgp
        if self.design is Design.HANSEN_HOMO:
            return HansenConfig(hetero=False)
        if self.design is Design.HANSEN_HETERO:
            return HansenConfig(hetero=True)
        if self.design is Design.EQUITY:
            return EquityConfig()
        raise ValueError(f"design {self.design.value} has no simulator")


REPORT_FIELDS = ("scheme", "variant", "adaptive", "coverage", "se_coverage", "avg_length",
                 "sd_length", "rmspe", "mspe", "hit_rate", "n_evals")


@dataclass(frozen=True)
class EvalRow:
    scheme: str
    variant: str
    adaptive: bool
    coverage: float
    se_coverage: float
    avg_length: float
    sd_length: float
    rmspe: float
    mspe: float
    hit_rate: float
    n_evals: int
    n_failed: int = field(default=0, compare=False)
    n_unbounded: int = field(default=0, compare=False)

    @property
    def se_length(self) -> float:
        return self.sd_length / math.sqrt(self.n_evals) if self.n_evals > 0 else math.nan

    def as_dict(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in REPORT_FIELDS}


@dataclass
class _Record:
    hit: bool
    length: float
    point: float
    actual: float
    unbounded: bool


def aggregate(cell: Cell, records, n_failed: int = 0, tau: float = 0.2) -> EvalRow:
    """Fold per-evaluation records into one row (sums and means only)."""
    recs = [r for r in records if r is not None]
    n = len(recs)
    name, variant, adaptive = cell.key
    if n == 0:
        nan = math.nan
        return EvalRow(name, variant, adaptive, nan, nan, nan, nan, nan, nan, nan, 0,
                       n_failed, 0)
    hits = np.array([r.hit for r in recs], dtype=float)
    lengths = np.array([r.length for r in recs])
    pred = np.array([r.point for r in recs])
    actual = np.array([r.actual for r in recs])
    cov = float(hits.sum() / n)
    sd = float(np.std(lengths, ddof=1)) if n > 1 else 0.0
    try:
        hr = hit_rate(pred, actual, tau)
    except ZeroActual:
        hr = math.nan
    return EvalRow(name, variant, adaptive, cov, math.sqrt(cov * (1.0 - cov) / n),
                   float(lengths.mean()), sd, rmspe(pred, actual), mspe(pred, actual), hr, n,
                   n_failed, int(sum(r.unbounded for r in recs)))


def _record(rep: IntervalReport, actual: float) -> _Record:
    length = rep.grid_hi - rep.grid_lo if rep.unbounded else rep.length
    return _Record(rep.covers(actual), float(length), rep.point, float(actual), rep.unbounded)


_FAILURES = (ConfmaError, np.linalg.LinAlgError, FloatingPointError)


def evaluate_point(cells, data: Dataset, x_new, actual: float, cfg: ExperimentConfig,
                   model_set: ModelSet, seed: int = 0):
    """Score every cell at one evaluation point; failed cells give ``None``."""
    aug = None
    out = []
    for cell in cells:
        conf = cfg.conformal(cell.variant, cell.adaptive, seed)
        fitter = EnsembleFitter(model_set, cell.scheme)
        try:
            if cell.variant is Variant.SPLIT:
                rep = split_conformal(data, x_new, fitter, conf)
            else:
                if aug is None:
                    aug = AugmentedFits(data.X, data.y, x_new, model_set)
                rep = full_conformal(data, x_new, fitter, conf, aug=aug)
        except _FAILURES as exc:
            log.warning("cell %s failed: %s", cell.key, exc)
            out.append(None)
            continue
        out.append(_record(rep, actual))
    return out


def _fold(cells, per_eval, tau):
    rows = []
    for k, cell in enumerate(cells):
        recs = [ev[k] for ev in per_eval]
        failed = sum(r is None for r in recs)
        if failed:
            log.warning("cell %s: %d of %d evaluations failed and were excluded",
                        cell.key, failed, len(recs))
        rows.append(aggregate(cell, recs, failed, tau))
    return rows


# ---------------------------------------------------------------------------
# Monte Carlo


def _one_replication(cfg: ExperimentConfig, rep: int):
    gen_cfg = cfg.resolved_dgp()
    rng = replication_rng(cfg.master_seed, rep)
    if isinstance(gen_cfg, HansenConfig):
        data, y_next, x_next = gen_hansen(gen_cfg, rng)
    else:
        data, y_next, x_next = gen_equity(gen_cfg, rng)
    split_seed = int(rng.integers(0, 2 ** 63 - 1))
    return evaluate_point(cfg.cells(), data, x_next, y_next, cfg, gen_cfg.model_set(),
                          seed=split_seed)


def _chunk(cfg, reps):
    return [_one_replication(cfg, r) for r in reps]


def worker_count() -> int:
    """Workers from ``CONFMA_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("CONFMA_THREADS", "0").strip() or "0"
    try:
        k = int(raw)
    except ValueError:
        raise ValueError(f"CONFMA_THREADS must be an integer, got {raw!r}") from None
    if k < 0:
        raise ValueError("CONFMA_THREADS must be non-negative")
    return k if k > 0 else (os.cpu_count() or 1)


def run_replications(cfg: ExperimentConfig, workers: int | None = None):
    """Raw per-replication records, in replication order."""
    workers = worker_count() if workers is None else workers
    reps = list(range(cfg.replications))
    if workers <= 1 or len(reps) < 2:
        return _chunk(cfg, reps)
    chunks = [reps[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_chunk, [cfg] * len(chunks), chunks))
    out = [None] * len(reps)
    for idx, part in zip(chunks, parts):
        for r, res in zip(idx, part):
            out[r] = res
    return out


def run_monte_carlo(cfg: ExperimentConfig, workers: int | None = None) -> list[EvalRow]:
    if cfg.design not in (Design.HANSEN_HOMO, Design.HANSEN_HETERO, Design.EQUITY):
        raise ValueError("run_monte_carlo needs a simulated design")
    return _fold(cfg.cells(), run_replications(cfg, workers), cfg.tau)


# ---------------------------------------------------------------------------
# empirical designs


def _resolve(cfg, schemes):
    if schemes is not None:
        cfg = replace(cfg, schemes=tuple(schemes))
    return cfg


def leave_one_out_eval(data: Dataset, model_set: ModelSet, schemes=None,
                       cfg: ExperimentConfig | None = None) -> list[EvalRow]:
    """Hold out each row in turn and predict it from the rest.

    ``cfg.max_evals`` limits the number of held-out rows (the first ones).
    """
    cfg = _resolve(cfg or ExperimentConfig(design=Design.CSV_CROSS_SECTION), schemes)
    if data.ordering is not Ordering.EXCHANGEABLE:
        raise ValueError("leave-one-out evaluation needs exchangeable data")
    cells = cfg.cells()
    n_eval = data.n if cfg.max_evals is None else min(cfg.max_evals, data.n)
    per_eval = []
    for i in range(n_eval):
        keep = np.r_[0:i, i + 1:data.n]
        train = data.subset(keep)
        per_eval.append(evaluate_point(cells, train, data.X[i], float(data.y[i]), cfg,
                                       model_set, seed=cfg.master_seed + i))
    return _fold(cells, per_eval, cfg.tau)


def rolling_window_eval(data: Dataset, model_set: ModelSet, schemes=None,
                        cfg: ExperimentConfig | None = None) -> list[EvalRow]:
    """Fixed-length window moved one period at a time.

    Window ``[t - window, t)`` predicts row ``t`` for the last
    ``n_predictions`` rows.  Split variants estimate on the first half of
    each window, as the time-order split does.
    """
    cfg = _resolve(cfg or ExperimentConfig(design=Design.CSV_TIME_SERIES), schemes)
    if data.ordering is not Ordering.TIME_SERIES:
        raise ValueError("rolling-window evaluation needs time-series data")
    if cfg.window < 2 or data.n < cfg.window + cfg.n_predictions:
        raise InsufficientData(
            f"need at least window + n_predictions = {cfg.window + cfg.n_predictions} rows, "
            f"got {data.n}")
    cells = cfg.cells()
    per_eval = []
    for t in range(data.n - cfg.n_predictions, data.n):
        train = data.subset(slice(t - cfg.window, t))
        per_eval.append(evaluate_point(cells, train, data.X[t], float(data.y[t]), cfg,
                                       model_set, seed=cfg.master_seed))
    return _fold(cells, per_eval, cfg.tau)
