"""Correlation criteria, logistic score mapping, and grouped k-fold splits.

SRCC and KRCC are computed on raw predictions (rank statistics are already
scale-free); PLCC and RMSE are computed after the five-parameter logistic
mapping that aligns prediction scale with the subjective scale. A flag
applies the mapping before all four criteria instead.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .errors import UndefinedMetricError, ValidationError
from .seeding import rng_for

_EXP_CLAMP = 500.0
_SIMPLEX_TOL = 1e-8
_MAX_EVALS = 20000


@dataclass(frozen=True)
class LogisticParams:
    """The five parameters of the monotone-flexible mapping curve."""

    beta: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=np.float64)
        if b.shape != (5,) or not np.all(np.isfinite(b)):
            raise ValidationError(f"beta must be 5 finite scalars, got {self.beta!r}")
        object.__setattr__(self, "beta", b)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    mos: float
    group: str

    def __post_init__(self):
        if not math.isfinite(self.mos):
            raise ValidationError(f"mos must be finite, got {self.mos!r}")
        if not self.group:
            raise ValidationError(f"group must be non-empty (entry {self.path!r})")


@dataclass(frozen=True)
class EvaluationReport:
    srcc: float
    krcc: float
    plcc: float
    rmse: float
    logistic: LogisticParams
    n: int

    def to_text(self) -> str:
        b = self.logistic.beta
        return ("srcc={:.6g} krcc={:.6g} plcc={:.6g} rmse={:.6g} n={} "
                "beta=[{:.6g} {:.6g} {:.6g} {:.6g} {:.6g}]").format(
                    self.srcc, self.krcc, self.plcc, self.rmse, self.n, *b)

    def csv_row(self) -> list:
        return ([f"{v:.6g}" for v in (self.srcc, self.krcc, self.plcc, self.rmse)]
                + [f"{v:.6g}" for v in self.logistic.beta] + [str(self.n)])


REPORT_CSV_HEADER = ["srcc", "krcc", "plcc", "rmse",
                     "beta1", "beta2", "beta3", "beta4", "beta5", "n"]


def _check_pair(x, y, min_n: int = 2):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValidationError(f"inputs must be equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < min_n:
        raise ValidationError(f"need at least {min_n} samples, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("inputs contain non-finite values")
    return x, y


def average_ranks(x: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their covered ranks."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def plcc(x, y) -> float:
    """Pearson linear correlation coefficient."""
    x, y = _check_pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    den = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if den == 0.0:
        raise UndefinedMetricError("PLCC is undefined for a constant vector")
    return float(xc @ yc) / den


def srcc(x, y) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    x, y = _check_pair(x, y)
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedMetricError("SRCC is undefined for a constant vector")
    return plcc(average_ranks(x), average_ranks(y))


def krcc(x, y) -> float:
    """Kendall rank correlation, tau-b tie handling."""
    x, y = _check_pair(x, y)
    tau = stats.kendalltau(x, y, variant="b").statistic
    if not np.isfinite(tau):
        raise UndefinedMetricError("KRCC is undefined (a tie-corrected denominator is zero)")
    return float(tau)


def rmse(x, y) -> float:
    x, y = _check_pair(x, y, min_n=1)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def logistic_map(y, params: LogisticParams):
    """Five-parameter logistic: b1*(0.5 - 1/(1+exp(b2*(y-b3)))) + b4*y + b5.

    The exponent is clamped to +-500 before exponentiation; the clamp only
    engages where the bracket term is saturated anyway, so double-precision
    results are unaffected for practical arguments.
    """
    b1, b2, b3, b4, b5 = params.beta
    y = np.asarray(y, dtype=np.float64)
    e = np.clip(b2 * (y - b3), -_EXP_CLAMP, _EXP_CLAMP)
    out = b1 * (0.5 - 1.0 / (1.0 + np.exp(e))) + b4 * y + b5
    return out if out.ndim else float(out)


def _sse(beta: np.ndarray, pred: np.ndarray, mos: np.ndarray) -> float:
    mapped = logistic_map(pred, LogisticParams(beta=beta))
    return float(np.sum((mos - mapped) ** 2))


def _ols_line(x: np.ndarray, y: np.ndarray):
    vx = float(np.var(x))
    if vx == 0.0:
        return 0.0, float(np.mean(y))
    slope = float(np.cov(x, y, bias=True)[0, 1]) / vx
    return slope, float(np.mean(y) - slope * np.mean(x))


def _nelder_mead(beta0, pred, mos, budget):
    return optimize.minimize(
        _sse, beta0, args=(pred, mos), method="Nelder-Mead",
        options={"xatol": _SIMPLEX_TOL, "fatol": 1e30,
                 "maxfev": budget, "maxiter": budget})


def _profiled_start(pred: np.ndarray, mos: np.ndarray) -> np.ndarray:
    """Basin-selection start: for fixed (b2, b3) the curve is linear in
    (b1, b4, b5), so scan a coarse (b2, b3) grid with inner least squares
    and keep the best candidate."""
    sd = float(np.std(pred))
    scale = 1.0 if sd == 0.0 else 1.0 / sd
    b2_grid = np.concatenate([scale * np.logspace(-1.5, 1.5, 13),
                              -scale * np.logspace(-1.5, 1.5, 13)])
    b3_grid = np.linspace(float(pred.min()), float(pred.max()), 17)
    ones = np.ones_like(pred)
    best_sse = np.inf
    best = None
    for b2 in b2_grid:
        for b3 in b3_grid:
            e = np.clip(b2 * (pred - b3), -_EXP_CLAMP, _EXP_CLAMP)
            bracket = 0.5 - 1.0 / (1.0 + np.exp(e))
            design = np.stack([bracket, pred, ones], axis=1)
            coef, *_ = np.linalg.lstsq(design, mos, rcond=None)
            resid = mos - design @ coef
            sse = float(resid @ resid)
            if sse < best_sse:
                best_sse = sse
                best = np.array([coef[0], b2, b3, coef[1], coef[2]])
    return best


def fit_logistic(pred, mos) -> LogisticParams:
    """Least-squares fit of the five-parameter logistic by simplex descent.

    The reference start has b1 = range of mos, b2 = 1/std(pred) (0 when
    constant), b3 = mean(pred), and (b4, b5) from the OLS line of mos on
    pred; a profiled grid start guards against the affine local basin the
    reference start can fall into on sharply S-shaped data. Each simplex
    run stops when its diameter falls below 1e-8 or its evaluation share of
    the 20000-evaluation budget runs out, and the fit never returns
    parameters worse than the reference start.
    """
    pred, mos = _check_pair(pred, mos, min_n=5)
    sd = float(np.std(pred))
    b4, b5 = _ols_line(pred, mos)
    beta0 = np.array([float(np.max(mos) - np.min(mos)),
                      0.0 if sd == 0.0 else 1.0 / sd,
                      float(np.mean(pred)), b4, b5])
    starts = [beta0, _profiled_start(pred, mos)]
    share = _MAX_EVALS // (len(starts) + 1)
    best = beta0
    best_sse = _sse(beta0, pred, mos)
    for start in starts:
        result = _nelder_mead(start, pred, mos, share)
        sse = _sse(result.x, pred, mos)
        if sse < best_sse:
            best_sse, best = sse, result.x
    polish = _nelder_mead(best, pred, mos, share)
    if _sse(polish.x, pred, mos) < best_sse:
        best = polish.x
    return LogisticParams(beta=np.asarray(best, dtype=np.float64))


def evaluate(pred, mos, map_rank_metrics: bool = False) -> EvaluationReport:
    """Full report: SRCC/KRCC on raw predictions, PLCC/RMSE on logistic-mapped
    predictions (map_rank_metrics=True maps before all four criteria)."""
    pred, mos = _check_pair(pred, mos, min_n=5)
    params = fit_logistic(pred, mos)
    mapped = logistic_map(pred, params)
    rank_input = mapped if map_rank_metrics else pred
    return EvaluationReport(
        srcc=srcc(rank_input, mos),
        krcc=krcc(rank_input, mos),
        plcc=plcc(mapped, mos),
        rmse=rmse(mapped, mos),
        logistic=params,
        n=pred.size,
    )


def kfold_split(entries, k: int, seed: int = 0) -> list:
    """Content-grouped k-fold partitions.

    Distinct groups are shuffled by the seed and dealt round-robin into k
    folds; a fold's test set is every entry of its groups and its train set
    is everything else, so no group ever straddles train and test.
    Returns [(train_indices, test_indices), ...] as index arrays.
    """
    groups = [e.group for e in entries]
    distinct = sorted(set(groups))
    if k < 1 or k > len(distinct):
        raise ValidationError(f"k={k} must be in [1, number of groups={len(distinct)}]")
    rng = rng_for(seed, "kfold-shuffle")
    shuffled = list(np.array(distinct, dtype=object)[rng.permutation(len(distinct))])
    folds = []
    for f in range(k):
        test_groups = set(shuffled[f::k])
        test_idx = np.array([i for i, g in enumerate(groups) if g in test_groups])
        train_idx = np.array([i for i, g in enumerate(groups) if g not in test_groups])
        folds.append((train_idx, test_idx))
    return folds


def read_manifest(path) -> list:
    """CSV manifest with header path,mos,group."""
    with open(path, "r", newline="", encoding="utf-8") as f:
        return parse_manifest(f.read())


def parse_manifest(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    required = ("path", "mos", "group")
    fieldnames = reader.fieldnames or []
    missing = [c for c in required if c not in fieldnames]
    if missing:
        raise ValidationError(f"manifest is missing column(s): {', '.join(missing)}")
    entries = []
    for i, row in enumerate(reader):
        try:
            mos = float(row["mos"])
        except (TypeError, ValueError):
            raise ValidationError(f"manifest row {i}: mos {row.get('mos')!r} is not a number") from None
        if row["path"] is None or row["group"] is None:
            raise ValidationError(f"manifest row {i}: short row")
        entries.append(ManifestEntry(path=row["path"], mos=mos, group=row["group"]))
    if not entries:
        raise ValidationError("manifest has no data rows")
    return entries
