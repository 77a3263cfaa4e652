"""Least squares with full inference, AIC, stepwise predictor selection, and
the distribution survival functions backing every p-value in the toolkit.

The survival functions are self-contained (series / continued-fraction
evaluations of the regularized incomplete gamma and beta integrals) so that
results do not depend on an external stats stack.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, RankDeficiencyError

__all__ = [
    "DesignMatrix",
    "OlsFit",
    "StepwiseResult",
    "chi2_sf",
    "design_matrix",
    "destandardize_coefficients",
    "f_sf",
    "format_fit_table",
    "gaussian_aic",
    "normal_sf",
    "ols",
    "regularized_incomplete_beta",
    "regularized_upper_gamma",
    "significance_stars",
    "standardize",
    "stepwise",
    "student_t_sf",
    "subset_design",
]

_MAX_ITER = 500
_CONV_EPS = 3e-15
_TINY = 1e-300

# Rank tolerance for the QR diagonal, relative to the largest column norm.
_RANK_RTOL = 1e-10


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CONV_EPS:
            return h
    raise NumericalError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), the regularized incomplete beta integral on [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("shape parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # Symmetry transform keeps the continued fraction in its fast-converging zone.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _lower_gamma_series(a: float, x: float) -> float:
    """P(a, x) by power series; use for x < a + 1."""
    term = 1.0 / a
    total = term
    denom = a
    for _ in range(_MAX_ITER):
        denom += 1.0
        term *= x / denom
        total += term
        if abs(term) < abs(total) * _CONV_EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise NumericalError(f"incomplete gamma series did not converge (a={a}, x={x})")


def _upper_gamma_cf(a: float, x: float) -> float:
    """Q(a, x) by continued fraction (modified Lentz); use for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CONV_EPS:
            return h * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise NumericalError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")


def regularized_upper_gamma(a: float, x: float) -> float:
    """Q(a, x) = 1 - P(a, x), the upper regularized incomplete gamma."""
    if a <= 0.0:
        raise ValueError("shape parameter must be positive")
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _lower_gamma_series(a, x)
    return _upper_gamma_cf(a, x)


def chi2_sf(x: float, df: int = 1) -> float:
    """Survival function of the chi-squared distribution."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if x <= 0.0:
        return 1.0
    return regularized_upper_gamma(df / 2.0, x / 2.0)


def student_t_sf(t: float, df: int) -> float:
    """Survival function of Student's t. Exactly 0.5 at t = 0."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if t == 0.0:
        return 0.5
    if t < 0.0:
        return 1.0 - student_t_sf(-t, df)
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x)


def normal_sf(z: float) -> float:
    """Survival function of the standard normal."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def f_sf(f: float, df1: int, df2: int) -> float:
    """Survival function of the F distribution."""
    if df1 < 1 or df2 < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if f <= 0.0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


# ---------------------------------------------------------------------------
# Design matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignMatrix:
    """Regression design: leading intercept column plus named predictors."""

    names: tuple[str, ...]
    X: np.ndarray  # shape (n, k+1); column 0 is the intercept
    y: np.ndarray  # shape (n,)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return len(self.names)


def design_matrix(names: "list[str] | tuple[str, ...]", columns, y) -> DesignMatrix:
    """Build and validate a DesignMatrix from predictor columns and a response.

    `columns` is (n, k) without the intercept; the intercept is prepended here.
    Rejects non-finite values, constant predictor columns, duplicate names, and
    designs with too few observations (n must exceed k + 1).
    """
    names = tuple(names)
    y = np.asarray(y, dtype=float)
    cols = np.asarray(columns, dtype=float)
    if cols.ndim == 1:
        cols = cols.reshape(-1, 1) if len(names) == 1 else cols.reshape(len(y), -1)
    if cols.shape != (len(y), len(names)):
        raise ValueError(f"columns shape {cols.shape} does not match {len(y)} rows x {len(names)} names")
    if len(set(names)) != len(names):
        raise ValueError("duplicate predictor names")
    if not np.all(np.isfinite(cols)) or not np.all(np.isfinite(y)):
        raise ValueError("design contains non-finite values")
    n = len(y)
    if n <= len(names) + 1:
        raise ValueError(f"need more than {len(names) + 1} observations, got {n}")
    for j, name in enumerate(names):
        if cols[:, j].max() == cols[:, j].min():
            raise ValueError(f"predictor '{name}' is constant")
    X = np.column_stack([np.ones(n), cols]) if names else np.ones((n, 1))
    return DesignMatrix(names=names, X=X, y=y)


def subset_design(d: DesignMatrix, keep: "set[str] | list[str] | tuple[str, ...]") -> DesignMatrix:
    """Design restricted to `keep` predictors, preserving original column order."""
    keep = set(keep)
    unknown = keep - set(d.names)
    if unknown:
        raise KeyError(f"unknown predictors: {sorted(unknown)}")
    idx = [0] + [i + 1 for i, name in enumerate(d.names) if name in keep]
    names = tuple(name for name in d.names if name in keep)
    return DesignMatrix(names=names, X=d.X[:, idx], y=d.y)


def standardize(d: DesignMatrix) -> tuple[DesignMatrix, np.ndarray, np.ndarray]:
    """Center and scale every predictor column to mean 0, sd 1 (n-1 divisor).

    Returns the transformed design plus the (means, sds) needed to map
    coefficients back to the raw scale; the intercept column is untouched.
    """
    if d.k == 0:
        return d, np.array([]), np.array([])
    cols = d.X[:, 1:]
    means = cols.mean(axis=0)
    sds = cols.std(axis=0, ddof=1)
    zero = np.nonzero(sds == 0.0)[0]
    if zero.size:
        raise ValueError(f"predictor '{d.names[int(zero[0])]}' has zero variance")
    X = np.column_stack([np.ones(d.n), (cols - means) / sds])
    return DesignMatrix(names=d.names, X=X, y=d.y), means, sds


def destandardize_coefficients(beta: np.ndarray, means: np.ndarray, sds: np.ndarray) -> np.ndarray:
    """Map coefficients fitted on a standardized design back to the raw scale."""
    beta = np.asarray(beta, dtype=float)
    slopes = beta[1:] / sds
    intercept = beta[0] - float(slopes @ means)
    return np.concatenate([[intercept], slopes])


# ---------------------------------------------------------------------------
# Ordinary least squares
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OlsFit:
    """OLS estimates with the usual inference battery."""

    names: tuple[str, ...]          # predictor names; beta[0] is the intercept
    beta: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    r2: float
    adj_r2: float
    f_stat: float
    f_p: float
    aic: float
    rss: float
    residuals: np.ndarray
    n: int
    df_resid: int


def gaussian_aic(rss: float, n_obs: int, n_predictors: int) -> float:
    """AIC under a Gaussian likelihood with estimated variance.

    Parameter count is n_predictors + 1 coefficients plus the variance:
    AIC = n ln(2 pi) + n ln(RSS / n) + n + 2 (n_predictors + 2).
    rss = 0 yields a -inf sentinel with a RuntimeWarning.
    """
    if rss < 0.0:
        raise ValueError("rss must be nonnegative")
    if rss == 0.0:
        warnings.warn("residual sum of squares is zero; AIC sentinel -inf", RuntimeWarning, stacklevel=2)
        return float("-inf")
    return (
        n_obs * math.log(2.0 * math.pi)
        + n_obs * math.log(rss / n_obs)
        + n_obs
        + 2.0 * (n_predictors + 2)
    )


def _qr_rank_checked(d: DesignMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with a tolerance-based rank check naming the offending column."""
    Q, R = np.linalg.qr(d.X)
    tol = _RANK_RTOL * float(np.linalg.norm(d.X, axis=0).max())
    diag = np.abs(np.diag(R))
    bad = np.nonzero(diag < tol)[0]
    if bad.size:
        i = int(bad[0])
        col = "intercept" if i == 0 else d.names[i - 1]
        raise RankDeficiencyError(f"design matrix is rank deficient at column '{col}'")
    return Q, R


def _rss_and_aic(d: DesignMatrix) -> float:
    """AIC of the least-squares fit; shares the QR route with ols()."""
    Q, R = _qr_rank_checked(d)
    beta = np.linalg.solve(R, Q.T @ d.y)
    resid = d.y - d.X @ beta
    return gaussian_aic(float(resid @ resid), d.n, d.k)


def ols(d: DesignMatrix) -> OlsFit:
    """Least squares via QR with standard errors, t/p, R2, F, and AIC.

    p-values are two-sided against Student's t with n - k - 1 degrees of
    freedom. Raises RankDeficiencyError when a column is (numerically)
    collinear with its predecessors.
    """
    Q, R = _qr_rank_checked(d)
    n, p_cols = d.X.shape
    beta = np.linalg.solve(R, Q.T @ d.y)
    fitted = d.X @ beta
    residuals = d.y - fitted
    rss = float(residuals @ residuals)
    dof = n - p_cols
    sigma2 = rss / dof
    r_inv = np.linalg.solve(R, np.eye(p_cols))
    xtx_inv_diag = (r_inv * r_inv).sum(axis=1)
    se = np.sqrt(sigma2 * xtx_inv_diag)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0.0, beta / np.where(se > 0.0, se, 1.0), np.where(beta == 0.0, 0.0, np.inf * np.sign(beta)))
    p = np.array([2.0 * student_t_sf(abs(float(ti)), dof) for ti in t])
    tss = float(((d.y - d.y.mean()) ** 2).sum())
    r2 = 1.0 if tss == 0.0 else 1.0 - rss / tss
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / dof
    k = d.k
    if k == 0:
        f_stat, f_p = 0.0, 1.0
    elif rss == 0.0 or tss == 0.0:
        f_stat, f_p = float("inf"), 0.0
    else:
        f_stat = max(0.0, (tss - rss) / k / sigma2)
        f_p = f_sf(f_stat, k, dof)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        aic = gaussian_aic(rss, n, k)
    return OlsFit(
        names=d.names,
        beta=beta,
        se=se,
        t=t,
        p=p,
        r2=r2,
        adj_r2=adj_r2,
        f_stat=f_stat,
        f_p=f_p,
        aic=aic,
        rss=rss,
        residuals=residuals,
        n=n,
        df_resid=dof,
    )


# ---------------------------------------------------------------------------
# Stepwise selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepwiseResult:
    """Greedy AIC search outcome: selected set, final fit, and the move trace."""

    selected: tuple[str, ...]
    fit: OlsFit
    trace: tuple[tuple[int, str, str, float], ...]  # (step, action, name, aic)
    start_aic: float


def _best_move(candidates: "list[tuple[float, str, str, set[str]]]"):
    """Lowest-AIC candidate; exact ties resolve by predictor name, never by
    the order candidates were produced in."""
    return min(candidates, key=lambda c: (c[0], c[1]))


def stepwise(d: DesignMatrix, direction: str = "both", start: str = "full") -> StepwiseResult:
    """Greedy single-move AIC minimization over predictor subsets.

    At each step every allowed add/drop of one predictor is evaluated; the
    lowest-AIC move is taken when it strictly improves the current AIC,
    otherwise the search stops. Ties are broken by lexicographic predictor
    name. The intercept is never a move candidate.
    """
    if direction not in ("backward", "forward", "both"):
        raise ValueError(f"unknown direction {direction!r}")
    if start not in ("full", "empty"):
        raise ValueError(f"unknown start {start!r}")

    current: set[str] = set(d.names) if start == "full" else set()
    current_aic = _rss_and_aic(subset_design(d, current))
    start_aic = current_aic
    trace: list[tuple[int, str, str, float]] = []
    step = 0
    while True:
        candidates: list[tuple[float, str, str, set[str]]] = []
        if direction in ("backward", "both"):
            for name in d.names:
                if name in current:
                    after = current - {name}
                    candidates.append((_rss_and_aic(subset_design(d, after)), name, "drop", after))
        if direction in ("forward", "both"):
            for name in d.names:
                if name not in current:
                    after = current | {name}
                    candidates.append((_rss_and_aic(subset_design(d, after)), name, "add", after))
        if not candidates:
            break
        best_aic, best_name, best_action, best_set = _best_move(candidates)
        if best_aic >= current_aic:
            break
        step += 1
        current, current_aic = best_set, best_aic
        trace.append((step, best_action, best_name, best_aic))

    selected = tuple(name for name in d.names if name in current)
    return StepwiseResult(
        selected=selected,
        fit=ols(subset_design(d, current)),
        trace=tuple(trace),
        start_aic=start_aic,
    )


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def significance_stars(p: float) -> str:
    """Stars at the 10/5/1% levels."""
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def format_fit_table(fit: OlsFit, title: str = "OLS fit") -> str:
    """Plain-text coefficient table: estimate with stars, SE in parentheses."""
    rows = [("intercept", fit.beta[0], fit.se[0], fit.p[0])]
    rows += [
        (name, fit.beta[i + 1], fit.se[i + 1], fit.p[i + 1])
        for i, name in enumerate(fit.names)
    ]
    width = max(len("Prob (F-statistic)"), max(len(r[0]) for r in rows))
    rule = "=" * (width + 22)
    lines = [title, rule]
    for name, b, s, p in rows:
        lines.append(f"{name:<{width}}  {b: .4f}{significance_stars(p):<3} ({s:.4f})")
    lines.append("-" * (width + 22))
    f_p_text = "<0.0001" if fit.f_p < 1e-4 else f"{fit.f_p:.4f}"
    lines.append(f"{'R-squared':<{width}}   {fit.r2:.4f}")
    lines.append(f"{'Adj. R-squared':<{width}}   {fit.adj_r2:.4f}")
    lines.append(f"{'Prob (F-statistic)':<{width}}   {f_p_text}")
    lines.append(f"{'AIC':<{width}}   {fit.aic:.1f}")
    lines.append(f"{'Observations':<{width}}   {fit.n}")
    lines.append("Stars: * p<0.1, ** p<0.05, *** p<0.01. Standard errors in parentheses.")
    return "\n".join(lines)
