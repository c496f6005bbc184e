"""Regression pipeline: Yeo-Johnson response transform, nested model design
matrices with price-path fixed effects, OLS, and HC3 robust standard errors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import DeviationRow

PATH_LABELS = ("static", "increasing", "decreasing", "converging", "diverging")

MODEL_INTERACTIONS = {
    1: (),
    2: (("price", "theta"),),
    3: (("price", "theta"), ("ne", "history"), ("ne", "price"), ("ne", "theta")),
    4: (("price", "theta"), ("ne", "history"), ("price", "history"), ("theta", "history")),
}


class RankDeficientError(Exception):
    def __init__(self, columns: list[str]):
        super().__init__(f"design matrix is rank deficient; involved columns: {columns}")
        self.columns = columns


class LeverageError(Exception):
    pass


class ZeroVarianceResponse(Exception):
    """The response is constant (e.g. oracle agents): nothing to regress."""


# ---------------------------------------------------------------------------
# Yeo-Johnson

_EPS = 1e-8


def yeo_johnson(y, lam: float):
    """Power transform defined on the whole real line; identity at lambda=1.

    The lambda -> 0 and lambda -> 2 logarithmic limits are taken by explicit
    branch when lambda is within 1e-8 of them.
    """
    scalar = np.ndim(y) == 0
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty_like(y)
    pos = y >= 0
    if abs(lam) < _EPS:
        out[pos] = np.log1p(y[pos])
    else:
        # (y+1)^lam written via expm1/log1p to stay exact near y=0
        out[pos] = np.expm1(lam * np.log1p(y[pos])) / lam
    neg = ~pos
    if abs(lam - 2.0) < _EPS:
        out[neg] = -np.log1p(-y[neg])
    else:
        out[neg] = -np.expm1((2.0 - lam) * np.log1p(-y[neg])) / (2.0 - lam)
    if scalar:
        return float(out[0])
    return out


def yeo_johnson_loglik(values: np.ndarray, lam: float) -> float:
    """Profile log-likelihood of the transform under Gaussian errors."""
    z = yeo_johnson(values, lam)
    n = len(values)
    var = np.var(z)
    if var <= 0:
        return -np.inf
    jacobian = (lam - 1.0) * np.sum(np.sign(values) * np.log1p(np.abs(values)))
    return -n / 2.0 * math.log(var) + jacobian


def fit_lambda(values, lo: float = -5.0, hi: float = 5.0, tol: float = 1e-6) -> float:
    """Maximize the profile log-likelihood by golden-section search."""
    values = np.asarray(values, dtype=float)
    if len(values) < 3 or np.unique(values).size < 3:
        raise ValueError("need at least 3 distinct values to fit lambda")
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = yeo_johnson_loglik(values, c)
    fd = yeo_johnson_loglik(values, d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = yeo_johnson_loglik(values, c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = yeo_johnson_loglik(values, d)
    return (a + b) / 2


# ---------------------------------------------------------------------------
# Design matrices

@dataclass(frozen=True)
class RegressionSpec:
    model_id: int
    transform_lambda: float | None = None  # None -> fit from the pooled response
    baseline_path: str = "static"

    def __post_init__(self):
        if self.model_id not in MODEL_INTERACTIONS:
            raise ValueError("model_id must be 1, 2, 3, or 4")
        if self.baseline_path not in PATH_LABELS:
            raise ValueError(f"unknown baseline path {self.baseline_path!r}")


@dataclass
class FitResult:
    model_id: int
    names: list[str]
    coefficients: np.ndarray
    hc3_se: np.ndarray
    r_squared: float
    n_obs: int
    residuals: np.ndarray
    transform_lambda: float | None = None
    notes: dict = field(default_factory=dict)


def _minmax(values: np.ndarray, name: str) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        raise ValueError(f"column {name!r} is constant; cannot min-max normalize")
    return (values - lo) / (hi - lo)


def _history_level(window: int, window_levels: list[int]) -> float:
    # static cells (window 0) share the zero level with the shortest window
    if window == 0:
        return 0.0
    idx = window_levels.index(window)
    return idx / max(len(window_levels) - 1, 1)


def build_design(rows: list[DeviationRow], spec: RegressionSpec):
    """Design matrix for one nested model.

    Price and theta are min-max normalized over the sample; the network-effect
    dummy is 1 for the stronger beta level; history windows map onto
    {0, 0.5, 1}; path fixed effects are dummies against the baseline path.
    """
    if not rows:
        raise ValueError("no rows")
    unknown = {r.trajectory_kind for r in rows} - set(PATH_LABELS)
    if unknown:
        raise ValueError(f"unknown path labels: {sorted(unknown)}")

    betas = sorted({r.beta_level for r in rows})
    strong_beta = betas[-1]
    window_levels = sorted({r.window_length for r in rows if r.window_length > 0})
    if len(window_levels) > 3:
        raise ValueError(f"expected at most 3 window levels, got {window_levels}")

    price = _minmax(np.array([r.price for r in rows]), "price")
    theta = _minmax(np.array([r.theta for r in rows]), "theta")
    ne = np.array([1.0 if r.beta_level == strong_beta else 0.0 for r in rows])
    history = np.array([_history_level(r.window_length, window_levels) for r in rows])
    y = np.array([r.deviation for r in rows])

    base = {"price": price, "ne": ne, "theta": theta, "history": history}
    columns = [np.ones(len(rows))]
    names = ["intercept", "price", "ne", "theta", "history"]
    columns += [base["price"], base["ne"], base["theta"], base["history"]]
    for a, b in MODEL_INTERACTIONS[spec.model_id]:
        names.append(f"{a}:{b}")
        columns.append(base[a] * base[b])
    present_paths = {r.trajectory_kind for r in rows}
    for label in PATH_LABELS:
        if label == spec.baseline_path or label not in present_paths:
            continue
        names.append(f"path[{label}]")
        columns.append(np.array([1.0 if r.trajectory_kind == label else 0.0 for r in rows]))
    X = np.column_stack(columns)
    return X, y, names


# ---------------------------------------------------------------------------
# OLS with HC3 covariance

def ols_hc3(X: np.ndarray, y: np.ndarray, names: list[str] | None = None, model_id: int = 0) -> FitResult:
    """Least squares via QR; HC3 sandwich covariance for the standard errors."""
    n, p = X.shape
    if n <= p:
        raise ValueError(f"need more observations ({n}) than columns ({p})")
    names = names or [f"x{i}" for i in range(p)]
    rank = np.linalg.matrix_rank(X)
    if rank < p:
        raise RankDeficientError(_collinear_columns(X, names))

    q, r = np.linalg.qr(X)
    beta = np.linalg.solve(r, q.T @ y)
    fitted = X @ beta
    resid = y - fitted

    h = np.sum(q * q, axis=1)  # hat-matrix diagonal
    if np.any(h >= 1.0 - 1e-12):
        raise LeverageError("hat-matrix diagonal reaches 1; HC3 weights undefined")
    omega = (resid / (1.0 - h)) ** 2
    r_inv = np.linalg.inv(r)
    xtx_inv = r_inv @ r_inv.T
    meat = X.T @ (omega[:, None] * X)
    cov = xtx_inv @ meat @ xtx_inv
    se = np.sqrt(np.diag(cov))

    sst = np.sum((y - y.mean()) ** 2)
    ssr = np.sum(resid**2)
    r2 = 1.0 - ssr / sst if sst > 0 else float("nan")

    return FitResult(
        model_id=model_id,
        names=list(names),
        coefficients=beta,
        hc3_se=se,
        r_squared=r2,
        n_obs=n,
        residuals=resid,
    )


def _collinear_columns(X: np.ndarray, names: list[str]) -> list[str]:
    """Name every column involved in an exact linear dependency."""
    involved = []
    for j in range(X.shape[1]):
        others = np.delete(X, j, axis=1)
        if np.linalg.matrix_rank(others) == np.linalg.matrix_rank(X):
            involved.append(names[j])
    return involved or list(names)


def run_models(
    rows: list[DeviationRow],
    transform_lambda: float | None = None,
    baseline_path: str = "static",
) -> list[FitResult]:
    """Fit the four nested models under one pooled response transform."""
    y_raw = np.array([r.deviation for r in rows])
    if np.all(y_raw == y_raw[0]):
        raise ZeroVarianceResponse(
            f"response is constant at {y_raw[0]} (oracle data?); regression skipped"
        )
    lam = transform_lambda if transform_lambda is not None else fit_lambda(y_raw)
    results = []
    for model_id in (1, 2, 3, 4):
        spec = RegressionSpec(model_id=model_id, transform_lambda=lam, baseline_path=baseline_path)
        X, y, names = build_design(rows, spec)
        fit = ols_hc3(X, yeo_johnson(y, lam), names, model_id=model_id)
        fit.transform_lambda = lam
        fit.notes = {
            "normalization": "price and theta min-max scaled to [0,1] over the sample",
            "history_coding": "window levels mapped to {0, 0.5, 1}; static shares 0",
            "baseline_path": baseline_path,
            "lambda_source": "fitted pooled" if transform_lambda is None else "given",
        }
        results.append(fit)
    return results


# ---------------------------------------------------------------------------
# Presentation

def _stars(coef: float, se: float) -> str:
    if se == 0:
        return ""
    z = abs(coef / se)
    if z > 2.5758293035489004:  # p < 0.01, normal approximation
        return "***"
    if z > 1.959963984540054:  # p < 0.05
        return "**"
    return ""


def write_fits_csv(fits: list[FitResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "term", "coefficient", "hc3_se", "stars"])
        for fit in fits:
            for name, coef, se in zip(fit.names, fit.coefficients, fit.hc3_se):
                writer.writerow([fit.model_id, name, repr(coef), repr(se), _stars(coef, se)])
            writer.writerow([fit.model_id, "_r_squared", repr(fit.r_squared), "", ""])
            writer.writerow([fit.model_id, "_n_obs", fit.n_obs, "", ""])
            writer.writerow([fit.model_id, "_lambda", repr(fit.transform_lambda), "", ""])


def format_comparison_table(fits: list[FitResult]) -> str:
    """Aligned text table: one column per model, coefficient with SE below."""
    all_names: list[str] = []
    for fit in fits:
        for name in fit.names:
            if name not in all_names:
                all_names.append(name)
    by_model = {fit.model_id: dict(zip(fit.names, zip(fit.coefficients, fit.hc3_se))) for fit in fits}
    width = 18
    header = f"{'term':<18}" + "".join(f"{'Model ' + str(f.model_id):>{width}}" for f in fits)
    lines = [header, "-" * len(header)]
    for name in all_names:
        coef_cells, se_cells = [], []
        for fit in fits:
            entry = by_model[fit.model_id].get(name)
            if entry is None:
                coef_cells.append(f"{'---':>{width}}")
                se_cells.append(f"{'':>{width}}")
            else:
                coef, se = entry
                coef_cells.append(f"{coef:>{width - len(_stars(coef, se))}.3f}{_stars(coef, se)}")
                se_cells.append(f"{'(' + format(se, '.3f') + ')':>{width}}")
        lines.append(f"{name:<18}" + "".join(coef_cells))
        lines.append(f"{'':<18}" + "".join(se_cells))
    lines.append("-" * len(header))
    lines.append(f"{'n_obs':<18}" + "".join(f"{f.n_obs:>{width}}" for f in fits))
    lines.append(f"{'R^2':<18}" + "".join(f"{f.r_squared:>{width}.3f}" for f in fits))
    lines.append(f"{'lambda':<18}" + "".join(f"{f.transform_lambda:>{width}.4f}" for f in fits))
    lines.append("HC3 robust SEs in parentheses; *** p<0.01, ** p<0.05 (normal approx).")
    return "\n".join(lines)
