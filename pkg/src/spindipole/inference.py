"""
Estimators and fits on measurement records.

Parity and witness estimates carry projection-noise (multinomial)
standard errors; derived quantities use first-order error propagation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, least_squares


# --- parity ----------------------------------------------------------------------

@dataclass(frozen=True)
class ParityEstimate:
    value: float
    sigma: float
    N: int

    def __post_init__(self):
        if abs(self.value) > 1 + 1e-12 or self.sigma < 0:
            raise ValueError("parity must lie in [-1, 1] with non-negative sigma")


def _counts(rec) -> np.ndarray:
    c = np.array([rec.n_UU, rec.n_DD, rec.n_ONE], dtype=float)
    if np.any(c < 0):
        raise ValueError("negative counts")
    return c


def estimate_parity(records) -> ParityEstimate:
    """Parity (n_UU + n_DD - n_ONE)/N, pooling interleaved cells with their init sign.

    ``records`` is one record or a list; each contributes ``init_sign``
    times its parity, weighted by its shot count.
    """
    if not isinstance(records, (list, tuple)):
        records = [records]
    N = 0
    num = 0.0
    var = 0.0
    for rec in records:
        c = _counts(rec)
        n = c.sum()
        if n == 0:
            continue
        p = (c[0] + c[1] - c[2]) / n
        s = getattr(rec, "init_sign", 1)
        N += int(n)
        num += s * n * p
        var += n * (1.0 - p * p)
    if N == 0:
        raise ValueError("cannot estimate parity from an empty record")
    return ParityEstimate(float(num / N), float(math.sqrt(max(var, 0.0)) / N), N)


def bootstrap_parity(records, n_boot: int, rng: np.random.Generator) -> float:
    """Parametric-bootstrap standard error of :func:`estimate_parity`."""
    if not isinstance(records, (list, tuple)):
        records = [records]
    vals = np.zeros(n_boot)
    total = 0
    for rec in records:
        c = _counts(rec)
        n = int(c.sum())
        if n == 0:
            continue
        draws = rng.multinomial(n, c / n, size=n_boot)
        vals += getattr(rec, "init_sign", 1) * (draws[:, 0] + draws[:, 1] - draws[:, 2])
        total += n
    return float(np.std(vals / total, ddof=1))


# --- fits ----------------------------------------------------------------------

@dataclass
class FitResult:
    params: dict[str, float]
    errors: dict[str, float]
    rss: float
    dof: int
    flags: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        if any(not (e >= 0) for e in self.errors.values() if not math.isnan(e)):
            raise ValueError("standard errors must be non-negative")

    def __getitem__(self, key: str) -> float:
        return self.params[key]

    def error(self, key: str) -> float:
        return self.errors[key]


def _linear_fit(X: np.ndarray, y: np.ndarray, sigma=None):
    """Weighted least squares; absolute errors if ``sigma`` is given, else scaled by residuals."""
    n, k = X.shape
    w = np.ones(n) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    if np.any(~np.isfinite(w)):
        raise ValueError("sigma must be positive")
    Xw, yw = X * w[:, None], y * w
    # absolute tolerance: a grid whose columns vanish to rounding is still degenerate
    if np.linalg.matrix_rank(X, tol=1e-9 * math.sqrt(n)) < k:
        raise ValueError("rank-deficient design: the grid does not determine the parameters")
    beta, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    resid = yw - Xw @ beta
    rss = float(resid @ resid)
    dof = n - k
    cov = np.linalg.inv(Xw.T @ Xw)
    if sigma is None:
        cov = cov * (rss / dof if dof > 0 else np.nan)
    return beta, cov, float(np.sum((y - X @ beta) ** 2)), dof


def fit_fringe(phi, parity, sigma=None, quadrature: str = "sin",
               offset: bool = False) -> FitResult:
    """Least-squares ``A sin(phi)`` (or ``A cos(phi)``), optionally plus a constant."""
    phi = np.asarray(phi, dtype=float)
    y = np.asarray(parity, dtype=float)
    if len(np.unique(np.round(phi, 12))) < 3:
        raise ValueError("need at least 3 distinct phase values")
    basis = {"sin": np.sin, "cos": np.cos}[quadrature](phi)
    cols = [basis] + ([np.ones_like(phi)] if offset else [])
    beta, cov, rss, dof = _linear_fit(np.column_stack(cols), y, sigma)
    params = {"A": float(beta[0])}
    errors = {"A": float(math.sqrt(cov[0, 0]))}
    if offset:
        params["offset"], errors["offset"] = float(beta[1]), float(math.sqrt(cov[1, 1]))
    return FitResult(params, errors, rss, dof)


def visibility_from_fringe(estimates: Sequence[ParityEstimate], phi,
                           quadrature: str = "sin") -> FitResult:
    """Fringe amplitude from parity estimates on a ``phi`` grid, weighted by their sigmas."""
    vals = np.array([e.value for e in estimates])
    sig = np.array([e.sigma for e in estimates])
    if np.any(sig <= 0):
        sig = None  # degenerate projection noise: fall back to residual scaling
    return fit_fringe(phi, vals, sig, quadrature)


def visibility_model(T, xi: float, gamma=0.0):
    """Parity visibility after ``T`` of flip-flop rotation (rate 4 xi) under dephasing.

    The {ud, du} Bloch vector starts at the pole and turns about x while
    its transverse part decays at ``gamma`` (1/s). Reduces to
    ``sin(4 xi T)`` without dephasing.
    """
    T = np.asarray(T, dtype=float)
    g = np.broadcast_to(np.asarray(gamma, dtype=float), T.shape)
    W = 4.0 * xi
    disc = W * W - 0.25 * g * g
    root = np.sqrt(np.abs(disc))
    with np.errstate(invalid="ignore", divide="ignore"):
        osc = np.where(root > 0, np.sin(root * T) / np.where(root > 0, root, 1.0), T)
        over = np.where(root > 0, np.sinh(root * T) / np.where(root > 0, root, 1.0), T)
    out = W * np.exp(-0.5 * g * T) * np.where(disc >= 0, osc, over)
    return out if out.ndim else float(out)


def _first_peak(T: float, gamma: float) -> float:
    """Coupling at which the visibility at fixed ``T`` is largest (first branch)."""
    top = math.pi / (8.0 * T)
    grid = np.linspace(0.0, 2.0 * top, 4001)
    return float(grid[int(np.argmax(visibility_model(T, grid, gamma)))]) if gamma > 0 else top


def fit_coupling_from_fringe(A, alpha: float, T: float, sigma_A: float | None = None,
                             gamma: float = 0.0) -> FitResult:
    """Invert ``A = alpha * visibility_model(T, xi, gamma)`` on its first branch; ``xi`` in rad/s.

    With ``gamma = 0`` this is ``xi = arcsin(A / alpha) / (4 T)``.
    """
    if isinstance(A, FitResult):
        A, sigma_A = A["A"], A.error("A")
    if alpha <= 0 or T <= 0:
        raise ValueError("alpha and T must be positive")
    r = A / alpha
    if gamma == 0:
        if abs(r) > 1:
            raise ValueError(f"|A/alpha| = {abs(r):.3g} > 1 is unphysical")
        xi = math.asin(r) / (4.0 * T)
        slope = 1.0 / (alpha * 4.0 * T * math.sqrt(1.0 - r * r)) if abs(r) < 1 else math.inf
    else:
        top = _first_peak(T, gamma)
        vmax = visibility_model(T, top, gamma)
        if abs(r) > vmax:
            raise ValueError(f"|A/alpha| = {abs(r):.3g} exceeds the largest reachable visibility {vmax:.3g}")
        if r == 0:
            xi = 0.0
        else:
            xi = math.copysign(brentq(lambda x: visibility_model(T, x, gamma) - abs(r), 0.0, top,
                                      xtol=1e-16, rtol=1e-14), r)
        h = 1e-7 * max(abs(xi), top)
        deriv = (visibility_model(T, abs(xi) + h, gamma) - visibility_model(T, abs(xi) - h, gamma)) / (2 * h)
        slope = 1.0 / (alpha * deriv) if deriv > 0 else math.inf
    err = math.nan if sigma_A is None else abs(slope) * sigma_A
    return FitResult({"xi": xi}, {"xi": err}, 0.0, 0)


def _alpha_values(alpha, Ts):
    return np.asarray(alpha(Ts) if callable(alpha) else np.broadcast_to(alpha, Ts.shape), dtype=float)


def fit_visibility_vs_time(T, V, alpha, sigma=None, gamma=0.0,
                           xi_max: float = 2 * math.pi * 5e-3) -> FitResult:
    """One-parameter least squares of ``V(T) = alpha(T) * visibility_model(T, xi, gamma)``.

    ``alpha`` (and ``gamma``) may be scalars, arrays or callables of T.
    The start value comes from a grid scan over ``[0, xi_max]`` (the
    model is multimodal in ``xi``); Levenberg-Marquardt refines it. A
    single point is inverted exactly.
    """
    T = np.asarray(T, dtype=float)
    V = np.asarray(V, dtype=float)
    if len(T) < 1:
        raise ValueError("need at least one point")
    a = _alpha_values(alpha, T)
    g = _alpha_values(gamma, T)
    if len(T) == 1:
        return fit_coupling_from_fringe(V[0], a[0], T[0], None if sigma is None else np.atleast_1d(sigma)[0],
                                        float(g[0]))
    w = np.ones_like(T) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)

    def resid(p):
        return w * (a * visibility_model(T, p[0], g) - V)

    grid = np.linspace(0.0, xi_max, 2001)
    cost = [np.sum(resid([x]) ** 2) for x in grid]
    x0 = grid[int(np.argmin(cost))]
    sol = least_squares(resid, [x0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    J = sol.jac
    dof = len(T) - 1
    rss_w = float(np.sum(sol.fun ** 2))
    cov = np.linalg.inv(J.T @ J) if np.any(J) else np.full((1, 1), np.inf)
    if sigma is None:
        cov = cov * rss_w / dof
    rss = float(np.sum((a * visibility_model(T, sol.x[0], g) - V) ** 2))
    return FitResult({"xi": float(sol.x[0])}, {"xi": float(math.sqrt(cov[0, 0]))}, rss, dof)


def fit_power_law(d, xi, sigma=None) -> FitResult:
    """Regress ``log xi`` on ``log d``: ``xi = C d^-n``. Returns ``n`` and ``C``.

    Non-positive ``xi`` values are dropped with a warning.
    """
    d = np.asarray(d, dtype=float)
    xi = np.asarray(xi, dtype=float)
    sig = None if sigma is None else np.asarray(sigma, dtype=float)
    keep = xi > 0
    if not np.all(keep):
        warnings.warn(f"excluding {int(np.sum(~keep))} non-positive coupling estimate(s)", RuntimeWarning)
        d, xi = d[keep], xi[keep]
        sig = None if sig is None else sig[keep]
    if len(np.unique(d)) < 3:
        raise ValueError("need at least 3 distinct distances")
    X = np.column_stack([np.ones_like(d), -np.log(d)])
    beta, cov, _, dof = _linear_fit(X, np.log(xi), None if sig is None else sig / xi)
    logC, n = beta
    rss = float(np.sum((np.exp(logC) * d ** -n - xi) ** 2))
    C = math.exp(logC)
    return FitResult({"n": float(n), "C": C},
                     {"n": float(math.sqrt(cov[1, 1])), "C": float(C * math.sqrt(cov[0, 0]))}, rss, dof)


def fit_coherence_time(T, A, sigma=None) -> FitResult:
    """Fit ``A(T) = A0 exp(-T/tau)``.

    Two points are inverted exactly. Data that do not decay give
    ``tau = inf`` with the ``lower_bound`` flag set.
    """
    T = np.asarray(T, dtype=float)
    A = np.asarray(A, dtype=float)
    if len(T) < 2 or len(np.unique(T)) < 2:
        raise ValueError("need at least 2 distinct times")
    if np.any(A <= 0):
        raise ValueError("amplitudes must be positive")
    slope = np.polyfit(T, np.log(A), 1)[0]
    if slope >= 0 or np.ptp(np.log(A)) < 1e-12:
        A0 = float(np.mean(A))
        return FitResult({"tau": math.inf, "A0": A0}, {"tau": math.nan, "A0": math.nan}, 0.0,
                         len(T) - 1, {"lower_bound": True})
    if len(T) == 2:
        i, j = np.argsort(T)
        dT = T[j] - T[i]
        L = math.log(A[i] / A[j])
        tau = dT / L
        A0 = A[i] * math.exp(T[i] / tau)
        errs = {"tau": math.nan, "A0": math.nan}
        if sigma is not None:
            s = np.asarray(sigma, dtype=float)
            dL = math.hypot(s[i] / A[i], s[j] / A[j])
            errs["tau"] = tau * dL / L
        return FitResult({"tau": tau, "A0": float(A0)}, errs, 0.0, 0, {"lower_bound": False})
    w = np.ones_like(T) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)

    def resid(p):
        return w * (p[0] * np.exp(-T * p[1]) - A)

    p0 = [math.exp(np.polyfit(T, np.log(A), 1)[1]), -slope]
    sol = least_squares(resid, p0, method="lm", xtol=1e-14, ftol=1e-14)
    A0, rate = sol.x
    J = sol.jac
    cov = np.linalg.inv(J.T @ J)
    dof = len(T) - 2
    if sigma is None:
        cov = cov * float(np.sum(sol.fun ** 2)) / dof
    if rate <= 0:
        return FitResult({"tau": math.inf, "A0": float(A0)}, {"tau": math.nan, "A0": math.nan}, 0.0,
                         dof, {"lower_bound": True})
    tau = 1.0 / rate
    rss = float(np.sum((A0 * np.exp(-T * rate) - A) ** 2))
    return FitResult({"tau": tau, "A0": float(A0)},
                     {"tau": float(math.sqrt(cov[1, 1]) / rate**2), "A0": float(math.sqrt(cov[0, 0]))},
                     rss, dof, {"lower_bound": False})


# --- witness ---------------------------------------------------------------------

@dataclass
class WitnessEstimate:
    value: float
    sigma: float
    mle_value: float | None = None
    mle_sigma: float | None = None
    populations: float = math.nan  # P_UU + P_DD
    visibility: float = math.nan
    boundary: bool = False

    def __post_init__(self):
        if self.value < -1 - 1e-12 or (self.mle_value is not None and self.mle_value < -1 - 1e-12):
            raise ValueError("swap expectation cannot be below -1")

    @property
    def entangled(self) -> bool:
        return self.value < 0


def swap_witness(populations, V: float, sigma_V: float = 0.0) -> WitnessEstimate:
    """``<S> = P_UU + P_DD - V`` from a population record (or probability) and a visibility."""
    if not 0.0 <= V <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    if hasattr(populations, "n_UU"):
        c = _counts(populations)
        N = c.sum()
        if N == 0:
            raise ValueError("empty record")
        P = (c[0] + c[1]) / N
        var_P = P * (1 - P) / N
    else:
        P, var_P = float(populations), 0.0
    value = P - V
    return WitnessEstimate(float(value), float(math.sqrt(var_P + sigma_V**2)),
                           populations=float(P), visibility=float(V))


@dataclass
class MLEResult:
    """Detection-corrected (UU, DD, ONE) probabilities with delta-method covariance."""

    p: np.ndarray
    cov: np.ndarray
    boundary: bool
    loglik: float


def _loglik(n, q):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(n > 0, n * np.log(q), 0.0)
    return float(np.sum(terms))


def mle_correct(counts, confusion: np.ndarray, tol: float = 1e-13, max_iter: int = 100000) -> MLEResult:
    """Maximum-likelihood true class probabilities given observed counts.

    Observed classes follow ``confusion @ p``. The unconstrained maximum
    is ``C^-1 n / N``; if that leaves the simplex, expectation-maximization
    finds the constrained maximum, which then lies on the simplex boundary.
    """
    n = np.asarray(counts.counts if hasattr(counts, "counts") else counts, dtype=float)
    C = np.asarray(confusion, dtype=float)
    N = n.sum()
    if N <= 0:
        raise ValueError("empty record")
    if np.linalg.cond(C) > 1e12:
        raise ValueError("confusion matrix is not invertible")
    Cinv = np.linalg.inv(C)
    p = Cinv @ (n / N)
    boundary = bool(np.any(p < 0))
    if boundary:
        p = np.full(3, 1.0 / 3)
        for _ in range(max_iter):
            q = C @ p
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(n > 0, n / q, 0.0)
            new = p * (C.T @ ratio) / N
            if np.max(np.abs(new - p)) < tol:
                p = new
                break
            p = new
    p = np.clip(p, 0.0, None)
    p /= p.sum()
    q = C @ p
    cov = Cinv @ ((np.diag(q) - np.outer(q, q)) / N) @ Cinv.T
    return MLEResult(p, cov, boundary, _loglik(n, q))


def mle_parity(records, confusion) -> tuple[float, float, bool]:
    """Detection-corrected parity 2 (p_UU + p_DD) - 1 pooled over interleaved cells."""
    if not isinstance(records, (list, tuple)):
        records = [records]
    g = np.array([2.0, 2.0, 0.0])
    num = var = 0.0
    N = 0
    boundary = False
    for rec in records:
        r = mle_correct(rec, confusion)
        n = rec.n_UU + rec.n_DD + rec.n_ONE
        s = getattr(rec, "init_sign", 1)
        num += s * n * (g @ r.p - 1.0)
        var += n * n * float(g @ r.cov @ g)
        N += n
        boundary |= r.boundary
    return num / N, math.sqrt(var) / N, boundary


def mle_witness(population_record, parity_records, confusion: np.ndarray,
                raw: WitnessEstimate | None = None) -> WitnessEstimate:
    """Swap witness with both inputs corrected for detection errors.

    ``P_UU + P_DD`` comes from the corrected populations of
    ``population_record``; the visibility is the absolute corrected parity
    of ``parity_records`` (taken at phi = pi/2).
    """
    pop = mle_correct(population_record, confusion)
    g = np.array([1.0, 1.0, 0.0])
    P = float(g @ pop.p)
    var_P = float(g @ pop.cov @ g)
    par, sig_par, b2 = mle_parity(parity_records, confusion)
    V = abs(par)
    value = P - V
    sigma = math.sqrt(var_P + sig_par**2)
    if raw is None:
        raw = swap_witness(population_record, min(1.0, abs(estimate_parity(parity_records).value)),
                           estimate_parity(parity_records).sigma)
    return WitnessEstimate(raw.value, raw.sigma, float(value), float(sigma),
                           raw.populations, raw.visibility, pop.boundary or b2)


# --- Allan deviation ---------------------------------------------------------------

@dataclass
class AllanResult:
    taus: np.ndarray  # averaging times (units of dt)
    adev: np.ndarray
    n_terms: np.ndarray


def allan_deviation(series, taus=None, dt: float = 1.0) -> AllanResult:
    """Overlapping Allan deviation of a per-shot series.

    ``taus`` are averaging times in units of ``dt`` (integers of samples);
    by default a log-spaced grid up to a quarter of the record.
    """
    y = np.asarray(series, dtype=float)
    N = len(y)
    if taus is None:
        top = max(1, N // 4)
        taus = np.unique(np.round(np.logspace(0, math.log10(top), 30)).astype(int))
    m = np.asarray(np.round(np.asarray(taus, dtype=float) / dt), dtype=int)
    if np.any(m < 1):
        raise ValueError("averaging times must be at least one sample")
    if N < 2 * m.max() + 1:
        raise ValueError(f"series of {N} samples is too short for tau = {m.max()} samples")
    S = np.concatenate([[0.0], np.cumsum(y)])
    adev = np.empty(len(m))
    n_terms = np.empty(len(m), dtype=int)
    for i, k in enumerate(m):
        d = S[2 * k:] - 2 * S[k:-k] + S[:-2 * k]
        n_terms[i] = len(d)
        adev[i] = math.sqrt(np.sum(d * d) / (2.0 * k * k * len(d)))
    return AllanResult(m * dt, adev, n_terms)


def adev_slope(result: AllanResult, tau_min=None, tau_max=None) -> float:
    """Log-log slope of the ADEV curve between ``tau_min`` and ``tau_max``."""
    sel = np.ones(len(result.taus), dtype=bool)
    if tau_min is not None:
        sel &= result.taus >= tau_min
    if tau_max is not None:
        sel &= result.taus <= tau_max
    sel &= result.adev > 0
    if sel.sum() < 2:
        raise ValueError("need at least two positive ADEV points")
    return float(np.polyfit(np.log(result.taus[sel]), np.log(result.adev[sel]), 1)[0])


def parity_series(outcomes, init_sign: int = 1) -> np.ndarray:
    """Per-shot parity contribution: +1 for UU/DD, -1 for ONE, times the init sign."""
    o = np.asarray(outcomes)
    return init_sign * np.where(o == 2, -1.0, 1.0)
