"""Growth-model fitting and scaling laws.

The mailbox trajectory of an attack with ``F`` forms is modelled as::

    M(t) = (a * t + b) * tanh(c * t)

where ``a`` is the long-run arrival rate, ``b`` the offset built up by the
initial burst and ``1/c`` the time scale of that burst.  The three
parameters are found with a damped Gauss-Newton (Levenberg-Marquardt)
iteration using the analytic Jacobian.

Scaling relations between attack size, quota, kill time and arrival rate are
fitted by ordinary least squares in log space.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

C_MIN, C_MAX = 1e-6, 1e3
LAMBDA0 = 1e-3
MAX_ITER = 200
RTOL = 1e-10


class UnconvergedFitError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    a: float
    b: float
    c: float
    residual_norm: float = 0.0
    converged: bool = True
    iterations: int = 0

    def report_row(self, channel: str) -> list:
        return [channel, repr(self.a), repr(self.b), repr(self.c), repr(self.residual_norm),
                str(self.converged).lower(), self.iterations]


FIT_REPORT_HEADER = ["channel", "a", "b", "c", "residual", "converged", "iterations"]


def fit_report_csv(params: ModelParams, channel: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIT_REPORT_HEADER)
    w.writerow(params.report_row(channel))
    return buf.getvalue()


def eval_model(params: ModelParams, t):
    """``(a t + b) tanh(c t)`` for scalar or array ``t``."""
    t = np.asarray(t, dtype=float)
    out = (params.a * t + params.b) * np.tanh(params.c * t)
    return float(out) if out.ndim == 0 else out


def model_jacobian(a: float, b: float, c: float, t) -> np.ndarray:
    """Partials of the model w.r.t. (a, b, c); shape ``(len(t), 3)``."""
    t = np.asarray(t, dtype=float)
    th = np.tanh(c * t)
    sech2 = 1.0 - th * th
    return np.column_stack([t * th, th, (a * t + b) * t * sech2])


def _initial_guess(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    n = len(t)
    tail = slice(n - max(2, n // 3), n)
    tt, yt = t[tail], y[tail]
    if np.ptp(tt) > 0:
        a0 = float(np.polyfit(tt, yt, 1)[0])
    else:
        a0 = 0.0
    b0 = float(np.mean(yt - a0 * tt))
    half = 0.5 * (a0 * t + b0)
    above = np.flatnonzero((y > half) & (t > 0))
    if above.size:
        c0 = 2.0 / t[above[0]]
    else:
        positive = t[t > 0]
        c0 = 2.0 / float(np.median(positive)) if positive.size else 1.0
    return a0, b0, float(np.clip(c0, C_MIN, C_MAX))


def fit_tanh_model(series, channel: str = "messages", initial: ModelParams | None = None) -> ModelParams:
    """Least-squares fit of the growth model to one channel of ``series``.

    ``series`` is a :class:`~formflood.attack_sim.TimeSeries` or a ``(t, y)``
    pair.  An all-zero series is reported unconverged with ``a = b = 0``.
    """
    if isinstance(series, tuple):
        t, y = series
    else:
        t, y = series.t, series.channel(channel)
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 4:
        raise ValueError(f"need at least 4 samples to fit 3 parameters, got {len(t)}")
    if not np.any(y):
        return ModelParams(0.0, 0.0, 0.0, residual_norm=0.0, converged=False, iterations=0)

    if initial is not None:
        p = np.array([initial.a, initial.b, np.clip(initial.c, C_MIN, C_MAX)], dtype=float)
    else:
        p = np.array(_initial_guess(t, y))

    def cost(q):
        r = y - (q[0] * t + q[1]) * np.tanh(q[2] * t)
        return r, float(r @ r)

    r, S = cost(p)
    floor = 1e-28 * max(float(y @ y), 1e-300)
    lam = LAMBDA0
    converged = S <= floor
    it = 0
    while not converged and it < MAX_ITER:
        it += 1
        J = model_jacobian(*p, t)
        JTJ = J.T @ J
        g = J.T @ r
        d = np.sqrt(np.maximum(np.diag(JTJ), 1e-300))
        improved = False
        while lam <= 1e16:
            # scaled augmented system keeps the step well conditioned
            A = np.vstack([J / d, math.sqrt(lam) * np.eye(3)])
            rhs = np.concatenate([r, np.zeros(3)])
            step = np.linalg.lstsq(A, rhs, rcond=None)[0] / d
            q = p + step
            q[2] = min(max(q[2], C_MIN), C_MAX)
            r_new, S_new = cost(q)
            if np.isfinite(S_new) and S_new <= S:
                rel = (S - S_new) / S if S > 0 else 0.0
                p, r, S = q, r_new, S_new
                lam = max(lam / 10.0, 1e-12)
                improved = True
                if rel < RTOL or S <= floor:
                    converged = True
                break
            lam *= 10.0
        if not improved:
            # no descent direction left at machine precision: a stationary point
            converged = bool(np.linalg.norm(g) <= 1e-6 * (np.linalg.norm(J) * math.sqrt(S) + 1e-300)
                             or lam > 1e16)
            break

    return ModelParams(float(p[0]), float(p[1]), float(p[2]),
                       residual_norm=math.sqrt(S), converged=bool(converged), iterations=it)


def long_term_rate(params: ModelParams) -> float:
    """The stable arrival rate ``a`` of a converged fit."""
    if not params.converged:
        raise UnconvergedFitError("long-term rate of an unconverged fit is undefined")
    return params.a


# -- scaling laws ------------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    """``y = coefficient * x**exponent`` (power_law), ``coefficient * exp(rate x)``
    (exponential) or ``coefficient * x`` (linear).  ``r_squared`` is measured
    in the space the fit was made in.
    """

    kind: str
    coefficient: float
    exponent_or_rate: float
    r_squared: float
    n_points: int

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "power_law":
            return self.coefficient * x**self.exponent_or_rate
        if self.kind == "exponential":
            return self.coefficient * np.exp(self.exponent_or_rate * x)
        return self.coefficient * x

    def report_row(self) -> list:
        return [self.kind, repr(self.coefficient), repr(self.exponent_or_rate),
                repr(self.r_squared), self.n_points]


SCALING_REPORT_HEADER = ["kind", "coefficient", "exponent_or_rate", "r_squared", "n_points"]


def scaling_report_csv(fits: Sequence[ScalingFit]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCALING_REPORT_HEADER)
    for f in fits:
        w.writerow(f.report_row())
    return buf.getvalue()


def _r_squared(y, yhat) -> float:
    y = np.asarray(y, dtype=float)
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return float(min(1.0, max(0.0, 1.0 - ss_res / ss_tot)))


def _ols(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept), _r_squared(y, slope * np.asarray(x) + intercept)


def _points(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (x, y) pairs")
    if len(pts) < 2:
        raise ValueError("need at least 2 points")
    return pts[:, 0], pts[:, 1]


def fit_power_law(points) -> ScalingFit:
    x, y = _points(points)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs strictly positive coordinates")
    slope, intercept, r2 = _ols(np.log(x), np.log(y))
    return ScalingFit("power_law", math.exp(intercept), slope, r2, len(x))


def fit_exponential(points) -> ScalingFit:
    x, y = _points(points)
    if np.any(y <= 0):
        raise ValueError("exponential fit needs y > 0")
    slope, intercept, r2 = _ols(x, np.log(y))
    return ScalingFit("exponential", math.exp(intercept), slope, r2, len(x))


def fit_linear(points) -> ScalingFit:
    """Proportional fit ``y = k x`` through the origin."""
    x, y = _points(points)
    k = float(x @ y / (x @ x))
    return ScalingFit("linear", k, 1.0, _r_squared(y, k * x), len(x))


def crossing_point(kill_fit: ScalingFit, fill_rate: float) -> float:
    """Attack size at which the fitted kill time equals the attack time ``F / fill_rate``."""
    if kill_fit.kind != "power_law":
        raise ValueError("crossing needs a power-law kill-time fit")
    e = kill_fit.exponent_or_rate
    if e >= 1.0:
        return math.inf
    return (kill_fit.coefficient * fill_rate) ** (1.0 / (1.0 - e))


# -- inverse problem ---------------------------------------------------------


@dataclass(frozen=True)
class FormsToKill:
    forms: int
    extrapolated: bool


def model_kill_time(params: ModelParams, quota: float, horizon: float = 1e7) -> float:
    """First ``t`` at which the fitted trajectory reaches ``quota`` (inf if never)."""
    if not params.converged:
        return math.inf
    if quota <= 0:
        return 0.0
    # coarse geometric scan for a bracket, then bisection
    grid = np.concatenate([[0.0], np.geomspace(1e-3, horizon, 400)])
    vals = eval_model(params, grid)
    hit = np.flatnonzero(vals >= quota)
    if not hit.size:
        return math.inf
    lo, hi = grid[hit[0] - 1], grid[hit[0]]
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if eval_model(params, mid) >= quota:
            hi = mid
        else:
            lo = mid
    return float(hi)


def predicted_kill(row, quota: float, table_quota: float | None = None) -> float:
    """Mean kill time of a sweep row at ``quota``.

    Replications that were observed to reach this very quota contribute
    their measured kill time; the rest are read off their fitted trajectory.
    """
    kills = []
    for k, observed in enumerate(row.kill_times):
        if observed is not None and table_quota is not None and quota == table_quota:
            kills.append(observed)
        elif k < len(row.fits) and row.fits[k] is not None:
            kills.append(model_kill_time(row.fits[k], quota))
        else:
            kills.append(math.inf)
    return float(np.mean(kills)) if kills else math.inf


def forms_to_kill(quota: float, deadline: float, sweep_table) -> FormsToKill:
    """Smallest attack size predicted to reach ``quota`` within ``deadline`` minutes.

    Per row the mean kill time at ``quota`` comes from :func:`predicted_kill`;
    the rows are made non-increasing in F and interpolated in log-log space.
    A deadline outside the tabulated kill times is met by power-law
    extrapolation through the finite rows and flagged.  The table's fits
    must be on the channel ``quota`` is measured in.
    """
    rows = sorted(sweep_table.rows, key=lambda r: r.F)
    if len(rows) < 3:
        raise ValueError("need at least 3 sweep rows to invert the kill model")
    table_quota = getattr(sweep_table, "quota", None)
    F = np.array([r.F for r in rows], dtype=float)
    K = np.minimum.accumulate(np.array([predicted_kill(r, quota, table_quota) for r in rows]))
    finite = np.isfinite(K) & (K > 0)
    if not finite.any():
        return FormsToKill(int(F[-1]), True)
    first = int(np.flatnonzero(finite)[0])
    if math.isinf(deadline):
        return FormsToKill(int(F[first]), False)
    F, K = F[finite], K[finite]
    lf, lk = np.log(F), np.log(K)
    ld = math.log(deadline)
    if lk[-1] <= ld <= lk[0]:
        k = int(np.flatnonzero(lk <= ld)[0])
        if k == 0:
            return FormsToKill(int(F[0]), False)
        lo, hi = k - 1, k
        x = lf[hi] if lk[hi] == lk[lo] else lf[lo] + (lk[lo] - ld) * (lf[hi] - lf[lo]) / (lk[lo] - lk[hi])
        return FormsToKill(int(math.ceil(math.exp(x) - 1e-9)), False)
    if len(F) < 2:
        raise ValueError("too few rows with finite kill times to extrapolate")
    fit = fit_power_law(np.column_stack([F, K]))
    if fit.exponent_or_rate >= 0:
        raise ValueError("predicted kill time does not fall with F; cannot extrapolate")
    x = (ld - math.log(fit.coefficient)) / fit.exponent_or_rate
    return FormsToKill(int(math.ceil(math.exp(x) - 1e-9)), True)
