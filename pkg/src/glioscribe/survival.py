"""Survival statistics: Kaplan-Meier curves, log-rank test, Cox regression.

Implemented directly (no stats library) so the numbers trace to the
textbook formulas: product-limit estimator, hypergeometric-variance
log-rank, and Newton-Raphson maximization of the Breslow partial
likelihood with step halving. Chi-square and normal tail probabilities
come from math.erfc.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SurvivalRecord:
    time_days: float
    event: int                      # 1 = death observed, 0 = censored
    covariates: dict = field(default_factory=dict)
    group: str = None

    def __post_init__(self):
        if self.time_days <= 0:
            raise ValueError(f"time_days must be positive, got {self.time_days}")
        if self.event not in (0, 1):
            raise ValueError(f"event must be 0 or 1, got {self.event}")


@dataclass(frozen=True)
class KMCurve:
    times: tuple          # distinct event times, ascending
    survival: tuple       # S(t) just after each event time
    at_risk: tuple
    deaths: tuple

    def prob_at(self, t):
        """S(t); 1.0 before the first event time."""
        s = 1.0
        for ti, si in zip(self.times, self.survival):
            if ti <= t:
                s = si
            else:
                break
        return s


def km_estimate(records) -> KMCurve:
    """Product-limit estimator. Censored subjects stay in the risk set at
    their own time (deaths precede censorings at ties)."""
    if not records:
        raise ValueError("km_estimate needs at least one record")
    times = np.array([r.time_days for r in records], np.float64)
    events = np.array([r.event for r in records], np.int64)
    event_times = np.unique(times[events == 1])
    surv = []
    at_risk = []
    deaths = []
    s = 1.0
    for t in event_times:
        n = int((times >= t).sum())
        d = int(((times == t) & (events == 1)).sum())
        s *= 1.0 - d / n
        surv.append(s)
        at_risk.append(n)
        deaths.append(d)
    return KMCurve(tuple(float(t) for t in event_times), tuple(surv),
                   tuple(at_risk), tuple(deaths))


def _chi2_sf_1dof(x):
    return math.erfc(math.sqrt(max(x, 0.0) / 2.0))


def logrank_test(group_a, group_b):
    """Two-group log-rank test. Returns (chi_square, p)."""
    if not group_a or not group_b:
        raise ValueError("both groups must be nonempty")
    ta = np.array([r.time_days for r in group_a])
    ea = np.array([r.event for r in group_a])
    tb = np.array([r.time_days for r in group_b])
    eb = np.array([r.event for r in group_b])
    if int(ea.sum()) + int(eb.sum()) == 0:
        raise ValueError("no events in either group")
    event_times = np.unique(np.concatenate([ta[ea == 1], tb[eb == 1]]))
    o1 = 0.0
    e1 = 0.0
    var = 0.0
    for t in event_times:
        n1 = int((ta >= t).sum())
        n2 = int((tb >= t).sum())
        n = n1 + n2
        d1 = int(((ta == t) & (ea == 1)).sum())
        d2 = int(((tb == t) & (eb == 1)).sum())
        d = d1 + d2
        o1 += d1
        e1 += d * n1 / n
        if n > 1:
            var += d * (n1 / n) * (n2 / n) * (n - d) / (n - 1)
    if var == 0.0:
        return 0.0, 1.0
    chi2 = (o1 - e1) ** 2 / var
    return chi2, _chi2_sf_1dof(chi2)


def breslow_loglik(beta, times, events, X):
    """Breslow log partial likelihood (shared with the brute-force oracle in
    spirit; the tests reimplement it independently)."""
    beta = np.asarray(beta, np.float64)
    eta = X @ beta
    ll = 0.0
    for t in np.unique(times[events == 1]):
        at_risk = times >= t
        dead = (times == t) & (events == 1)
        d = int(dead.sum())
        ll += float(eta[dead].sum()) - d * math.log(float(np.exp(eta[at_risk]).sum()))
    return ll


@dataclass(frozen=True)
class CoxResult:
    coefficients: dict        # name -> {beta, hr, ci_low, ci_high, se, p}
    log_likelihood: float
    converged: bool
    n_iter: int
    n_events: int


def cox_fit(records, covariate_names, max_iter=100, tol=1e-9) -> CoxResult:
    """Cox proportional hazards via Newton-Raphson from beta = 0.

    Breslow tie handling. Step halving keeps the log partial likelihood
    non-decreasing. Non-convergence and separation are raised, never
    silently returned; a singular Hessian raises with a collinearity hint.
    """
    names = list(covariate_names)
    times = np.array([r.time_days for r in records], np.float64)
    events = np.array([r.event for r in records], np.int64)
    X = np.array([[float(r.covariates[c]) for c in names] for r in records],
                 np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite covariate values")
    n_events = int(events.sum())
    if n_events < 2:
        raise ValueError(f"need at least 2 events, got {n_events}")
    for j, c in enumerate(names):
        if np.ptp(X[:, j]) == 0.0:
            raise ValueError(f"covariate {c!r} is constant")

    event_times = np.unique(times[events == 1])
    risk_sets = [times >= t for t in event_times]
    dead_sets = [(times == t) & (events == 1) for t in event_times]
    d_counts = [int(ds.sum()) for ds in dead_sets]

    p = len(names)
    beta = np.zeros(p)
    ll = breslow_loglik(beta, times, events, X)
    info = np.eye(p)
    it = 0
    for it in range(1, max_iter + 1):
        grad = np.zeros(p)
        info = np.zeros((p, p))
        eta = X @ beta
        w = np.exp(eta)
        for risk, dead, d in zip(risk_sets, dead_sets, d_counts):
            wr = w[risk]
            xr = X[risk]
            s0 = float(wr.sum())
            s1 = wr @ xr
            s2 = (wr[:, None] * xr).T @ xr
            xbar = s1 / s0
            grad += X[dead].sum(axis=0) - d * xbar
            info += d * (s2 / s0 - np.outer(xbar, xbar))
        if np.linalg.norm(grad) < tol:
            break
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as e:
            raise ConvergenceError(
                "singular Hessian (collinear covariates?)") from e
        # halve until the likelihood does not decrease
        scale = 1.0
        for _ in range(40):
            cand = beta + scale * step
            cand_ll = breslow_loglik(cand, times, events, X)
            if cand_ll >= ll - 1e-12:
                break
            scale *= 0.5
        beta = beta + scale * step
        ll = cand_ll
        if np.linalg.norm(beta) > 50.0:
            raise ConvergenceError(
                "diverging coefficients (monotone likelihood / separation)")
    else:
        raise ConvergenceError(f"no convergence in {max_iter} iterations")

    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as e:
        raise ConvergenceError("singular Hessian at the optimum") from e
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    # A flat likelihood can pass the gradient test at a finite beta with an
    # exploding standard error; treat that as separation, not convergence.
    if not np.all(np.isfinite(se)) or np.any(se > 100.0):
        raise ConvergenceError(
            "unbounded standard error (monotone likelihood / separation)")
    coef = {}
    for j, name in enumerate(names):
        b = float(beta[j])
        s = float(se[j])
        z = b / s if s > 0 else math.inf
        coef[name] = {
            "beta": b,
            "hr": math.exp(b),
            "ci_low": math.exp(b - 1.96 * s),
            "ci_high": math.exp(b + 1.96 * s),
            "se": s,
            "p": math.erfc(abs(z) / math.sqrt(2.0)),
        }
    return CoxResult(coef, float(ll), True, it, n_events)


def dichotomize(records, covariate):
    """Median split into (High, Low) groups; values at or below the median go
    Low, so binary covariates split exactly by value. Constant covariates
    raise."""
    values = np.array([float(r.covariates[covariate]) for r in records])
    if np.ptp(values) == 0.0:
        raise ValueError(f"covariate {covariate!r} is constant")
    med = float(np.median(values))
    high = [replace(r, group="High") for r, v in zip(records, values) if v > med]
    low = [replace(r, group="Low") for r, v in zip(records, values) if v <= med]
    return high, low


def read_survival_csv(path):
    """CSV with columns time_days,event,<covariate...> -> SurvivalRecords."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                {"time_days", "event"} - set(reader.fieldnames):
            raise ValueError(f"{path}: need columns time_days,event,...")
        covs = [c for c in reader.fieldnames if c not in ("time_days", "event")]
        for row in reader:
            out.append(SurvivalRecord(
                time_days=float(row["time_days"]),
                event=int(row["event"]),
                covariates={c: float(row[c]) for c in covs if row[c] != ""},
            ))
    return out


def km_curve_dict(curve: KMCurve):
    return {"times": list(curve.times), "survival": list(curve.survival),
            "at_risk": list(curve.at_risk), "deaths": list(curve.deaths)}


def svg_km_plot(curves, width=640, height=420):
    """Plain step-plot SVG for one or more labelled KM curves."""
    pad = 48
    tmax = max([t for c in curves.values() for t in c.times] or [1.0])
    colors = ["#2266cc", "#cc4422", "#22aa66", "#aa22aa"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
        f'stroke="black"/>',
    ]

    def xy(t, s):
        x = pad + (width - 2 * pad) * (t / tmax if tmax else 0.0)
        y = pad + (height - 2 * pad) * (1.0 - s)
        return x, y

    for ci, (label, curve) in enumerate(sorted(curves.items())):
        color = colors[ci % len(colors)]
        pts = [xy(0.0, 1.0)]
        s_prev = 1.0
        for t, s in zip(curve.times, curve.survival):
            pts.append(xy(t, s_prev))
            pts.append(xy(t, s))
            s_prev = s
        pts.append(xy(tmax, s_prev))
        path = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="2" points="{path}"/>')
        parts.append(f'<text x="{width - pad - 140}" y="{pad + 18 * (ci + 1)}" '
                     f'fill="{color}" font-size="13">{label}</text>')
    parts.append(f'<text x="{width // 2}" y="{height - 12}" font-size="12" '
                 f'text-anchor="middle">time (days)</text>')
    parts.append('</svg>')
    return "\n".join(parts)
