"""The Monte Carlo versus closed-form verification suite."""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .._random import stream
from ..exceptions import DomainError
from . import closed_form as cf
from .model import TwoLayerModel, is_interior, random_model
from .monte_carlo import MIN_SAMPLES, mc_estimate, mc_gaussian_moments

FD_STEP = 1e-5
FD_TOL = 1e-4
FD_FLOOR = 1e-2  # gradients smaller than this are compared in absolute terms
IDENTITY_TOL = 1e-10
STATIONARY_TOL = 1e-10
RATIO_C = 5.0
COLUMNS = ("check", "trial", "quantity", "closed_form", "estimate", "se", "statistic", "gate", "status")


@dataclass
class CheckRow:
    check: str
    trial: int
    quantity: str
    closed_form: float
    estimate: float
    se: float
    statistic: float
    gate: float
    status: str  # pass, FAIL, skip or info

    @property
    def failed(self):
        return self.status == "FAIL"


def se_gate(n_samples):
    return 5.0 if n_samples >= MIN_SAMPLES else 10.0


def central_difference(fun, x, h=FD_STEP):
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def fd_relative_error(exact, approx, floor=FD_FLOOR):
    return float(np.linalg.norm(np.asarray(approx) - exact) / max(np.linalg.norm(exact), floor))


def _mc_rows(check, trial, est, closed, gate):
    """One row per component, flagged by its own z-score."""
    rows = []
    closed = np.atleast_1d(np.asarray(closed, dtype=np.float64))
    mean, se = np.atleast_1d(est.mean), np.atleast_1d(est.se)
    z = np.atleast_1d(est.z_scores(closed if closed.size > 1 else closed[0]))
    for i in range(closed.size):
        name = check if closed.size == 1 else f"{check}[{i}]"
        status = "pass" if z[i] <= gate else "FAIL"
        rows.append(CheckRow(name, trial, "mc", closed[i], mean[i], se[i], z[i], gate, status))
    return rows


def _fd_rows(trial, model):
    rows = []
    gv = cf.grad_v(model)
    fd_v = central_difference(lambda v: cf.population_loss(model.with_params(v=v)), model.v)
    err = fd_relative_error(gv, fd_v)
    rows.append(CheckRow("grad_v", trial, "fd", float(np.linalg.norm(gv)), float(np.linalg.norm(fd_v)), 0.0, err, FD_TOL,
                         "pass" if err <= FD_TOL else "FAIL"))
    theta = model.theta
    if model.n < 2 or not (1e-3 < theta < np.pi - 1e-3):
        rows.append(CheckRow("grad_w", trial, "fd", np.nan, np.nan, 0.0, np.nan, FD_TOL, "skip"))
        return rows
    gw = cf.grad_w(model)
    fd_w = central_difference(lambda w: cf.population_loss(model.with_params(w=w)), model.w)
    err = fd_relative_error(gw, fd_w)
    rows.append(CheckRow("grad_w", trial, "fd", float(np.linalg.norm(gw)), float(np.linalg.norm(fd_w)), 0.0, err, FD_TOL,
                         "pass" if err <= FD_TOL else "FAIL"))
    return rows


def _correlation_rows(trial, model):
    if not is_interior(model.theta):
        return [CheckRow("correlation", trial, "identity", np.nan, np.nan, 0.0, np.nan, IDENTITY_TOL, "skip")]
    c, inner = cf.correlation(model), cf.correlation_inner(model)
    diff = abs(c - inner)
    ok = diff <= IDENTITY_TOL and c >= 0
    return [CheckRow("correlation", trial, "identity", c, inner, 0.0, diff, IDENTITY_TOL, "pass" if ok else "FAIL")]


def _stationary_rows(trial, v_star, w_star, label):
    m = v_star.size
    s, nv = v_star.sum(), v_star @ v_star
    exists = s * s < (m + 1) * nv / 2.0
    sp = cf.stationary_point(v_star, w_star if w_star.size >= 2 else None)
    if sp is None:
        status = "pass" if not exists else "FAIL"
        return [CheckRow(label, trial, "none", np.nan, np.nan, 0.0, np.nan, STATIONARY_TOL, status)]
    if not exists:
        return [CheckRow(label, trial, "exists", np.nan, np.nan, 0.0, np.nan, STATIONARY_TOL, "FAIL")]
    if sp.w is None:
        return [CheckRow(label, trial, "grads", np.nan, np.nan, 0.0, np.nan, STATIONARY_TOL, "skip")]
    model = TwoLayerModel(sp.v, sp.w, v_star, w_star)
    worst = max(np.abs(cf.grad_v(model)).max(), np.abs(cf.grad_w(model)).max())
    ok = worst <= STATIONARY_TOL and np.pi / 2 - 1e-12 <= sp.theta < np.pi
    return [CheckRow(label, trial, "grads", sp.theta, 0.0, 0.0, float(worst), STATIONARY_TOL, "pass" if ok else "FAIL")]


def _ratio_row(trial, model):
    if np.linalg.norm(model.v) > RATIO_C:
        return CheckRow("coarse_ratio", trial, "sample", np.nan, np.nan, 0.0, np.nan, RATIO_C, "skip")
    r = cf.correlation_bound_ratio(model, RATIO_C)
    if r is None:
        return CheckRow("coarse_ratio", trial, "sample", np.nan, np.nan, 0.0, np.nan, RATIO_C, "skip")
    return CheckRow("coarse_ratio", trial, "sample", np.nan, r, 0.0, r, RATIO_C, "info")


def ratio_sweep(n_models, C=RATIO_C, seed=0, max_dim=8):
    """Largest coarse-gradient ratio over random models with ``||v|| <= C``.

    Returns ``(max_ratio, evaluated, skipped)``; models with ``||v|| > C`` or a
    vanishing denominator count as skipped.
    """
    rng = stream(seed, "sweep", 10**6)
    best, used, skipped = 0.0, 0, 0
    for _ in range(n_models):
        m, n = (int(k) for k in rng.integers(1, max_dim + 1, size=2))
        model = random_model(rng, m, n)
        if np.linalg.norm(model.v) > C:
            skipped += 1
            continue
        r = cf.correlation_bound_ratio(model, C)
        if r is None:
            skipped += 1
            continue
        used += 1
        best = max(best, r)
    return best, used, skipped


def run_suite(m=4, n=4, samples=200_000, trials=10, seed=0, n_jobs=1, max_dim=8):
    """Every closed form against its oracle on ``trials`` random models.

    ``m`` or ``n`` set to ``None`` draws that dimension per trial from 1..max_dim.
    Returns the list of rows.
    """
    if (m is not None and m < 1) or (n is not None and n < 1):
        raise DomainError("dimensions m and n must be at least 1")
    gate = se_gate(samples)
    rows = []
    for t in range(trials):
        rng = stream(seed, "sweep", t)
        mt = int(rng.integers(1, max_dim + 1)) if m is None else m
        nt = int(rng.integers(1, max_dim + 1)) if n is None else n
        model = random_model(rng, mt, nt)
        est = mc_estimate(model, samples, seed, key=(t, 0), n_jobs=n_jobs)
        rows += _mc_rows("population_loss", t, est["loss"], cf.population_loss(model), gate)
        rows += _mc_rows("expected_grad_v", t, est["dv"], cf.expected_grad_v(model), gate)
        rows += _mc_rows("expected_coarse_grad_w", t, est["gw"], cf.expected_coarse_grad_w(model), gate)

        w, w_tilde = rng.normal(size=nt), rng.normal(size=nt)
        mom = mc_gaussian_moments(w, w_tilde, samples, seed, key=(t, 1), n_jobs=n_jobs)
        for name, e, c in zip(mom.names, mom.estimates, mom.closed):
            rows += _mc_rows(name, t, e, c, gate)

        rows += _fd_rows(t, model)
        rows += _correlation_rows(t, model)
        rows += _stationary_rows(t, model.v_star, model.w_star, "stationary")
        if mt >= 2:
            centered = model.v_star - model.v_star.mean()
            rows += _stationary_rows(t, centered, model.w_star, "stationary_centered")
        rows.append(_ratio_row(t, model))
    return rows


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def format_table(rows):
    head = f"{'check':<26} {'trial':>5} {'closed form':>14} {'estimate':>14} {'SE':>10} {'stat':>10}  status"
    lines = [head, "-" * len(head)]
    for r in rows:
        mark = "  <<<" if r.failed else ""
        lines.append(
            f"{r.check:<26} {r.trial:>5d} {r.closed_form:>14.6e} {r.estimate:>14.6e} "
            f"{r.se:>10.3e} {r.statistic:>10.3e}  {r.status}{mark}"
        )
    return "\n".join(lines)


def summary(rows):
    ratios = [r.statistic for r in rows if r.check == "coarse_ratio" and r.status == "info"]
    failed = [r for r in rows if r.failed]
    counts = {s: sum(1 for r in rows if r.status == s) for s in ("pass", "FAIL", "skip", "info")}
    parts = [f"{counts['pass']} passed", f"{counts['FAIL']} failed", f"{counts['skip']} skipped"]
    if ratios:
        parts.append(f"max coarse-gradient ratio {max(ratios):.4g}")
    return ", ".join(parts), failed
