"""Sufficient-descent diagnostics for blended projected iterations.

For an objective with L-Lipschitz gradient, every blended step obeys::

    f(w+) - f(w) <= -1/2 * ((1 - rho)/eta * gap + (rho/eta - L) * ||w+ - w||**2)

with ``gap = ||w+ - w_f||**2 - ||w - w_f||**2 >= 0``. ``check_sufficient_descent``
evaluates both sides along a recorded trace.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientDataError
from .optim import run_blended

OK = "ok"
NOT_GUARANTEED = "not guaranteed"
VIOLATED = "violated"


@dataclass
class DescentRow:
    step: int
    f_before: float
    f_after: float
    move_sq: float
    gap: float
    margin: float  # f_after - f_before + c * move_sq
    bound: float  # right-hand side of the per-step descent inequality
    status: str


@dataclass
class DescentReport:
    rows: list
    rho: float
    eta: float
    lipschitz: float
    c: float
    tol: float

    @property
    def max_margin(self):
        return max(r.margin for r in self.rows)

    @property
    def violations(self):
        return [r for r in self.rows if r.status == VIOLATED]

    @property
    def unguaranteed(self):
        return [r for r in self.rows if r.status == NOT_GUARANTEED]

    @property
    def rate_condition(self):
        """Whether ``rho / eta >= L + c`` holds for this run."""
        return self.rho / self.eta >= self.lipschitz + self.c

    def format(self):
        lines = [f"{'step':>5} {'f(w_t)':>14} {'f(w_t+1)':>14} {'|dw|^2':>11} {'margin':>12} {'bound':>12}  status"]
        for r in self.rows:
            lines.append(
                f"{r.step:>5d} {r.f_before:>14.6e} {r.f_after:>14.6e} {r.move_sq:>11.3e} "
                f"{r.margin:>12.3e} {r.bound:>12.3e}  {r.status}"
            )
        return "\n".join(lines)


def check_sufficient_descent(trace, rho, eta, L, c=1.0, tol=1e-12):
    """Per-step sufficient-descent margins along ``trace``.

    ``trace`` is a sequence of ``(f(w_t), w_t, w_f_t)``. A step is
    ``violated`` when its margin exceeds ``tol``; ``not guaranteed`` when the
    margin holds but the descent bound does not imply it (``bound + c*|dw|^2 > tol``);
    ``ok`` otherwise.
    """
    if len(trace) < 2:
        raise InsufficientDataError("a descent check needs at least two iterates")
    rows = []
    for t in range(len(trace) - 1):
        f0, w0, wf0 = trace[t]
        f1, w1, _ = trace[t + 1]
        w0, w1, wf0 = (np.asarray(a, dtype=np.float64) for a in (w0, w1, wf0))
        move = w1 - w0
        move_sq = float(move @ move)
        gap = float(np.sum((w1 - wf0) ** 2) - np.sum((w0 - wf0) ** 2))
        margin = float(f1 - f0 + c * move_sq)
        bound = -0.5 * ((1.0 - rho) / eta * gap + (rho / eta - L) * move_sq)
        if margin > tol:
            status = VIOLATED
        elif bound + c * move_sq > tol:
            status = NOT_GUARANTEED
        else:
            status = OK
        rows.append(DescentRow(t, float(f0), float(f1), move_sq, gap, margin, float(bound), status))
    return DescentReport(rows, rho, eta, L, c, tol)


def quadratic(a, L=1.0):
    """``f(w) = L/2 * ||w - a||**2`` and its gradient."""
    a = np.asarray(a, dtype=np.float64)

    def f(w):
        d = w - a
        return 0.5 * L * float(d @ d)

    def grad(w):
        return L * (w - a)

    return f, grad


def quadratic_scenario(rng, dim=2, bits=2, rho=1e-5, L=1.0, c=1.0, steps=100):
    """One blended run on a random L-smooth quadratic with ``rho/eta = L + c``.

    Returns ``(trace, eta)``.
    """
    eta = rho / (L + c)
    f, grad = quadratic(rng.normal(size=dim), L)
    w_f0 = rng.normal(size=dim)
    return run_blended(grad, w_f0, bits, rho, eta, steps, f=f), eta


def adversarial_bc_trace(eta=0.01, steps=3, eps=1e-9):
    """BinaryConnect on a 2-D ternary set, started on a projection tie.

    The float iterate sits just on the ``(1, 0)`` side of the bisector between
    the rays through ``(1, 0)`` and ``(1, 1)``, and the gradient pushes it
    across, so the quantized point jumps while the projection distance is
    (nearly) unchanged. Returns ``(trace, L)``.
    """
    phi = np.pi / 8 - eps
    f, grad = quadratic([0.0, 10.0])
    w_f0 = np.array([np.cos(phi), np.sin(phi)])
    return run_blended(grad, w_f0, 2, 0.0, eta, steps, f=f), 1.0


def ternary_line(w):
    """Identify which 1-D subspace of the 2-D ternary set ``w`` lies on, as its sign pattern."""
    return tuple(int(s) for s in np.sign(np.round(w / np.max(np.abs(w)), 12)))


def pgd_trap_scenario(eta=0.01, steps=200):
    """Two-weight ternarization: PGD stays on its starting line, BC moves on.

    Objective ``1/2 ||w - (1, 0.6)||**2``; start ``w_f = (1, 0)`` on the line
    through ``(1, 0)``. Returns ``{"pgd": lines, "bc": lines}`` with the
    sequence of lines visited by the quantized iterate.
    """
    f, grad = quadratic([1.0, 0.6])
    out = {}
    for name, rho in (("pgd", 1.0), ("bc", 0.0)):
        trace = run_blended(grad, np.array([1.0, 0.0]), 2, rho, eta, steps, f=f)
        out[name] = [ternary_line(w) for _, w, _ in trace]
    return out


def brute_force_ternary_projection(w_f):
    """Projection onto ``R+ x {0, +-1}^M`` by enumerating all patterns (small M only)."""
    from itertools import product

    w_f = np.asarray(w_f, dtype=np.float64)
    best, best_obj = None, np.inf
    for pattern in product((-1, 0, 1), repeat=w_f.size):
        q = np.array(pattern, dtype=np.float64)
        qq = q @ q
        if qq == 0:
            continue
        delta = max(q @ w_f, 0.0) / qq
        obj = float(np.sum((delta * q - w_f) ** 2))
        if obj < best_obj - 1e-15:
            best, best_obj = delta * q, obj
    return best, best_obj

