"""Dense QCQP solver: primal log-barrier interior point with verified
optimality certificates.

Solves min v^T P v + p v + const subject to linear equalities and quadratic
inequalities. Newton steps stay on the equality manifold; quadratic
inequalities enter through log barriers. Problems whose inequalities have no
strict interior at the start are handled by a Phase-I slack minimization and,
when the minimal slack is nonnegative, an explicit recorded relaxation of the
inequality right-hand sides — never a silent one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .linalg import min_eig, sym

# Strict-interior threshold: a start is usable for the log barrier only if
# every inequality clears zero by this much.
INTERIOR_TOL = 1e-10

# Centering stall window: give up on a centering problem after this many
# consecutive Newton iterations whose predicted decrease is below what
# float64 can resolve in the barrier objective.
STALL_LIMIT = 8

# Phase-I slack floor: the slack only needs to reach strictly below zero, so
# bounding it at -1 keeps the Phase-I problem bounded without affecting the
# feasibility certificate.
PHASE1_FLOOR = 1.0


class QcqpError(ValueError):
    """Raised for malformed problems or settings."""


@dataclass(frozen=True)
class SolverSettings:
    """Barrier interior-point parameters.

    ``mode`` is "convex" (objective and constraint blocks must be positive
    semi-definite; global optimum certified) or "nonconvex-local" (indefinite
    blocks allowed; Newton Hessians are eigenvalue-shifted and only a local
    stationary point is claimed, flagged in the solution diagnostics).
    ``relax_margin`` is added on top of the Phase-I slack when the feasible
    set has no strict interior; ``max_relaxation`` bounds how much relaxation
    may be applied before the problem is declared infeasible.
    """

    eq_tol: float = 1e-8
    ineq_tol: float = 1e-8
    duality_gap_tol: float = 1e-8
    max_iters: int = 200
    t_init: float = 1.0
    mu: float = 10.0
    alpha: float = 0.3
    beta: float = 0.8
    mode: str = "convex"
    # Wide enough that the barrier retains a numerically workable interior:
    # a thinner margin leaves constraint walls whose curvature exceeds what
    # Newton steps can resolve in doubles once the barrier weight is large.
    relax_margin: float = 1e-6
    max_relaxation: float = 1e-2

    def __post_init__(self) -> None:
        for name in ("eq_tol", "ineq_tol", "duality_gap_tol"):
            if getattr(self, name) <= 0.0:
                raise QcqpError(f"{name} must be positive")
        if self.max_iters < 1:
            raise QcqpError("max_iters must be >= 1")
        if self.t_init <= 0.0:
            raise QcqpError("initial barrier weight must be positive")
        if self.mu <= 1.0:
            raise QcqpError("barrier growth mu must exceed 1")
        if not 0.0 < self.alpha < 0.5:
            raise QcqpError("line-search alpha must lie in (0, 0.5)")
        if not 0.0 < self.beta < 1.0:
            raise QcqpError("line-search beta must lie in (0, 1)")
        if self.mode not in ("convex", "nonconvex-local"):
            raise QcqpError(f"unknown mode {self.mode!r}")
        if self.relax_margin <= 0.0 or self.max_relaxation <= 0.0:
            raise QcqpError("relaxation parameters must be positive")


@dataclass(frozen=True)
class QuadConstraint:
    """One quadratic inequality v^T J v + Z v + E <= 0."""

    J: np.ndarray
    Z: np.ndarray
    E: float

    def value(self, v: np.ndarray) -> float:
        return float(v @ self.J @ v + self.Z @ v + self.E)

    def grad(self, v: np.ndarray) -> np.ndarray:
        return 2.0 * (self.J @ v) + self.Z


@dataclass
class DenseQcqp:
    """Dense problem data: min v^T P v + p v + const, eq_map v + eq_off = 0,
    and quadratic inequalities <= 0."""

    P: np.ndarray
    p: np.ndarray
    const: float = 0.0
    eq_map: np.ndarray | None = None
    eq_off: np.ndarray | None = None
    quad_ineqs: list = field(default_factory=list)

    def __post_init__(self) -> None:
        self.P = sym(np.asarray(self.P, dtype=float))
        self.p = np.asarray(self.p, dtype=float)
        n = self.p.shape[0]
        if self.P.shape != (n, n):
            raise QcqpError(f"objective: P {self.P.shape} does not match p ({n},)")
        if self.eq_map is None:
            self.eq_map = np.zeros((0, n))
            self.eq_off = np.zeros(0)
        else:
            self.eq_map = np.atleast_2d(np.asarray(self.eq_map, dtype=float))
            self.eq_off = np.atleast_1d(np.asarray(self.eq_off, dtype=float))
            if self.eq_map.shape[1] != n or self.eq_off.shape != (self.eq_map.shape[0],):
                raise QcqpError(
                    f"equalities: map {self.eq_map.shape} / offset "
                    f"{self.eq_off.shape} inconsistent with {n} variables"
                )
        cons = []
        for idx, c in enumerate(self.quad_ineqs):
            if isinstance(c, QuadConstraint):
                j, z, e = c.J, c.Z, c.E
            elif hasattr(c, "J"):
                j, z, e = c.J, c.Z, c.E
            else:
                j, z, e = c
            j = sym(np.asarray(j, dtype=float))
            z = np.asarray(z, dtype=float)
            if j.shape != (n, n) or z.shape != (n,):
                raise QcqpError(
                    f"inequality {idx}: J {j.shape} / Z {z.shape} inconsistent "
                    f"with {n} variables"
                )
            cons.append(QuadConstraint(J=j, Z=z, E=float(e)))
        self.quad_ineqs = cons

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def objective_value(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self.P @ v + self.p @ v + self.const)

    def ineq_values(self, v: np.ndarray) -> np.ndarray:
        return np.array([c.value(v) for c in self.quad_ineqs])

    def eq_residual(self, v: np.ndarray) -> np.ndarray:
        return self.eq_map @ v + self.eq_off


@dataclass
class Solution:
    """Solver result with independently recomputed optimality certificates.

    ``kkt_residuals`` holds stationarity (relative to the objective-gradient
    scale), primal-eq and primal-ineq (absolute violations of the problem
    actually solved, i.e. after any recorded relaxation), and complementarity.
    ``status`` is "optimal" only when every residual meets its tolerance
    (eq_tol, ineq_tol, duality_gap_tol for the other three). ``diagnostics``
    records the applied inequality relaxation, the barrier gap sequence, and
    the raw (unrelaxed) inequality violation.
    """

    primal: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    status: str
    kkt_residuals: dict
    iterations: int
    wall_time: float
    objective: float
    diagnostics: dict
    x_stack: np.ndarray | None = None
    u_stack: np.ndarray | None = None


def _project_onto_equalities(dense: DenseQcqp, v: np.ndarray) -> np.ndarray:
    if dense.eq_map.shape[0] == 0:
        return v
    res = dense.eq_residual(v)
    corr, *_ = np.linalg.lstsq(dense.eq_map, res, rcond=None)
    return v - corr


def _kkt_residuals(
    dense: DenseQcqp,
    v: np.ndarray,
    ineq_duals: np.ndarray,
    eq_duals: np.ndarray,
    relax: float,
) -> dict:
    """Recompute KKT residuals from the raw problem data (no solver state)."""
    grad_f0 = 2.0 * (dense.P @ v) + dense.p
    grad_lag = grad_f0.copy()
    comp = 0.0
    ineq_violation = 0.0
    for lam, c in zip(ineq_duals, dense.quad_ineqs):
        val = c.value(v) - relax
        grad_lag += lam * c.grad(v)
        comp = max(comp, abs(lam * val))
        ineq_violation = max(ineq_violation, val)
    if dense.eq_map.shape[0]:
        grad_lag += dense.eq_map.T @ eq_duals
    scale = max(1.0, float(np.abs(grad_f0).max()))
    eq_res = dense.eq_residual(v)
    return {
        "stationarity": float(np.abs(grad_lag).max()) / scale,
        "primal_eq": float(np.abs(eq_res).max()) if eq_res.size else 0.0,
        "primal_ineq": max(ineq_violation, 0.0),
        "complementarity": comp,
    }


def _null_basis(eq_map: np.ndarray, n: int) -> np.ndarray:
    """Orthonormal basis (columns) of the equality null space.

    Newton steps taken inside this basis stay on the equality manifold to
    machine precision no matter how ill-scaled the barrier Hessian gets,
    which a bordered KKT solve does not guarantee once the Hessian dwarfs
    the equality rows.
    """
    if eq_map.shape[0] == 0:
        return np.eye(n)
    _, svals, vt = np.linalg.svd(eq_map)
    cut = svals.max(initial=0.0) * max(eq_map.shape) * np.finfo(float).eps
    rank = int((svals > cut).sum())
    return vt[rank:].T


def _newton_direction(hess: np.ndarray, grad: np.ndarray, mode: str) -> np.ndarray:
    """Newton direction; nonconvex mode shifts the Hessian just enough to
    make it positive definite so the step is a descent direction."""
    if hess.shape[0] == 0:
        return np.zeros(0)
    if mode == "nonconvex-local":
        low = min_eig(hess)
        if low < 1e-8:
            hess = hess + (1e-8 - low) * np.eye(hess.shape[0])
    step, *_ = np.linalg.lstsq(hess, -grad, rcond=None)
    return step


def _center(
    dense: DenseQcqp,
    v: np.ndarray,
    t_bar: float,
    relax: float,
    settings: SolverSettings,
    budget: int,
    stop_when=None,
) -> tuple[np.ndarray, int, bool]:
    """Minimize t*f0 + barrier over the equality manifold from a strictly
    feasible v. Returns (v, newton_iters, converged).

    Newton runs in an orthonormal null-space parametrization of the
    equalities, so iterates stay on the manifold exactly. The stop test is
    the quantity the certificate will actually report — the projected
    barrier gradient over t is the KKT stationarity residual under the
    barrier's own multipliers. Iterations whose predicted decrease falls
    below float64 resolution of the barrier value count toward a stall
    window, after which the best iterate seen is returned; value-reducing
    damped iterations never count as stalled, however flat the gradient.
    ``stop_when`` is evaluated after every accepted step (Phase-I uses it to
    bail out the moment an iterate is usable).
    """

    def barrier_value(vv: np.ndarray) -> float:
        vals = dense.ineq_values(vv) - relax
        if np.any(vals >= 0.0):
            return np.inf
        return float(t_bar * dense.objective_value(vv) - np.log(-vals).sum())

    null = _null_basis(dense.eq_map, dense.n)
    best: tuple[float, np.ndarray] = (np.inf, v)
    stall = 0
    iters = 0
    while True:
        grad_f0 = 2.0 * (dense.P @ v) + dense.p
        grad = t_bar * grad_f0
        hess = t_bar * 2.0 * dense.P
        for c in dense.quad_ineqs:
            val = c.value(v) - relax
            g_c = c.grad(v)
            grad = grad - g_c / val
            hess = hess - 2.0 * c.J / val + np.outer(g_c, g_c) / val**2
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
            raise FloatingPointError("non-finite barrier derivatives")
        grad_z = null.T @ grad
        gap = float(np.abs(null @ grad_z).max(initial=0.0))
        stat_goal = (
            0.25 * settings.duality_gap_tol * max(1.0, float(np.abs(grad_f0).max()))
        )
        if gap <= stat_goal * t_bar:
            return v, iters, True
        if gap < best[0]:
            best = (gap, v)
        if iters >= budget or stall >= STALL_LIMIT:
            return best[1], iters, False
        step = null @ _newton_direction(null.T @ hess @ null, grad_z, settings.mode)
        iters += 1
        base = barrier_value(v)
        decrement = float(-grad @ step)
        if decrement <= 0.0:
            stall += 1  # not a descent direction: numerical limit reached
            continue
        # Below the line search's resolution of the barrier value the Armijo
        # test is rounding noise; this deep in the quadratic zone the bare
        # Newton step is the right move (domain membership still checked).
        if decrement <= 64.0 * np.finfo(float).eps * max(1.0, abs(base)):
            stall += 1
            cand = v + step
            if barrier_value(cand) < np.inf:
                v = cand
                if stop_when is not None and stop_when(v):
                    return v, iters, True
            continue
        scale = 1.0
        slope = settings.alpha * float(grad @ step)
        while barrier_value(v + scale * step) > base + scale * slope:
            scale *= settings.beta
            if scale < 1e-14:
                break
        if scale < 1e-14:
            stall += 1  # line search collapsed without a usable step
            continue
        stall = 0
        v = v + scale * step
        if stop_when is not None and stop_when(v):
            return v, iters, True


def _barrier_loop(
    dense: DenseQcqp,
    v: np.ndarray,
    relax: float,
    settings: SolverSettings,
    budget: int,
    stop_when=None,
) -> tuple[np.ndarray, float, int, list, bool]:
    """Outer barrier loop. Returns (v, t_final, iters, gap sequence,
    finished)."""
    m = len(dense.quad_ineqs)
    t_bar = settings.t_init
    total = 0
    gaps = []
    while True:
        v, used, _ = _center(
            dense, v, t_bar, relax, settings, budget - total, stop_when
        )
        total += used
        gaps.append(m / t_bar)
        if stop_when is not None and stop_when(v):
            return v, t_bar, total, gaps, True
        if m / t_bar <= settings.duality_gap_tol:
            return v, t_bar, total, gaps, True
        if total >= budget:
            return v, t_bar, total, gaps, False
        t_bar *= settings.mu


def _phase1(
    dense: DenseQcqp, v: np.ndarray, settings: SolverSettings, budget: int
) -> tuple[np.ndarray, float, int]:
    """Minimize the worst constraint slack over the equality manifold.

    Returns (point, achieved slack max_j f_j, iterations). Stops early as
    soon as the iterate is strictly feasible for the original inequalities.
    """
    n = dense.n
    aug = lambda mat: np.hstack([mat, np.zeros((mat.shape[0], 1))])
    cons = []
    for c in dense.quad_ineqs:
        j_aug = np.zeros((n + 1, n + 1))
        j_aug[:n, :n] = c.J
        cons.append((j_aug, np.concatenate([c.Z, [-1.0]]), c.E))
    # slack floor keeps the Phase-I objective bounded below
    cons.append((np.zeros((n + 1, n + 1)), np.concatenate([np.zeros(n), [-1.0]]), -PHASE1_FLOOR))
    p1 = DenseQcqp(
        P=np.zeros((n + 1, n + 1)),
        p=np.concatenate([np.zeros(n), [1.0]]),
        eq_map=aug(dense.eq_map),
        eq_off=dense.eq_off.copy(),
        quad_ineqs=cons,
    )
    s0 = max(float(dense.ineq_values(v).max()), -0.5) + 1.0
    v1 = np.concatenate([v, [s0]])

    # Exit as soon as an iterate clears the boundary by the relaxation
    # margin: deep enough to start the barrier, and early enough that the
    # slack descent does not drag the point far from the warm start.
    depth = max(INTERIOR_TOL, settings.relax_margin)

    def usable_interior(vv: np.ndarray) -> bool:
        return bool(dense.ineq_values(vv[:n]).max() < -depth)

    v1, _, iters, _, _ = _barrier_loop(
        p1, v1, 0.0, settings, budget, stop_when=usable_interior
    )
    point = v1[:n]
    return point, float(dense.ineq_values(point).max()), iters


def _validate_convexity(dense: DenseQcqp) -> None:
    low = min_eig(dense.P)
    if low < -1e-10:
        raise QcqpError(
            f"convex mode requires a positive semi-definite objective "
            f"(min eigenvalue {low:.3e}); use mode='nonconvex-local'"
        )
    for idx, c in enumerate(dense.quad_ineqs):
        low = min_eig(c.J)
        if low < -1e-10:
            raise QcqpError(
                f"convex mode requires positive semi-definite inequality "
                f"blocks (block {idx} min eigenvalue {low:.3e}); "
                f"use mode='nonconvex-local'"
            )


def _recover_eq_duals(
    dense: DenseQcqp, v: np.ndarray, ineq_duals: np.ndarray
) -> np.ndarray:
    """Best-fit equality multipliers from the stationarity condition."""
    if not dense.eq_map.shape[0]:
        return np.zeros(0)
    grad_lag = 2.0 * (dense.P @ v) + dense.p
    for lam, c in zip(ineq_duals, dense.quad_ineqs):
        grad_lag += lam * c.grad(v)
    nu, *_ = np.linalg.lstsq(dense.eq_map.T, -grad_lag, rcond=None)
    return nu


def _certificate_score(
    dense: DenseQcqp,
    v: np.ndarray,
    ineq_duals: np.ndarray,
    relax: float,
    settings: SolverSettings,
) -> float:
    """Worst KKT residual-to-tolerance ratio for a candidate point."""
    eq_duals = _recover_eq_duals(dense, v, ineq_duals)
    res = _kkt_residuals(dense, v, ineq_duals, eq_duals, relax)
    return max(
        res["stationarity"] / settings.duality_gap_tol,
        res["primal_eq"] / settings.eq_tol,
        res["primal_ineq"] / settings.ineq_tol,
        res["complementarity"] / settings.duality_gap_tol,
    )


def _kkt_newton(
    dense: DenseQcqp,
    v0: np.ndarray,
    lam0: np.ndarray,
    relax: float,
    active: list[int],
    settings: SolverSettings,
) -> tuple[np.ndarray, np.ndarray, float, int]:
    """Newton on the KKT system with the active inequalities as equalities.

    Solves for the step and fresh multipliers jointly; returns the best
    iterate seen as (v, active_duals, kkt_residual, iterations).
    """
    n = dense.n
    n_eq = dense.eq_map.shape[0]
    k = len(active)
    cons = [dense.quad_ineqs[j] for j in active]
    lam = np.array([max(lam0[j], 0.0) for j in active])
    v = v0.copy()
    eq_scales = np.ones(n_eq)
    for i in range(n_eq):
        eq_scales[i] = max(float(np.linalg.norm(dense.eq_map[i])), 1e-12)
    eq_n = dense.eq_map / eq_scales[:, None] if n_eq else dense.eq_map

    def residual(vv: np.ndarray, ll: np.ndarray) -> float:
        grad_f0 = 2.0 * (dense.P @ vv) + dense.p
        grad = grad_f0.copy()
        for la, c in zip(ll, cons):
            grad = grad + la * c.grad(vv)
        if n_eq:
            nu, *_ = np.linalg.lstsq(dense.eq_map.T, -grad, rcond=None)
            grad = grad + dense.eq_map.T @ nu
        parts = [float(np.abs(grad).max()) / max(1.0, float(np.abs(grad_f0).max()))]
        if k:
            parts.append(max(abs(c.value(vv) - relax) for c in cons))
        if n_eq:
            parts.append(float(np.abs(dense.eq_residual(vv)).max()))
        return max(parts)

    best = (residual(v, lam), v, lam)
    it = 0
    for it in range(1, 13):
        grad_f0 = 2.0 * (dense.P @ v) + dense.p
        hess = 2.0 * dense.P.copy()
        g_rows = np.zeros((k, n))
        c_vals = np.zeros(k)
        for idx, (la, c) in enumerate(zip(lam, cons)):
            hess = hess + la * 2.0 * c.J
            g_rows[idx] = c.grad(v)
            c_vals[idx] = c.value(v) - relax
        # Row equilibration keeps the least-squares factorization from
        # truncating constraint rows when a large multiplier inflates the
        # Hessian block; it changes conditioning only, not the solution.
        g_scales = np.maximum(np.linalg.norm(g_rows, axis=1), 1e-12) if k else np.zeros(0)
        g_n = g_rows / g_scales[:, None] if k else g_rows
        h_scale = max(1.0, float(np.abs(hess).max(initial=0.0)))
        size = n + k + n_eq
        kkt = np.zeros((size, size))
        kkt[:n, :n] = hess / h_scale
        kkt[:n, n : n + k] = g_n.T / h_scale
        kkt[:n, n + k :] = eq_n.T / h_scale
        kkt[n : n + k, :n] = g_n
        kkt[n + k :, :n] = eq_n
        rhs = np.concatenate(
            [
                -grad_f0 / h_scale,
                -c_vals / g_scales if k else c_vals,
                -dense.eq_residual(v) / eq_scales if n_eq else np.zeros(0),
            ]
        )
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
        if not np.all(np.isfinite(sol)):
            break
        dv = sol[:n]
        if float(np.abs(dv).max(initial=0.0)) > 1e3 * (1.0 + float(np.abs(v).max())):
            break  # diverging; keep the best iterate
        v = v + dv
        lam = sol[n : n + k] / g_scales if k else np.zeros(0)
        r = residual(v, lam)
        if r < best[0]:
            best = (r, v, lam)
        if r <= 1e-13:
            return v, lam, r, it
        if it >= 3 and r > 0.5 * best[0]:
            break
    r, v, lam = best
    return v, lam, r, it


def _polish(
    dense: DenseQcqp,
    v: np.ndarray,
    ineq_duals: np.ndarray,
    relax: float,
    settings: SolverSettings,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Active-set crossover from a barrier point.

    Holding the near-active inequalities as equalities and applying Newton
    to the resulting KKT system sharpens the barrier's O(gap) certificates
    to factorization precision. Constraints whose multiplier comes out
    negative are dropped and the system re-solved; the caller keeps the
    result only when the recomputed certificates improve, so a wrong active
    set here is harmless.
    """
    vals = np.array([c.value(v) for c in dense.quad_ineqs]) - relax
    scales = np.array(
        [max(1.0, abs(c.value(v) - c.E), abs(c.E)) for c in dense.quad_ineqs]
    )
    active = [int(j) for j in np.flatnonzero(-vals <= 1e-4 * scales)]
    # most active first, so an inconsistent guess sheds its weakest member
    active.sort(key=lambda j: -vals[j])
    total = 0
    for _ in range(2 * len(dense.quad_ineqs) + 2):
        v_try, lam_act, res, used = _kkt_newton(
            dense, v, ineq_duals, relax, active, settings
        )
        total += used
        if res > 1e-11:
            if active:
                active.pop()  # least-active constraint is the best suspect
                continue
            return v, ineq_duals, total
        lam_scale = max(1.0, float(np.abs(lam_act).max(initial=0.0)))
        neg = [j for j, la in zip(active, lam_act) if la < -1e-8 * lam_scale]
        if neg:
            drop = active[int(np.argmin(lam_act))]
            active.remove(drop)
            continue
        viol = np.array([c.value(v_try) for c in dense.quad_ineqs]) - relax
        worst = int(np.argmax(viol / scales))
        if viol[worst] > 1e-10 * scales[worst] and worst not in active:
            active.append(worst)  # stepped across a constraint not held
            continue
        lam_full = np.zeros(len(dense.quad_ineqs))
        for j, la in zip(active, lam_act):
            lam_full[j] = max(la, 0.0)
        return v_try, lam_full, total
    return v, ineq_duals, total


def _finish(
    dense: DenseQcqp,
    v: np.ndarray,
    ineq_duals: np.ndarray,
    relax: float,
    settings: SolverSettings,
    status_hint: str,
    iterations: int,
    started: float,
    diagnostics: dict,
) -> Solution:
    """Recompute certificates outside the solver loop and settle the status."""
    eq_duals = _recover_eq_duals(dense, v, ineq_duals)
    res = _kkt_residuals(dense, v, ineq_duals, eq_duals, relax)
    diagnostics = dict(diagnostics)
    diagnostics["relaxation"] = relax
    raw = dense.ineq_values(v)
    diagnostics["raw_ineq_violation"] = float(raw.max(initial=0.0).clip(min=0.0))
    certified = (
        res["stationarity"] <= settings.duality_gap_tol
        and res["primal_eq"] <= settings.eq_tol
        and res["primal_ineq"] <= settings.ineq_tol
        and res["complementarity"] <= settings.duality_gap_tol
    )
    status = status_hint
    if status_hint == "optimal" and not certified:
        status = "max-iters"
    elif status_hint == "max-iters" and certified:
        # the recomputed certificates, not the iteration budget, decide
        status = "optimal"
    return Solution(
        primal=v,
        eq_duals=eq_duals,
        ineq_duals=ineq_duals,
        status=status,
        kkt_residuals=res,
        iterations=iterations,
        wall_time=time.monotonic() - started,
        objective=dense.objective_value(v),
        diagnostics=diagnostics,
    )


def solve_dense(
    dense: DenseQcqp, settings: SolverSettings | None = None, start: np.ndarray | None = None
) -> Solution:
    """Solve a dense QCQP with the primal barrier method.

    ``start`` warm-starts the primal; it is projected onto the equality
    manifold first. A start without strict inequality interior triggers
    Phase-I, and an interior-free feasible set is handled by the recorded
    relaxation described in the module docstring.
    """
    settings = settings or SolverSettings()
    started = time.monotonic()
    if settings.mode == "convex":
        _validate_convexity(dense)
    if not dense.quad_ineqs:
        return solve_qp_fast_path(dense, settings)

    v = np.zeros(dense.n) if start is None else np.asarray(start, dtype=float).copy()
    if v.shape != (dense.n,):
        raise QcqpError(f"start has shape {v.shape}, expected ({dense.n},)")
    v = _project_onto_equalities(dense, v)

    iterations = 0
    relax = 0.0
    diagnostics: dict = {"mode": settings.mode, "phase1_slack": None}
    if settings.mode == "nonconvex-local":
        diagnostics["stationary_only"] = True
    try:
        if float(dense.ineq_values(v).max()) >= -INTERIOR_TOL:
            v, slack, used = _phase1(dense, v, settings, settings.max_iters)
            iterations += used
            diagnostics["phase1_slack"] = slack
            if slack >= -INTERIOR_TOL:
                relax = max(slack, 0.0) + settings.relax_margin
                if relax > settings.max_relaxation:
                    sol = _finish(
                        dense, v, np.zeros(len(dense.quad_ineqs)), 0.0, settings,
                        "infeasible", iterations, started, diagnostics,
                    )
                    return sol
        # Phase-I and the main loop each get the full Newton budget; a
        # boundary-feasible start (the weak-hierarchy norm) always pays for
        # a complete Phase-I solve before the main loop starts.
        v, t_final, used, gaps, finished = _barrier_loop(
            dense, v, relax, settings, settings.max_iters
        )
        iterations += used
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        diagnostics["error"] = str(exc)
        return _finish(
            dense, v, np.zeros(len(dense.quad_ineqs)), relax, settings,
            "numerical-failure", iterations, started, diagnostics,
        )
    diagnostics["barrier_gaps"] = gaps
    ineq_duals = np.array(
        [1.0 / (t_final * max(relax - c.value(v), 1e-300)) for c in dense.quad_ineqs]
    )
    # crossover polish: Newton on the active-set KKT system sharpens the
    # barrier point's certificates to factorization precision
    try:
        v_pol, duals_pol, used = _polish(dense, v, ineq_duals, relax, settings)
        iterations += used
        better = _certificate_score(
            dense, v_pol, duals_pol, relax, settings
        ) < _certificate_score(dense, v, ineq_duals, relax, settings)
        obj_cap = dense.objective_value(v) + 1e-6 * max(
            1.0, abs(dense.objective_value(v))
        )
        if better and dense.objective_value(v_pol) <= obj_cap:
            v, ineq_duals = v_pol, duals_pol
    except np.linalg.LinAlgError:
        pass
    hint = "optimal" if finished else "max-iters"
    return _finish(
        dense, v, ineq_duals, relax, settings, hint, iterations, started, diagnostics
    )


def solve_qp_fast_path(
    problem, settings: SolverSettings | None = None
) -> Solution:
    """Equality-constrained QP via one least-squares KKT factorization.

    Accepts a DenseQcqp without quadratic inequalities (or a finite-horizon
    problem that condenses to one). Redundant equality rows are harmless; an
    inconsistent or unbounded system surfaces as numerical-failure through
    the recomputed residuals.
    """
    settings = settings or SolverSettings()
    started = time.monotonic()
    dense, wrap = _as_dense(problem)
    if dense.quad_ineqs:
        raise QcqpError("fast path requires a problem without quadratic inequalities")
    if settings.mode == "convex":
        _validate_convexity(dense)
    n = dense.n
    m = dense.eq_map.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = 2.0 * dense.P
    kkt[:n, n:] = dense.eq_map.T
    kkt[n:, :n] = dense.eq_map
    rhs = np.concatenate([-dense.p, -dense.eq_off])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    v, nu = sol[:n], sol[n:]
    res = _kkt_residuals(dense, v, np.zeros(0), nu, 0.0)
    ok = (
        np.all(np.isfinite(v))
        and res["stationarity"] <= settings.duality_gap_tol
        and res["primal_eq"] <= settings.eq_tol
    )
    base = Solution(
        primal=v,
        eq_duals=nu,
        ineq_duals=np.zeros(0),
        status="optimal" if ok else "numerical-failure",
        kkt_residuals=res,
        iterations=1,
        wall_time=time.monotonic() - started,
        objective=dense.objective_value(v),
        diagnostics={"mode": settings.mode, "relaxation": 0.0},
    )
    return _expand(base, wrap)


def _as_dense(problem) -> tuple[DenseQcqp, object]:
    """Normalize the accepted problem kinds to (DenseQcqp, wrapper or None).

    Finite-horizon problems are condensed over the stacked inputs; the
    wrapper is kept so the solution can be expanded back to (states, inputs).
    """
    if isinstance(problem, DenseQcqp):
        return problem, None
    if hasattr(problem, "condensed"):
        cond = problem.condensed()
        dense = DenseQcqp(
            P=cond.P,
            p=cond.p,
            const=cond.const,
            eq_map=cond.eq_map,
            eq_off=cond.eq_off,
            quad_ineqs=cond.quad_ineqs,
        )
        return dense, problem
    raise QcqpError(f"unsupported problem type {type(problem).__name__}")


def _expand(sol: Solution, problem) -> Solution:
    if problem is None:
        return sol
    u_stack = sol.primal
    x_stack = problem.prediction.predict(problem.x0, u_stack)
    sol.x_stack = x_stack
    sol.u_stack = u_stack
    sol.primal = np.concatenate([x_stack, u_stack])
    return sol


def solve(problem, settings: SolverSettings | None = None, start: np.ndarray | None = None) -> Solution:
    """Solve a finite-horizon problem (condensed over its stacked inputs) or
    a DenseQcqp. For finite-horizon problems the returned primal stacks the
    predicted states and the inputs; ``start`` is a stacked-input warm start.
    """
    dense, wrap = _as_dense(problem)
    if not dense.quad_ineqs:
        sol = solve_qp_fast_path(dense, settings)
    else:
        sol = solve_dense(dense, settings, start=start)
    return _expand(sol, wrap)


# ---------------------------------------------------------------------------
# Problem dump/load: dense matrices in row-major decimal text, for
# cross-checking against external solvers.

def dump_problem(dense: DenseQcqp, path: str) -> None:
    """Write the problem in a plain-text block format.

    Layout: a header line ``qcqp-dense 1``, then labelled blocks ``vars``,
    ``P`` (n rows), ``p``, ``const``, ``eq`` (row count then map rows, then
    the offset row), and one ``ineq`` block per constraint (J rows, Z row,
    E). All numbers are decimal text with 17 significant digits.
    """
    fmt = lambda row: " ".join(f"{x:.17g}" for x in np.atleast_1d(row))
    lines = ["qcqp-dense 1", f"vars {dense.n}", "P"]
    lines += [fmt(row) for row in dense.P]
    lines += ["p", fmt(dense.p), f"const {dense.const:.17g}"]
    lines.append(f"eq {dense.eq_map.shape[0]}")
    lines += [fmt(row) for row in dense.eq_map]
    if dense.eq_map.shape[0]:
        lines.append(fmt(dense.eq_off))
    lines.append(f"ineq {len(dense.quad_ineqs)}")
    for c in dense.quad_ineqs:
        lines += [fmt(row) for row in c.J]
        lines.append(fmt(c.Z))
        lines.append(f"{c.E:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path: str) -> DenseQcqp:
    """Read a problem written by dump_problem."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    pos = 0

    def take() -> str:
        nonlocal pos
        pos += 1
        return lines[pos - 1]

    def take_rows(count: int) -> np.ndarray:
        return np.array([[float(x) for x in take().split()] for _ in range(count)])

    header = take()
    if header != "qcqp-dense 1":
        raise QcqpError(f"unrecognized problem file header {header!r}")
    n = int(take().split()[1])
    if take() != "P":
        raise QcqpError("expected objective matrix block")
    p_mat = take_rows(n)
    if take() != "p":
        raise QcqpError("expected objective vector block")
    p_vec = take_rows(1)[0]
    const = float(take().split()[1])
    m_eq = int(take().split()[1])
    eq_map = take_rows(m_eq) if m_eq else None
    eq_off = take_rows(1)[0] if m_eq else None
    n_ineq = int(take().split()[1])
    cons = []
    for _ in range(n_ineq):
        j = take_rows(n)
        z = take_rows(1)[0]
        e = float(take())
        cons.append((j, z, e))
    return DenseQcqp(
        P=p_mat, p=p_vec, const=const, eq_map=eq_map, eq_off=eq_off, quad_ineqs=cons
    )
