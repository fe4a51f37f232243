"""Independent reference computations for the test suite.

Every helper re-derives its quantity through a route different from the
library code it checks: closed-form mechanics, generic KKT or null-space
linear algebra, central finite differences, sequential rollouts, or a long-run
projected gradient with grid refinement.  Tests compare library output against
these, never against the library itself.
"""

from __future__ import annotations

import numpy as np

from wbmpc.dynamics import mass_matrix
from wbmpc.kinematics import point_world

# ---------------------------------------------------------------------------
# generic linear algebra


def null_basis(a: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of ``a`` via SVD."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] == 0:
        return np.eye(a.shape[1])
    _, s, vt = np.linalg.svd(a)
    cut = s.max(initial=0.0) * max(a.shape) * np.finfo(float).eps
    rank = int((s > cut).sum())
    return vt[rank:].T


def nullspace_qp(P, p, A=None, b=None) -> np.ndarray:
    """min z'Pz + p'z  s.t.  Az = b, by null-space elimination.

    The particular solution is the minimum-norm lstsq solution, so a
    consistent rank-deficient ``A`` (duplicated rows) is handled as well.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    p = np.asarray(p, dtype=float)
    if A is None or np.size(A) == 0:
        return np.linalg.lstsq(2.0 * P, -p, rcond=None)[0]
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    z_p, *_ = np.linalg.lstsq(A, b, rcond=None)
    basis = null_basis(A)
    if basis.shape[1]:
        h = basis.T @ (2.0 * P) @ basis
        rhs = -basis.T @ (2.0 * P @ z_p + p)
        y, *_ = np.linalg.lstsq(h, rhs, rcond=None)
        z_p = z_p + basis @ y
    return z_p


def fd_jacobian(fun, v, h: float = 1e-6) -> np.ndarray:
    """Dense central-difference Jacobian of ``fun`` at ``v``."""
    v = np.asarray(v, dtype=float)
    cols = []
    for j in range(v.size):
        dv = np.zeros_like(v)
        dv[j] = h
        cols.append((np.asarray(fun(v + dv)) - np.asarray(fun(v - dv))) / (2.0 * h))
    return np.array(cols).T


def fine_rk4(fun, x0, width: float, substeps: int = 64) -> np.ndarray:
    """Integrate dx/dtau = fun(x) over ``width`` with ``substeps`` RK4 steps."""
    x = np.asarray(x0, dtype=float).copy()
    h = width / substeps
    for _ in range(substeps):
        k1 = fun(x)
        k2 = fun(x + 0.5 * h * k1)
        k3 = fun(x + 0.5 * h * k2)
        k4 = fun(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def rollout(steps, x0, u_list) -> np.ndarray:
    """Sequential recursion x_{i+1} = A_i x_i + B_i u_i + r_i.

    ``steps`` is a list of (A_i, B_i, r_i); returns the (N+1, n_x) state
    stack including x_0.
    """
    x = np.asarray(x0, dtype=float).copy()
    out = [x.copy()]
    for (a, b_mat, r), u in zip(steps, u_list):
        x = a @ x + b_mat @ np.asarray(u, dtype=float) + np.asarray(r, dtype=float)
        out.append(x.copy())
    return np.array(out)


# ---------------------------------------------------------------------------
# mechanics


def pendulum_mass_bias(model, q) -> tuple[float, float]:
    """Closed-form scalar (M, b) for the one-link pendulum.

    M = m l_c^2 + I_zz and b = m g l_c sin(q), with g the gravity magnitude
    and the angle measured from the hanging-down equilibrium.  A single
    revolute joint has no velocity-dependent bias.
    """
    link = model.links[0]
    lc = link.com_xyz[0]
    g = float(np.linalg.norm(model.gravity))
    mass = link.mass * lc * lc + link.inertia_6[2]
    angle = float(np.atleast_1d(np.asarray(q, dtype=float))[0])
    return mass, link.mass * g * lc * np.sin(angle)


def mechanical_energy(model, q, qd) -> float:
    """Kinetic plus gravitational potential energy.

    T = qd' M(q) qd / 2 and V = -sum_i m_i g . p_com,i with COM positions
    from the kinematics, independent of any integrator bookkeeping.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    kin = 0.5 * float(qd @ mass_matrix(model, q) @ qd)
    g = np.asarray(model.gravity, dtype=float)
    pot = 0.0
    for i, link in enumerate(model.links):
        pot -= link.mass * float(g @ point_world(model, q, i, link.com_xyz))
    return kin + pot


def kkt_dae(terms, tau) -> tuple[np.ndarray, np.ndarray]:
    """(qdd, f_c) from one block solve of the index-1 DAE KKT system

        [M   Jc'] [qdd]   [U' tau - b]
        [Jc   0 ] [f_c] = [-Jc_dot qd]

    with the constraint force on the left side of the motion equation,
    M qdd + b + Jc' f_c = U' tau.
    """
    n = terms.n
    nc = terms.Jc.shape[0]
    rhs_top = terms.U.T @ np.asarray(tau, dtype=float) - terms.b
    if nc == 0:
        return np.linalg.solve(terms.M, rhs_top), np.zeros(0)
    kkt = np.zeros((n + nc, n + nc))
    kkt[:n, :n] = terms.M
    kkt[:n, n:] = terms.Jc.T
    kkt[n:, :n] = terms.Jc
    rhs = np.concatenate([rhs_top, -terms.Jc_dot @ terms.qd])
    sol = np.linalg.solve(kkt, rhs)
    return sol[:n], sol[n:]


def torque_equality_qp(terms, j_task, bvec) -> np.ndarray:
    """Minimum-effort torque for one task via a generic equality-QP solve.

    Solves  min_G  G' (U Nc Minv Nc' U') G   s.t.  (J Nc Minv U') G = bvec
    by null-space elimination — a route disjoint from any weighted
    pseudo-inverse closed form.
    """
    u_nc = terms.U @ terms.Nc
    phi_inv = u_nc @ terms.Minv @ u_nc.T
    task_map = np.atleast_2d(j_task) @ terms.Nc @ terms.Minv @ terms.U.T
    return nullspace_qp(phi_inv, np.zeros(phi_inv.shape[0]), task_map, bvec)


def effort_norm(terms, torque) -> float:
    """The weighted squared norm G' (U Nc Minv Nc' U') G used by the torque QP."""
    u_nc = terms.U @ terms.Nc
    torque = np.asarray(torque, dtype=float)
    return float(torque @ (u_nc @ terms.Minv @ u_nc.T) @ torque)


def lexicographic_ik(jacobians, deltas) -> np.ndarray:
    """Minimum-norm lexicographic least-squares joint increment.

    Stage k minimizes ||J_k dq - dx_k|| over the affine set of minimizers of
    every earlier stage, each stage solved by lstsq on an explicit orthonormal
    parameterization of that set.
    """
    n = np.atleast_2d(np.asarray(jacobians[0], dtype=float)).shape[1]
    dq = np.zeros(n)
    basis = np.eye(n)
    for jk, dx in zip(jacobians, deltas):
        jk = np.atleast_2d(np.asarray(jk, dtype=float))
        dx = np.atleast_1d(np.asarray(dx, dtype=float))
        a = jk @ basis
        y, *_ = np.linalg.lstsq(a, dx - jk @ dq, rcond=None)
        dq = dq + basis @ y
        basis = basis @ null_basis(a)
        if basis.shape[1] == 0:
            break
    return dq


# ---------------------------------------------------------------------------
# random QCQP generator and long-run projected-gradient oracle


def random_qcqp(rng):
    """Feasible-by-construction strictly convex QCQP (vars<=12, eqs<=4,
    ineqs<=3). The ridge keeps every instance bounded below."""
    from wbmpc.qcqp import DenseQcqp

    n = int(rng.integers(2, 13))
    n_eq = int(rng.integers(0, min(4, n - 1) + 1))
    n_in = int(rng.integers(1, 4))
    M = rng.standard_normal((n, n))
    P = M @ M.T / n + 0.05 * np.eye(n)
    p = rng.standard_normal(n)
    z0 = rng.standard_normal(n)  # guaranteed-feasible point
    if n_eq:
        A = rng.standard_normal((n_eq, n))
        b = A @ z0
        eq_map, eq_off = A, -b
    else:
        eq_map = eq_off = None
    cons = []
    for _ in range(n_in):
        if rng.random() < 0.3:
            J = np.zeros((n, n))
        else:
            k = int(rng.integers(1, n + 1))
            G = rng.standard_normal((k, n))
            J = G.T @ G / n
        Z = rng.standard_normal(n)
        slack = 10.0 ** rng.uniform(-2, 1)
        E = -(z0 @ J @ z0 + Z @ z0) - slack  # value at z0 = -slack < 0
        cons.append((J, Z, E))
    return DenseQcqp(P=P, p=p, eq_map=eq_map, eq_off=eq_off, quad_ineqs=cons), z0


class Projector:
    """Alternating projection onto {eq} ∩ {ineqs <= 0} with a cached
    equality pseudo-inverse."""

    def __init__(self, dense):
        self.dense = dense
        self.pinv = (np.linalg.pinv(dense.eq_map)
                     if dense.eq_map.shape[0] else None)

    def __call__(self, z, rounds=40):
        d = self.dense
        for _ in range(rounds):
            if self.pinv is not None:
                z = z - self.pinv @ d.eq_residual(z)
            worst = 0.0
            for c in d.quad_ineqs:
                val = c.value(z)
                if val > 0.0:
                    g = c.grad(z)
                    gg = float(g @ g)
                    if gg > 1e-300:
                        z = z - (val / gg) * g
                    worst = max(worst, val)
            if worst == 0.0 and (self.pinv is None
                                 or np.abs(d.eq_residual(z)).max() < 1e-12):
                break
        return z

    def feasible(self, z, tol=1e-8):
        d = self.dense
        if d.ineq_values(z).max(initial=-1.0) > tol:
            return False
        if self.pinv is not None and np.abs(d.eq_residual(z)).max() > tol:
            return False
        return True


def _tangent_basis(dense, z, tol=1e-6):
    """Orthonormal basis of directions tangent to the near-active constraint
    surface (and the equalities) at z."""
    rows = [c.grad(z) for c in dense.quad_ineqs
            if c.value(z) > -tol * max(1.0, abs(c.E))]
    if dense.eq_map.shape[0]:
        rows.extend(dense.eq_map)
    if not rows:
        return np.eye(dense.n)
    A = np.array(rows)
    _, s, vt = np.linalg.svd(A)
    cut = s.max(initial=0.0) * max(A.shape) * np.finfo(float).eps
    rank = int((s > cut).sum())
    return vt[rank:].T


def oracle_solve(dense, z0, max_steps=3000):
    """Monotone accelerated projected gradient from the feasible seed, then
    shrinking grid refinement around the endpoint (grid directions spanning
    the active-surface tangent space plus full-space probes), then KKT
    verification.  Returns (z_star, f_star, stationarity_residual)."""
    proj = Projector(dense)
    f = dense.objective_value
    L = 2.0 * np.abs(np.linalg.eigvalsh(dense.P)).max() + 1.0
    eta = 1.0 / L
    z = proj(z0.copy())
    y, tk = z.copy(), 1.0
    fz = f(z)
    quiet = 0
    for step in range(max_steps):
        cand = proj(y - eta * (2.0 * (dense.P @ y) + dense.p), rounds=8)
        f_cand = f(cand)
        if f_cand <= fz:
            z_new, f_new = cand, f_cand
        else:  # monotone fallback: plain projected-gradient step from z
            pg = proj(z - eta * (2.0 * (dense.P @ z) + dense.p), rounds=8)
            f_pg = f(pg)
            z_new, f_new = (pg, f_pg) if f_pg < fz else (z, fz)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        y = z_new + (tk / t_new) * (cand - z_new) + ((tk - 1.0) / t_new) * (z_new - z)
        move = float(np.abs(z_new - z).max())
        z, fz, tk = z_new, f_new, t_new
        quiet = quiet + 1 if move < 1e-13 * max(1.0, float(np.abs(z).max())) else 0
        if quiet >= 5 and step > 50:
            break
    best = proj(z, rounds=200)
    best_f = f(best)
    rng = np.random.default_rng(0)
    n = dense.n
    radius = 1e-1
    while radius > 1e-9:
        improved = False
        tang = _tangent_basis(dense, best, tol=max(radius, 1e-6))
        dirs = [col for col in tang.T] + [-col for col in tang.T]
        dirs += [tang @ rng.standard_normal(tang.shape[1])
                 for _ in range(2)] if tang.shape[1] else []
        dirs += [rng.standard_normal(n) for _ in range(max(2, n // 2))]
        for d in dirs:
            nd = float(np.linalg.norm(d))
            if nd < 1e-12:
                continue
            cand = proj(best + (radius / nd) * d, rounds=60)
            if not proj.feasible(cand):
                continue
            fc = f(cand)
            if fc < best_f - 1e-14 * max(1.0, abs(best_f)):
                best, best_f, improved = cand, fc, True
        if not improved:
            radius *= 0.3
    # KKT verification: fit duals from near-active constraints
    grad = 2.0 * (dense.P @ best) + dense.p
    vals = dense.ineq_values(best)
    cols = [c.grad(best) if v > -1e-5 * max(1.0, abs(c.E)) else np.zeros(n)
            for c, v in zip(dense.quad_ineqs, vals)]
    mats = [np.array(cols).T] if cols else []
    if dense.eq_map.shape[0]:
        mats.append(dense.eq_map.T)
    if mats:
        A = np.hstack(mats)
        mult, *_ = np.linalg.lstsq(A, -grad, rcond=None)
        stat = np.abs(grad + A @ mult).max() / max(1.0, np.abs(grad).max())
    else:
        stat = np.abs(grad).max() / max(1.0, np.abs(grad).max())
    return best, best_f, stat
