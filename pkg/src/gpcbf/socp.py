"""Small dense second-order cone program solver.

Solves problems of the form

    minimize    c^T x
    subject to  ||A_i x + b_i|| <= e_i^T x + d_i,   i = 1..K

with a primal-dual interior-point method on the homogeneous self-dual
embedding, using Nesterov-Todd scaling.  A constraint with an empty A
block (zero rows) degenerates to the linear inequality e^T x + d >= 0.
The embedding yields infeasibility certificates, so the solver can
distinguish "optimal" from "infeasible" instead of merely stalling.

Everything is dense and sized for the handful of variables and cones the
min-norm controllers generate; there is no sparse path.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor as scipy_lu_factor, lu_solve as scipy_lu_solve

__all__ = [
    "SocConstraintRaw",
    "SocProgram",
    "SolveResult",
    "solve",
    "quadratic_objective_to_cone",
    "format_program",
]

STEP_FRACTION = 0.99
MIN_STEP = 1e-13


@dataclass(frozen=True)
class SocConstraintRaw:
    """One cone ||A x + b|| <= e^T x + d in solver standard form."""

    A: np.ndarray
    b: np.ndarray
    e: np.ndarray
    d: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.size == 0:
            A = A.reshape(0, np.asarray(self.e).size)
        e = np.asarray(self.e, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b row counts differ")
        if A.shape[1] != e.shape[0]:
            raise ValueError("A and e column counts differ")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "d", float(self.d))

    @property
    def n_vars(self):
        return self.A.shape[1]

    def margin(self, x):
        """Slack e^T x + d - ||A x + b|| (nonnegative iff satisfied)."""
        x = np.asarray(x, dtype=float)
        return float(self.e @ x + self.d - np.linalg.norm(self.A @ x + self.b))


@dataclass(frozen=True)
class SocProgram:
    """min c^T x subject to a list of second-order cone constraints."""

    c: np.ndarray
    cones: tuple

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        cones = tuple(self.cones)
        if not cones:
            raise ValueError("program needs at least one cone")
        for con in cones:
            if con.n_vars != c.shape[0]:
                raise ValueError("cone/objective variable counts differ")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "cones", cones)

    @property
    def n_vars(self):
        return self.c.shape[0]


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | unbounded | max-iterations
    x: np.ndarray
    objective: float
    iterations: int
    residuals: dict = field(default_factory=dict)


def quadratic_objective_to_cone(weights, n_vars):
    """Epigraph reformulation of a diagonal quadratic objective.

    ``weights`` is a list of (weight, variable-index) pairs.  Appends an
    epigraph variable t at index n_vars and returns (c_aug, cone) where
    minimizing c_aug^T [x; t] = t under the returned cone

        || [2 sqrt(w_1) x_{i_1}; ...; t - 1] || <= t + 1

    enforces sum_k w_k x_{i_k}^2 <= t.
    """
    if not weights:
        raise ValueError("need at least one quadratic term")
    rows = len(weights) + 1
    A = np.zeros((rows, n_vars + 1))
    b = np.zeros(rows)
    for row, (w, idx) in enumerate(weights):
        if w <= 0:
            raise ValueError("quadratic weights must be positive")
        if not 0 <= idx < n_vars:
            raise ValueError("variable index out of range")
        A[row, idx] = 2.0 * np.sqrt(w)
    A[rows - 1, n_vars] = 1.0
    b[rows - 1] = -1.0
    e = np.zeros(n_vars + 1)
    e[n_vars] = 1.0
    c_aug = np.zeros(n_vars + 1)
    c_aug[n_vars] = 1.0
    return c_aug, SocConstraintRaw(A=A, b=b, e=e, d=1.0)


def format_program(prog):
    """Human-readable dump of a program for failure triage."""
    out = io.StringIO()
    out.write(f"SocProgram: {prog.n_vars} variables, {len(prog.cones)} cones\n")
    out.write("objective c = " + np.array2string(prog.c, precision=12) + "\n")
    for i, con in enumerate(prog.cones):
        out.write(f"cone[{i}]: ||A x + b|| <= e.x + d   (dim {con.A.shape[0] + 1})\n")
        out.write("  A = " + np.array2string(con.A, precision=12) + "\n")
        out.write("  b = " + np.array2string(con.b, precision=12) + "\n")
        out.write("  e = " + np.array2string(con.e, precision=12) + "\n")
        out.write(f"  d = {con.d!r}\n")
    return out.getvalue()


# -- second-order cone Jordan algebra ---------------------------------------
#
# A vector u = (u0, u1) in R^p has spectral values u0 +/- ||u1||.  The
# quadratic representation P(u) v = 2 u (u.v) - det(u) J v with
# det(u) = u0^2 - ||u1||^2 and J = diag(1, -1, ..., -1) drives the
# Nesterov-Todd scaling: W = P(w^(1/2)) for the scaling point w that maps
# z to s.


def _det(u):
    return u[0] ** 2 - u[1:] @ u[1:]


def _sqrt_vec(u):
    nrm = np.linalg.norm(u[1:])
    lam1, lam2 = u[0] + nrm, u[0] - nrm
    if lam2 <= 0:
        raise FloatingPointError("vector left the cone interior")
    a = 0.5 * (np.sqrt(lam1) + np.sqrt(lam2))
    bcoef = 0.5 * (np.sqrt(lam1) - np.sqrt(lam2))
    out = np.empty_like(u)
    out[0] = a
    out[1:] = bcoef * u[1:] / nrm if nrm > 0 else 0.0
    return out


def _inv_vec(u):
    d = _det(u)
    out = -u / d
    out[0] = u[0] / d
    return out


def _p_apply(u, v):
    return 2.0 * u * (u @ v) - _det(u) * _jmul(v)


def _jmul(v):
    out = -v.copy()
    out[0] = v[0]
    return out


def _p_matrix(u):
    p = u.shape[0]
    J = -np.eye(p)
    J[0, 0] = 1.0
    return 2.0 * np.outer(u, u) - _det(u) * J


def _nt_block(s, z):
    """NT scaling for one cone block: returns (W, W^{-1}, lambda).

    W = P(w^(1/2)) for the scaling point w with P(w) z = s; both W and
    its inverse come from closed-form spectral operations, so no
    factorization is needed even when the block sits near the boundary.
    """
    s_half = _sqrt_vec(s)
    t = _p_apply(s_half, z)
    w = _p_apply(s_half, _sqrt_vec(_inv_vec(t)))
    q = _sqrt_vec(w)
    W = _p_matrix(q)
    Winv = _p_matrix(_inv_vec(q))
    return W, Winv, W @ z


def _circ(u, v):
    out = np.empty_like(u)
    out[0] = u @ v
    out[1:] = u[0] * v[1:] + v[0] * u[1:]
    return out


def _circ_solve(lam, d):
    """Solve lam o q = d for q."""
    det = _det(lam)
    q = np.empty_like(d)
    q[0] = (lam[0] * d[0] - lam[1:] @ d[1:]) / det
    q[1:] = (d[1:] - q[0] * lam[1:]) / lam[0]
    return q


def _cone_margins(v, slices):
    return np.array(
        [v[sl][0] - np.linalg.norm(v[sl][1:]) for sl in slices]
    )


def _max_step(v, dv, slices):
    """Largest alpha with v + alpha*dv in the cone product (can be inf)."""
    alpha = np.inf
    for sl in slices:
        s0, s1 = v[sl][0], v[sl][1:]
        d0, d1 = dv[sl][0], dv[sl][1:]
        a = d0 * d0 - d1 @ d1
        bq = 2.0 * (s0 * d0 - s1 @ d1)
        cq = s0 * s0 - s1 @ s1
        if abs(a) < 1e-15 * max(1.0, abs(bq), abs(cq)):
            if bq < 0:
                alpha = min(alpha, -cq / bq)
        else:
            disc = bq * bq - 4.0 * a * cq
            if a > 0:
                if disc >= 0:
                    r1 = (-bq - np.sqrt(disc)) / (2.0 * a)
                    if r1 > 0:
                        alpha = min(alpha, r1)
            else:
                r2 = (-bq - np.sqrt(max(disc, 0.0))) / (2.0 * a)
                if r2 > 0:
                    alpha = min(alpha, r2)
        if d0 < 0:
            alpha = min(alpha, -s0 / d0)
    return alpha


# -- solver ------------------------------------------------------------------


def _build_conic_data(prog):
    """Stack cones into (G, h, dims): s = h - G x must lie in the cone."""
    blocks_G, blocks_h, dims = [], [], []
    for con in prog.cones:
        Gblk = -np.vstack([con.e[np.newaxis, :], con.A])
        hblk = np.concatenate([[con.d], con.b])
        blocks_G.append(Gblk)
        blocks_h.append(hblk)
        dims.append(Gblk.shape[0])
    return np.vstack(blocks_G), np.concatenate(blocks_h), dims


def _equilibrate(G, h, c, slices):
    """Ruiz-style scaling; rows belonging to one cone share a single factor
    so the cone geometry is preserved.  Returns scaled data plus the
    diagonal column scaling needed to map solutions back."""
    n = G.shape[1]
    col = np.ones(n)
    Gs, hs = G.copy(), h.copy()
    for _ in range(4):
        for sl in slices:
            blk = np.sqrt(max(np.abs(Gs[sl]).max(initial=0.0),
                              np.abs(hs[sl]).max(initial=0.0), 1e-12))
            Gs[sl] /= blk
            hs[sl] /= blk
        cn = np.sqrt(np.maximum(np.abs(Gs).max(axis=0), 1e-12))
        Gs /= cn[None, :]
        col /= cn
    cs = c * col
    obj_scale = max(np.linalg.norm(cs), 1.0)
    return Gs, hs, cs / obj_scale, col, obj_scale


def _initial_point(G, h, c, dims, slices):
    """Least-squares start pushed into the cone interior."""
    x, *_ = np.linalg.lstsq(G, h, rcond=None)
    s = h - G @ x
    z, *_ = np.linalg.lstsq(G.T, -c, rcond=None)
    z = -z  # aim for G^T z + c = 0 with z in the cone
    for v in (s, z):
        deficit = -min(_cone_margins(v, slices).min(), 0.0)
        shift = deficit + 1.0
        for sl in slices:
            v[sl][0] += shift
    return x, s, z


class _KktSolver:
    """Factorization of the scaled Newton equations for one iteration.

    Eliminating ds via the scaled complementarity equation leaves the
    augmented system

        [ 0    G^T ] [dx]   [rd]
        [ G   -W^2 ] [dz] = [rp]

    which is factorized once per interior-point iteration.  Solving the
    augmented form (instead of the W^-2-weighted normal equations) keeps
    the condition number at O(1/mu) rather than O(1/mu^2), which is what
    lets iterative refinement converge near the cone boundary.
    """

    def __init__(self, G, Wmats, Winvmats, lamb, slices, tau, kappa, c, h):
        self.G = G
        self.Wmats = Wmats
        self.Winvmats = Winvmats
        self.lamb = lamb
        self.slices = slices
        self.tau = tau
        self.kappa = kappa
        self.c = c
        self.h = h
        nv = G.shape[1]
        nd = G.shape[0]
        kkt = np.zeros((nv + nd, nv + nd))
        kkt[:nv, nv:] = G.T
        kkt[nv:, :nv] = G
        for k, sl in enumerate(slices):
            W = Wmats[k]
            rows = slice(nv + sl.start, nv + sl.stop)
            kkt[rows, rows] = -(W @ W)
        self.nv = nv
        self.kkt = kkt
        self.lu = scipy_lu_factor(kkt, check_finite=False)
        # the tau-column pair is shared by every right-hand side
        self.x2, self.z2 = self._aug_solve(-c, h)
        self.denom = c @ self.x2 + h @ self.z2 - kappa / tau

    def _aug_solve(self, rd, rp):
        sol = scipy_lu_solve(self.lu, np.concatenate([rd, rp]), check_finite=False)
        return sol[: self.nv], sol[self.nv:]

    def _apply_w(self, mats, v):
        out = np.empty_like(v)
        for k, sl in enumerate(self.slices):
            out[sl] = mats[k] @ v[sl]
        return out

    def _raw_solve(self, R1, R2, R3, R4, R5):
        q = np.empty_like(R4)
        for k, sl in enumerate(self.slices):
            q[sl] = _circ_solve(self.lamb[sl], R4[sl])
        Wq = self._apply_w(self.Wmats, q)
        x1, z1 = self._aug_solve(R1, R2 - Wq)
        dtau = (R3 - R5 / self.tau - self.c @ x1 - self.h @ z1) / self.denom
        dx = x1 + dtau * self.x2
        dz = z1 + dtau * self.z2
        ds = Wq - self._apply_w(self.Wmats, self._apply_w(self.Wmats, dz))
        dkappa = (R5 - self.kappa * dtau) / self.tau
        return dx, ds, dz, dtau, dkappa

    def solve(self, R1, R2, R3, R4, R5, refine=True):
        """Solve the linearized embedding equations

            G^T dz + c dtau             = R1
            ds + G dx - h dtau          = R2
            dkappa + c.dx + h.dz        = R3
            lam o (W dz + W^-1 ds)      = R4
            kappa dtau + tau dkappa     = R5

        with adaptive full-system iterative refinement (skipped early in
        the path following, where direction precision is immaterial).
        """
        dx, ds, dz, dtau, dkappa = self._raw_solve(R1, R2, R3, R4, R5)
        if not refine:
            return dx, ds, dz, dtau, dkappa
        G, c, h = self.G, self.c, self.h
        rhs_scale = max(
            np.linalg.norm(R1), np.linalg.norm(R2), abs(R3),
            np.linalg.norm(R4), abs(R5), 1e-300,
        )
        for _ in range(3):
            r1 = R1 - (G.T @ dz + c * dtau)
            r2 = R2 - (ds + G @ dx - h * dtau)
            r3 = R3 - (dkappa + c @ dx + h @ dz)
            scaled = self._apply_w(self.Wmats, dz) + self._apply_w(self.Winvmats, ds)
            r4 = R4.copy()
            for sl in self.slices:
                r4[sl] -= _circ(self.lamb[sl], scaled[sl])
            r5 = R5 - (self.kappa * dtau + self.tau * dkappa)
            err = max(np.linalg.norm(r1), np.linalg.norm(r2), abs(r3),
                      np.linalg.norm(r4), abs(r5))
            if err <= 1e-13 * rhs_scale:
                break
            cx, cs, cz, ct, ck = self._raw_solve(r1, r2, r3, r4, r5)
            dx += cx
            ds += cs
            dz += cz
            dtau += ct
            dkappa += ck
        return dx, ds, dz, dtau, dkappa


def solve(prog, tol=1e-8, max_iter=100):
    """Solve a SocProgram.

    Returns a SolveResult whose status is "optimal" (x feasible within
    tol, duality gap below tol), "infeasible" (a Farkas-type certificate
    was found), "unbounded", or "max-iterations" (numerical stall; the
    caller should treat the step as not actionable).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    G0, h0, dims = _build_conic_data(prog)
    slices = []
    start = 0
    for p in dims:
        slices.append(slice(start, start + p))
        start += p
    G, h, c, col_scale, obj_scale = _equilibrate(G0, h0, prog.c, slices)
    ncones = len(dims)

    x, s, z = _initial_point(G, h, c, dims, slices)
    tau, kappa = 1.0, 1.0
    e_all = np.zeros(sum(dims))
    for sl in slices:
        e_all[sl][0] = 1.0

    hnorm = max(1.0, np.linalg.norm(h))
    cnorm = max(1.0, np.linalg.norm(c))

    def evaluate(x, s, z, tau, kappa):
        pres = np.linalg.norm(s + G @ x - h * tau) / tau / hnorm
        dres = np.linalg.norm(G.T @ z + c * tau) / tau / cnorm
        pobj = (c @ x) / tau
        dobj = -(h @ z) / tau
        gap = (s @ z) / tau**2
        relgap = gap / max(1.0, abs(pobj), abs(dobj))
        hz = h @ z
        pinf = np.linalg.norm(G.T @ z) / (-hz) / max(1.0, np.linalg.norm(z)) \
            if hz < -tol else np.inf
        cx = c @ x
        dinf = np.linalg.norm(G @ x + s) / (-cx) / max(1.0, np.linalg.norm(x)) \
            if cx < -tol else np.inf
        return {
            "primal_residual": pres,
            "dual_residual": dres,
            "gap": gap,
            "relative_gap": relgap,
            "primal_infeasibility": pinf,
            "dual_infeasibility": dinf,
        }

    def verdict(m):
        if (m["primal_residual"] <= tol and m["dual_residual"] <= tol
                and (m["gap"] <= tol or m["relative_gap"] <= tol)):
            return "optimal"
        if m["primal_infeasibility"] <= tol:
            return "infeasible"
        if m["dual_infeasibility"] <= tol:
            return "unbounded"
        return None

    def score(m):
        return max(m["primal_residual"], m["dual_residual"],
                   min(m["gap"], m["relative_gap"]),
                   min(1.0, m["primal_infeasibility"]),
                   min(1.0, m["dual_infeasibility"]))

    best_metrics = None
    best_point = None
    status = None
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if not 0.1 <= tau <= 10.0:
            # the embedding is homogeneous: renormalize the ray so the
            # 1/tau amplification cannot swamp the residual metrics
            f = 1.0 / tau
            x *= f
            s *= f
            z *= f
            kappa *= f
            tau = 1.0
        metrics = evaluate(x, s, z, tau, kappa)
        if best_metrics is None or score(metrics) < score(best_metrics):
            best_metrics = metrics
            best_point = (x.copy(), z.copy(), tau)
        status = verdict(metrics)
        if status is not None:
            best_metrics, best_point = metrics, (x.copy(), z.copy(), tau)
            break

        rx = G.T @ z + c * tau
        rz = s + G @ x - h * tau
        rtau = kappa + c @ x + h @ z
        mu = (s @ z + tau * kappa) / (ncones + 1)
        try:
            Wmats, Winvmats, lamb = [], [], np.empty_like(s)
            for k, sl in enumerate(slices):
                W, Winv, lam = _nt_block(s[sl], z[sl])
                Wmats.append(W)
                Winvmats.append(Winv)
                lamb[sl] = lam
        except FloatingPointError:
            break

        try:
            kkt = _KktSolver(G, Wmats, Winvmats, lamb, slices, tau, kappa, c, h)
        except (np.linalg.LinAlgError, ValueError):
            break

        lam_lam = np.empty_like(lamb)
        for sl in slices:
            lam_lam[sl] = _circ(lamb[sl], lamb[sl])

        # predictor (affine scaling) direction
        refine = mu <= 1e-5
        dxa, dsa, dza, dtaua, dkappaa = kkt.solve(
            -rx, -rz, -rtau, -lam_lam, -tau * kappa, refine=refine
        )
        alpha_a = min(
            _max_step(s, dsa, slices),
            _max_step(z, dza, slices),
            -tau / dtaua if dtaua < 0 else np.inf,
            -kappa / dkappaa if dkappaa < 0 else np.inf,
            1.0,
        )
        sigma = min(1.0, max(0.0, (1.0 - alpha_a))) ** 3

        # corrector (combined) direction with Mehrotra second-order term
        corr = np.empty_like(lamb)
        for k, sl in enumerate(slices):
            corr[sl] = _circ(Winvmats[k] @ dsa[sl], Wmats[k] @ dza[sl])
        d_s = sigma * mu * e_all - lam_lam - corr
        d_kappa = sigma * mu - tau * kappa - dtaua * dkappaa
        eta = 1.0 - sigma
        dx, ds, dz, dtau, dkappa = kkt.solve(
            -eta * rx, -eta * rz, -eta * rtau, d_s, d_kappa, refine=refine
        )
        alpha = min(
            _max_step(s, ds, slices),
            _max_step(z, dz, slices),
            -tau / dtau if dtau < 0 else np.inf,
            -kappa / dkappa if dkappa < 0 else np.inf,
        )
        if alpha < 1e-3:
            # combined step collapsed (degenerate endgame): take a pure
            # centering step to restore centrality and try again next round
            dx, ds, dz, dtau, dkappa = kkt.solve(
                0.0 * rx, 0.0 * rz, 0.0, mu * e_all - lam_lam,
                mu - tau * kappa, refine=refine,
            )
            alpha = min(
                _max_step(s, ds, slices),
                _max_step(z, dz, slices),
                -tau / dtau if dtau < 0 else np.inf,
                -kappa / dkappa if dkappa < 0 else np.inf,
            )
        alpha = min(1.0, STEP_FRACTION * alpha)
        if alpha < MIN_STEP:
            break
        x += alpha * dx
        s += alpha * ds
        z += alpha * dz
        tau += alpha * dtau
        kappa += alpha * dkappa
    else:
        status = verdict(evaluate(x, s, z, tau, kappa))

    if status is None and best_metrics is not None:
        status = verdict(best_metrics)
    residuals = best_metrics or {}
    if status == "optimal":
        xb, _, taub = best_point
        xsol = col_scale * (xb / taub)
        return SolveResult(
            status="optimal",
            x=xsol,
            objective=float(prog.c @ xsol),
            iterations=iterations,
            residuals=residuals,
        )
    if status in ("infeasible", "unbounded"):
        return SolveResult(
            status=status,
            x=np.full(prog.n_vars, np.nan),
            objective=np.nan,
            iterations=iterations,
            residuals=residuals,
        )
    return SolveResult(
        status="max-iterations",
        x=np.full(prog.n_vars, np.nan),
        objective=np.nan,
        iterations=iterations,
        residuals=residuals,
    )
