"""Entropic Gromov-Wasserstein alignment of two trajectory sets.

The solver alternates two steps: rebuild the linearized cost matrix around the
current coupling, then project back onto the coupling constraints with inner
Sinkhorn scaling. The quadratic alignment objective itself (sum over all
pairs-of-pairs of squared distance discrepancies) is evaluated by direct
summation and reported unregularized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError
from .trajectory import DistanceMatrix

MASS_TOL = 1e-9


def _as_array(matrix) -> np.ndarray:
    """Accept a DistanceMatrix, TransportPlan, or plain array."""
    if isinstance(matrix, DistanceMatrix):
        return matrix.values
    if isinstance(matrix, TransportPlan):
        return matrix.values
    return np.asarray(matrix, dtype=np.float64)


@dataclass
class TransportPlan:
    """A coupling: nonnegative matrix whose margins match two mass vectors.

    converged/iterations_used are diagnostics filled in by the Sinkhorn solver;
    they stay None on hand-built plans.
    """

    values: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    converged: bool | None = None
    iterations_used: int | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.row_marginal = np.asarray(self.row_marginal, dtype=np.float64)
        self.col_marginal = np.asarray(self.col_marginal, dtype=np.float64)
        m, n = self.values.shape
        if self.row_marginal.shape != (m,) or self.col_marginal.shape != (n,):
            raise ValueError(
                f"marginal lengths {self.row_marginal.shape}, {self.col_marginal.shape} "
                f"do not match plan shape {self.values.shape}"
            )
        if (self.values < 0).any():
            raise ValueError("transport plan entries must be nonnegative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def marginal_residuals(self) -> tuple[float, float]:
        """Max row- and column-sum deviations from the prescribed marginals."""
        row = float(np.abs(self.values.sum(axis=1) - self.row_marginal).max())
        col = float(np.abs(self.values.sum(axis=0) - self.col_marginal).max())
        return row, col

    def validate(self, marginal_tol: float) -> None:
        """Check feasibility invariants; raises NumericalError on violation."""
        if not np.isfinite(self.values).all():
            raise NumericalError("transport plan contains non-finite entries")
        if (self.values < 0).any():
            raise NumericalError("transport plan contains negative entries")
        row, col = self.marginal_residuals()
        if row > marginal_tol or col > marginal_tol:
            raise NumericalError(
                f"marginal residuals ({row:.3e}, {col:.3e}) exceed {marginal_tol:.3e}"
            )
        if abs(float(self.values.sum()) - 1.0) > MASS_TOL:
            raise NumericalError("total transported mass differs from 1")

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "row_marginal": self.row_marginal.tolist(),
            "col_marginal": self.col_marginal.tolist(),
        }


@dataclass
class GwConfig:
    """Solver knobs.

    entropic_reg is the smoothing strength of the inner Sinkhorn projection;
    None selects 0.01 x median of the positive linearized-cost entries at the
    first outer step (falling back to 1.0 if no entry is positive). log_domain
    switches the inner loop to logsumexp scaling, which tolerates much smaller
    regularization before underflow.
    """

    entropic_reg: float | None = None
    outer_iters: int = 1000
    sinkhorn_iters: int = 1000
    outer_tol: float = 1e-9
    marginal_tol: float = 1e-9
    log_domain: bool = False

    def __post_init__(self) -> None:
        if self.entropic_reg is not None and self.entropic_reg <= 0:
            raise ValueError("entropic_reg must be positive")
        if self.outer_iters < 1 or self.sinkhorn_iters < 1:
            raise ValueError("iteration counts must be positive")
        if self.outer_tol <= 0 or self.marginal_tol <= 0:
            raise ValueError("tolerances must be positive")

    def to_dict(self) -> dict:
        return {
            "entropic_reg": self.entropic_reg,
            "outer_iters": self.outer_iters,
            "sinkhorn_iters": self.sinkhorn_iters,
            "outer_tol": self.outer_tol,
            "marginal_tol": self.marginal_tol,
            "log_domain": self.log_domain,
        }


@dataclass
class GwReport:
    """Final coupling plus solver diagnostics."""

    plan: TransportPlan
    objective: float
    outer_iterations_used: int
    converged: bool

    def to_dict(self) -> dict:
        out = self.plan.to_dict()
        out.update(
            objective=self.objective,
            outer_iterations_used=self.outer_iterations_used,
            converged=self.converged,
        )
        return out


def init_plan(m: int, n: int) -> TransportPlan:
    """The flat coupling: every entry 1/(m*n), uniform marginals."""
    if m < 1 or n < 1:
        raise ValueError("plan dimensions must be >= 1")
    return TransportPlan(
        values=np.full((m, n), 1.0 / (m * n)),
        row_marginal=np.full(m, 1.0 / m),
        col_marginal=np.full(n, 1.0 / n),
    )


def constant_offset(c_s, c_t, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """The coupling-independent part of the linearized alignment cost.

    offset[i, j] = sum_i' C_s[i, i']^2 p[i']  +  sum_j' C_t[j, j']^2 q[j']
    (squares are elementwise). Adding it to the cross term makes the
    linearized cost's inner product with the coupling match the quadratic
    objective at feasible couplings.
    """
    c_s = _as_array(c_s)
    c_t = _as_array(c_t)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m, n = c_s.shape[0], c_t.shape[0]
    if c_s.shape != (m, m) or c_t.shape != (n, n):
        raise ValueError("distance matrices must be square")
    if p.shape != (m,) or q.shape != (n,):
        raise ValueError("marginal lengths must match the distance matrices")
    row_part = (c_s**2) @ p  # length m
    col_part = (c_t**2) @ q  # length n
    return row_part[:, None] + col_part[None, :]


def gw_cost_matrix(c_st: np.ndarray, c_s, c_t, plan) -> np.ndarray:
    """Linearized alignment cost around a coupling: C_st - 2 * C_s T C_t^T."""
    c_st = np.asarray(c_st, dtype=np.float64)
    c_s = _as_array(c_s)
    c_t = _as_array(c_t)
    t = _as_array(plan)
    if t.shape != (c_s.shape[0], c_t.shape[0]) or c_st.shape != t.shape:
        raise ValueError("dimension mismatch between cost pieces and coupling")
    return c_st - 2.0 * c_s @ t @ c_t.T


def _sinkhorn_plain(
    kernel_exponent: np.ndarray,
    p: np.ndarray,
    q: np.ndarray,
    iters: int,
    marginal_tol: float,
) -> tuple[np.ndarray, bool, int]:
    """Alternating row/column scaling of K = exp(kernel_exponent)."""
    kernel = np.exp(kernel_exponent)
    m, n = kernel.shape
    u = np.full(m, 1.0 / m)
    v = np.full(n, 1.0 / n)
    converged = False
    used = 0
    for it in range(1, iters + 1):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            u = p / (kernel @ v)
            v = q / (kernel.T @ u)
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise NumericalError(
                "Sinkhorn scaling produced non-finite factors (kernel underflow); "
                "increase entropic_reg or enable log_domain mode"
            )
        used = it
        plan = u[:, None] * kernel * v[None, :]
        row_res = np.abs(plan.sum(axis=1) - p).max()
        col_res = np.abs(plan.sum(axis=0) - q).max()
        if row_res < marginal_tol and col_res < marginal_tol:
            converged = True
            break
    plan = u[:, None] * kernel * v[None, :]
    return plan, converged, used


def _sinkhorn_log(
    kernel_exponent: np.ndarray,
    p: np.ndarray,
    q: np.ndarray,
    iters: int,
    marginal_tol: float,
) -> tuple[np.ndarray, bool, int]:
    """Same fixed point, computed with log-domain potentials."""
    log_p = np.log(p)
    log_q = np.log(q)
    m, n = kernel_exponent.shape
    log_u = np.full(m, -np.log(m))
    log_v = np.full(n, -np.log(n))
    converged = False
    used = 0
    for it in range(1, iters + 1):
        log_u = log_p - logsumexp(kernel_exponent + log_v[None, :], axis=1)
        log_v = log_q - logsumexp(kernel_exponent + log_u[:, None], axis=0)
        used = it
        plan = np.exp(log_u[:, None] + kernel_exponent + log_v[None, :])
        row_res = np.abs(plan.sum(axis=1) - p).max()
        col_res = np.abs(plan.sum(axis=0) - q).max()
        if row_res < marginal_tol and col_res < marginal_tol:
            converged = True
            break
    plan = np.exp(log_u[:, None] + kernel_exponent + log_v[None, :])
    if not np.isfinite(plan).all():
        raise NumericalError("log-domain Sinkhorn produced non-finite plan entries")
    return plan, converged, used


def sinkhorn(
    cost: np.ndarray,
    p: np.ndarray,
    q: np.ndarray,
    entropic_reg: float,
    iters: int = 1000,
    marginal_tol: float = 1e-9,
    log_domain: bool = False,
) -> TransportPlan:
    """Entropic projection of exp(-cost/entropic_reg) onto the couplings.

    Stops when both marginal residuals (infinity norm) drop below
    marginal_tol or the iteration budget runs out; non-convergence is reported
    on the returned plan's flag, not raised. The cost is shifted by its
    minimum before exponentiation — the shift cancels in the scaled output and
    prevents overflow.
    """
    cost = np.asarray(cost, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if entropic_reg <= 0:
        raise ValueError("entropic_reg must be positive")
    if (p <= 0).any() or (q <= 0).any():
        raise ValueError("marginals must be strictly positive")
    if cost.shape != (p.shape[0], q.shape[0]):
        raise ValueError("cost shape must match marginal lengths")
    exponent = -(cost - cost.min()) / entropic_reg
    runner = _sinkhorn_log if log_domain else _sinkhorn_plain
    values, converged, used = runner(exponent, p, q, iters, marginal_tol)
    return TransportPlan(
        values=values,
        row_marginal=p,
        col_marginal=q,
        converged=converged,
        iterations_used=used,
    )


def _default_entropic_reg(first_cost: np.ndarray) -> float:
    positive = first_cost[first_cost > 0]
    if positive.size == 0:
        return 1.0
    return 0.01 * float(np.median(positive))


def entropic_gw(c_s, c_t, p: np.ndarray, q: np.ndarray, config: GwConfig | None = None) -> GwReport:
    """Solve the entropic alignment problem between two distance structures.

    Outer loop: linearize the quadratic objective around the current coupling,
    then Sinkhorn-project. Stops when the coupling's Frobenius change falls
    below outer_tol or outer_iters is reached. The report carries the
    unregularized objective of the final plan. converged requires both the
    outer fixed point and marginal feasibility of the final plan — a stalled
    inner projection (small entropic_reg, capped sinkhorn_iters) can otherwise
    look like an outer fixed point while violating the marginals.
    """
    if config is None:
        config = GwConfig()
    c_s_arr = _as_array(c_s)
    c_t_arr = _as_array(c_t)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if (p <= 0).any() or (q <= 0).any():
        raise ValueError("marginals must be strictly positive")
    c_st = constant_offset(c_s_arr, c_t_arr, p, q)
    current = np.outer(p, q)  # flat coupling; equals 1/(MN) for uniform weights
    reg = config.entropic_reg
    if reg is None:
        first_cost = gw_cost_matrix(c_st, c_s_arr, c_t_arr, current)
        reg = _default_entropic_reg(first_cost)
    converged = False
    used = 0
    plan = TransportPlan(values=current, row_marginal=p, col_marginal=q)
    for it in range(1, config.outer_iters + 1):
        cost = gw_cost_matrix(c_st, c_s_arr, c_t_arr, current)
        plan = sinkhorn(
            cost,
            p,
            q,
            reg,
            iters=config.sinkhorn_iters,
            marginal_tol=config.marginal_tol,
            log_domain=config.log_domain,
        )
        used = it
        delta = float(np.linalg.norm(plan.values - current))
        current = plan.values
        if delta < config.outer_tol:
            converged = True
            break
    objective = gw_objective(c_s_arr, c_t_arr, plan)
    row_res, col_res = plan.marginal_residuals()
    feasible = max(row_res, col_res) < config.marginal_tol
    return GwReport(
        plan=plan,
        objective=objective,
        outer_iterations_used=used,
        converged=converged and feasible,
    )


def gw_objective(c_s, c_t, plan) -> float:
    """Quadratic alignment objective by direct four-index summation.

    sum over i, i', j, j' of (C_s[i,i'] - C_t[j,j'])^2 * T[i,j] * T[i',j'].
    Kept as explicit loops: the sets are small and this is the reference
    evaluation the decomposed cost path is checked against.
    """
    c_s = _as_array(c_s)
    c_t = _as_array(c_t)
    t = _as_array(plan)
    m, n = t.shape
    total = 0.0
    for i in range(m):
        for i_prime in range(m):
            for j in range(n):
                for j_prime in range(n):
                    diff = c_s[i, i_prime] - c_t[j, j_prime]
                    total += diff * diff * t[i, j] * t[i_prime, j_prime]
    return total
