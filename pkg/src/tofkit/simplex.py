"""Bounded-variable primal simplex for dense covering LPs.

Solves

    minimize    costs . x
    subject to  cover @ x >= rhs,   lower <= x <= upper

where ``cover`` is a dense 0/1 membership matrix (one row per element to
cover, one column per candidate set). Surplus variables are added internally,
giving the equality system ``[cover | -I] z = rhs``.

The covering structure supplies a feasible starting basis for free: with all
structural variables at their upper bounds, the surplus values are
``cover @ upper - rhs``, which are nonnegative exactly when the instance is
feasible. No phase-1 is ever required; a negative component proves
infeasibility outright.

Bland's anti-cycling rule (smallest eligible index entering, smallest basis
index leaving among minimal ratios) guarantees termination; an iteration cap
of ``10 * (rows + cols)`` backstops numerical trouble.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleInstanceError, NumericalFailureError

_REFRESH_EVERY = 128  # pivots between basis-inverse refactorizations

_AT_LOWER = 0
_AT_UPPER = 1
_BASIC = 2


@dataclass
class LpResult:
    x: np.ndarray
    objective: float
    iterations: int


def solve_covering_lp(
    cover: np.ndarray,
    costs: np.ndarray,
    lower: np.ndarray | None = None,
    upper: np.ndarray | None = None,
    rhs: np.ndarray | None = None,
    *,
    tol: float = 1e-9,
    max_iter: int | None = None,
) -> LpResult:
    cover = np.asarray(cover, dtype=float)
    if cover.ndim != 2:
        raise ValueError("cover must be a 2-D matrix")
    m, n = cover.shape
    costs = np.asarray(costs, dtype=float)
    lo = np.zeros(n) if lower is None else np.asarray(lower, dtype=float).copy()
    up = np.ones(n) if upper is None else np.asarray(upper, dtype=float).copy()
    b = np.ones(m) if rhs is None else np.asarray(rhs, dtype=float)
    if np.any(lo > up + tol):
        raise InfeasibleInstanceError("variable lower bound exceeds upper bound")
    if max_iter is None:
        max_iter = 10 * (m + n)

    # equality system columns: n structural then m surplus
    total = n + m
    a_eq = np.hstack([cover, -np.eye(m)])
    full_lo = np.concatenate([lo, np.zeros(m)])
    full_up = np.concatenate([up, np.full(m, np.inf)])
    c = np.concatenate([costs, np.zeros(m)])

    status = np.full(total, _AT_LOWER, dtype=int)
    status[:n] = _AT_UPPER
    basis = list(range(n, total))
    status[n:] = _BASIC

    x_nonbasic = np.where(status[:n] == _AT_UPPER, up, lo)
    xb = cover @ x_nonbasic - b
    if np.min(xb) < -tol:
        raise InfeasibleInstanceError(
            "instance infeasible: some element is not coverable within the bounds"
        )
    b_inv = -np.eye(m)

    def nonbasic_values() -> np.ndarray:
        vals = np.where(status == _AT_UPPER, full_up, full_lo)
        vals[status == _BASIC] = 0.0
        return vals

    def refresh() -> None:
        nonlocal b_inv, xb
        b_mat = a_eq[:, basis]
        try:
            b_inv = np.linalg.inv(b_mat)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailureError("singular basis matrix") from exc
        xb = b_inv @ (b - a_eq @ nonbasic_values())

    iterations = 0
    pivots_since_refresh = 0
    while True:
        if iterations >= max_iter:
            raise NumericalFailureError(
                f"simplex exceeded the iteration cap of {max_iter}"
            )
        iterations += 1

        y = b_inv.T @ c[basis]
        reduced = c - y @ a_eq

        entering = -1
        direction = 0
        for j in range(total):
            if status[j] == _BASIC or full_lo[j] == full_up[j]:
                continue
            if status[j] == _AT_LOWER and reduced[j] < -tol:
                entering, direction = j, +1
                break
            if status[j] == _AT_UPPER and reduced[j] > tol:
                entering, direction = j, -1
                break
        if entering < 0:
            break  # optimal

        w = b_inv @ a_eq[:, entering]
        delta = -direction * w

        t_best = full_up[entering] - full_lo[entering]  # bound-flip step
        leaving_row = -1
        for i in range(m):
            if delta[i] > tol:
                t_i = (full_up[basis[i]] - xb[i]) / delta[i]
            elif delta[i] < -tol:
                t_i = (full_lo[basis[i]] - xb[i]) / delta[i]
            else:
                continue
            if t_i < 0.0:
                t_i = 0.0  # basic value already pinned to its bound (drift)
            if t_i < t_best - 1e-12 or (
                t_i <= t_best + 1e-12
                and leaving_row >= 0
                and basis[i] < basis[leaving_row]
            ):
                t_best = t_i
                leaving_row = i

        if not np.isfinite(t_best):
            raise NumericalFailureError("LP appears unbounded")

        xb = xb + delta * t_best
        if leaving_row < 0:
            # bound flip: entering variable crosses to its other bound
            status[entering] = _AT_UPPER if direction > 0 else _AT_LOWER
            continue

        leaving = basis[leaving_row]
        status[leaving] = _AT_UPPER if delta[leaving_row] > tol else _AT_LOWER
        entering_value = (
            full_lo[entering] if direction > 0 else full_up[entering]
        ) + direction * t_best
        basis[leaving_row] = entering
        status[entering] = _BASIC
        xb[leaving_row] = entering_value

        pivot = w[leaving_row]
        if abs(pivot) < 1e-12:
            refresh()
            pivots_since_refresh = 0
            continue
        factor = w / pivot
        factor[leaving_row] = 0.0
        b_inv -= np.outer(factor, b_inv[leaving_row])
        b_inv[leaving_row] /= pivot
        pivots_since_refresh += 1
        if pivots_since_refresh >= _REFRESH_EVERY:
            refresh()
            pivots_since_refresh = 0

    x_full = nonbasic_values()
    for i, var in enumerate(basis):
        x_full[var] = xb[i]
    x = np.clip(x_full[:n], lo, up)
    slack = cover @ x - b
    if np.min(slack) < -1e-7:
        raise NumericalFailureError("solution left covering constraints violated")
    return LpResult(x=x, objective=float(costs @ x), iterations=iterations)
