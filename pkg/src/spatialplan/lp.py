"""Dense linear programs with bounded variables and a primal simplex solver.

The program form is::

    minimize    cost @ x + cost_offset
    subject to  row_lower <= A @ x <= row_upper
                lower <= x <= upper

The solver is a two-phase primal simplex over bounded variables: each row gets
a slack variable bounded by the row bounds, rows whose slack cannot absorb the
initial point get an artificial variable, and phase one drives the artificials
to zero. Pricing is most-negative-reduced-cost with an automatic permanent
switch to Bland's smallest-index rule after a run of degenerate pivots, which
guarantees termination. Everything is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg.blas import dger

FEASIBILITY_TOL = 1e-9
OPTIMALITY_TOL = 1e-9
PIVOT_TOL = 1e-9          # ratio-test blocking threshold (rows are equilibrated)
STABLE_PIVOT = 1e-6       # preferred minimum pivot magnitude among ratio ties
DEGENERATE_STREAK_FOR_BLAND = 120
REFACTOR_EVERY = 150


@dataclass
class LpSolution:
    """Outcome of one solve."""

    x: np.ndarray
    objective: float
    status: str          # "optimal" | "infeasible" | "unbounded" | "iteration-limit"
    iterations: int
    max_violation: float
    infeasible_rows: tuple = ()  # tags of rows blocking feasibility, if any


class LinearProgram:
    """Incrementally built dense LP with named variable blocks."""

    def __init__(self):
        self.var_names: list[str] = []
        self._lower: list[float] = []
        self._upper: list[float] = []
        self._cost: list[float] = []
        self.blocks: dict[str, np.ndarray] = {}
        self._row_entries: list[tuple[np.ndarray, np.ndarray]] = []
        self._row_lower: list[float] = []
        self._row_upper: list[float] = []
        self.row_tags: list = []
        self.cost_offset: float = 0.0

    @property
    def num_vars(self) -> int:
        return len(self._lower)

    @property
    def num_rows(self) -> int:
        return len(self._row_entries)

    @property
    def lower(self) -> np.ndarray:
        return np.array(self._lower)

    @property
    def upper(self) -> np.ndarray:
        return np.array(self._upper)

    @property
    def cost(self) -> np.ndarray:
        return np.array(self._cost)

    @property
    def row_lower(self) -> np.ndarray:
        return np.array(self._row_lower)

    @property
    def row_upper(self) -> np.ndarray:
        return np.array(self._row_upper)

    def add_variable(self, name: str, lower: float, upper: float,
                     cost: float = 0.0) -> int:
        if lower > upper:
            raise ValueError(f"variable {name}: lower bound exceeds upper bound")
        self.var_names.append(name)
        self._lower.append(float(lower))
        self._upper.append(float(upper))
        self._cost.append(float(cost))
        return self.num_vars - 1

    def add_block(self, name: str, count: int, lower, upper, cost=0.0) -> np.ndarray:
        """Add ``count`` variables sharing a block name; bounds/cost may be arrays."""
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (count,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (count,))
        cost = np.broadcast_to(np.asarray(cost, dtype=float), (count,))
        indices = np.array([
            self.add_variable(f"{name}[{k}]", lower[k], upper[k], cost[k])
            for k in range(count)
        ], dtype=int)
        self.blocks[name] = indices
        return indices

    def add_row(self, indices, coeffs, lower: float = -np.inf,
                upper: float = np.inf, tag=None) -> int:
        indices = np.asarray(indices, dtype=int)
        coeffs = np.asarray(coeffs, dtype=float)
        if indices.shape != coeffs.shape:
            raise ValueError("row indices and coefficients must match")
        if lower > upper:
            raise ValueError("row lower bound exceeds upper bound")
        if not (np.isfinite(lower) or np.isfinite(upper)):
            raise ValueError("row needs at least one finite bound")
        self._row_entries.append((indices, coeffs))
        self._row_lower.append(float(lower))
        self._row_upper.append(float(upper))
        self.row_tags.append(tag)
        return self.num_rows - 1

    def dense_matrix(self) -> np.ndarray:
        a = np.zeros((self.num_rows, self.num_vars))
        for r, (idx, coef) in enumerate(self._row_entries):
            np.add.at(a[r], idx, coef)
        return a

    def to_mps(self, name: str = "SPATIALLP") -> str:
        """Fixed-column MPS dump for cross-checking with external solvers."""
        lines = [f"NAME          {name}", "ROWS", " N  COST"]
        kinds = []
        for r in range(self.num_rows):
            lo, hi = self._row_lower[r], self._row_upper[r]
            if lo == hi:
                kind = "E"
            elif not np.isfinite(lo):
                kind = "L"
            elif not np.isfinite(hi):
                kind = "G"
            else:
                kind = "L"  # ranged; declared via RANGES below
            kinds.append(kind)
            lines.append(f" {kind}  R{r:07d}")
        lines.append("COLUMNS")
        a = self.dense_matrix()
        for j in range(self.num_vars):
            if self._cost[j] != 0.0:
                lines.append(_mps_entry(f"C{j:07d}", "COST", self._cost[j]))
            for r in np.nonzero(a[:, j])[0]:
                lines.append(_mps_entry(f"C{j:07d}", f"R{r:07d}", a[r, j]))
        lines.append("RHS")
        for r in range(self.num_rows):
            lo, hi = self._row_lower[r], self._row_upper[r]
            rhs = hi if kinds[r] == "L" else lo
            if rhs != 0.0:
                lines.append(_mps_entry("RHS", f"R{r:07d}", rhs))
        lines.append("RANGES")
        for r in range(self.num_rows):
            lo, hi = self._row_lower[r], self._row_upper[r]
            if np.isfinite(lo) and np.isfinite(hi) and lo != hi:
                lines.append(_mps_entry("RNG", f"R{r:07d}", hi - lo))
        lines.append("BOUNDS")
        for j in range(self.num_vars):
            lo, hi = self._lower[j], self._upper[j]
            if lo == hi:
                lines.append(_mps_bound("FX", j, lo))
                continue
            if np.isfinite(lo):
                lines.append(_mps_bound("LO", j, lo))
            else:
                lines.append(f" MI BND       C{j:07d}")
            if np.isfinite(hi):
                lines.append(_mps_bound("UP", j, hi))
        lines.append("ENDATA")
        return "\n".join(lines) + "\n"


def _mps_entry(col: str, row: str, value: float) -> str:
    return f"    {col:<10}{row:<10}{value:<.12g}"


def _mps_bound(kind: str, j: int, value: float) -> str:
    return f" {kind} BND       C{j:07d}  {value:<.12g}"


class _Tableau:
    """Working state of one simplex solve.

    Column layout: structural variables, then one slack per row (column
    ``-e_r``), then artificials (column ``-sign(residual) * e_r``). Slack and
    artificial columns are kept implicit.
    """

    def __init__(self, lp: LinearProgram):
        n, m = lp.num_vars, lp.num_rows
        a = lp.dense_matrix()
        var_lo, var_hi = lp.lower, lp.upper
        # Row equilibration keeps pivot magnitudes comparable across rows.
        scale = np.maximum(np.max(np.abs(a), axis=1), 1e-8)
        a = a / scale[:, None]
        row_lo = lp.row_lower / scale
        row_hi = lp.row_upper / scale

        if np.any(~np.isfinite(var_lo) & ~np.isfinite(var_hi)):
            raise ValueError("every variable needs at least one finite bound")

        # Start each structural variable at its finite bound nearest zero.
        x_struct = np.where(
            np.isfinite(var_lo) & (~np.isfinite(var_hi) | (np.abs(var_lo) <= np.abs(var_hi))),
            var_lo, var_hi)
        start_upper = x_struct == var_hi
        row_vals = a @ x_struct
        slack_vals = np.clip(row_vals, row_lo, row_hi)
        residual = row_vals - slack_vals
        art_rows = np.nonzero(np.abs(residual) > FEASIBILITY_TOL)[0]
        n_art = len(art_rows)

        self.a_struct = a
        self.n_struct, self.n_rows, self.n_art = n, m, n_art
        self.total = n + m + n_art
        self.art_row = art_rows                      # row of artificial k
        self.art_sign = -np.sign(residual[art_rows])  # column entry of artificial k

        self.lo = np.concatenate([var_lo, row_lo, np.zeros(n_art)])
        self.hi = np.concatenate([var_hi, row_hi, np.full(n_art, np.inf)])
        self.x = np.concatenate([x_struct, slack_vals, np.abs(residual[art_rows])])
        self.at_upper = np.concatenate([
            start_upper,
            slack_vals == row_hi,
            np.zeros(n_art, dtype=bool),
        ])

        # Initial basis: the slack where it absorbed the row, else the artificial.
        self.basis = n + np.arange(m)
        self.basis[art_rows] = n + m + np.arange(n_art)
        self.in_basis = np.zeros(self.total, dtype=bool)
        self.in_basis[self.basis] = True
        diag = -np.ones(m)
        diag[art_rows] = self.art_sign
        # Fortran order lets the rank-1 pivot update run in place via BLAS.
        self.binv = np.asfortranarray(np.diag(diag))
        self.devex = np.ones(self.total)
        self.iterations = 0
        self.bland = False
        self.conservative = False  # set on restart after numerical breakdown
        self._degenerate_streak = 0

    def column(self, j: int) -> np.ndarray:
        n, m = self.n_struct, self.n_rows
        if j < n:
            return self.a_struct[:, j]
        col = np.zeros(m)
        if j < n + m:
            col[j - n] = -1.0
        else:
            col[self.art_row[j - n - m]] = self.art_sign[j - n - m]
        return col

    def solved_column(self, j: int) -> np.ndarray:
        """``B^{-1}`` times column ``j`` without forming the column."""
        n, m = self.n_struct, self.n_rows
        if j < n:
            return self.binv @ self.a_struct[:, j]
        if j < n + m:
            return -self.binv[:, j - n]
        k = j - n - m
        return self.art_sign[k] * self.binv[:, self.art_row[k]]

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        n, m = self.n_struct, self.n_rows
        y = cost[self.basis] @ self.binv
        reduced = np.empty(self.total)
        reduced[:n] = cost[:n] - y @ self.a_struct
        reduced[n:n + m] = cost[n:n + m] + y
        if self.n_art:
            reduced[n + m:] = cost[n + m:] - self.art_sign * y[self.art_row]
        reduced[self.basis] = 0.0
        return reduced

    def basis_matrix(self) -> np.ndarray:
        b = np.empty((self.n_rows, self.n_rows))
        for i, j in enumerate(self.basis):
            b[:, i] = self.column(j)
        return b

    def refactorize(self):
        try:
            self.binv = np.asfortranarray(np.linalg.inv(self.basis_matrix()))
        except np.linalg.LinAlgError:
            raise _NumericalBreakdown()
        self.recompute_basics()
        self.devex = np.ones(self.total)

    def recompute_basics(self):
        # Nonbasic artificials always sit at zero, so only structural and
        # slack variables contribute to the right-hand side.
        n, m = self.n_struct, self.n_rows
        xs = np.where(self.in_basis[:n], 0.0, self.x[:n])
        rhs = -(self.a_struct @ xs)
        slack_nb = ~self.in_basis[n:n + m]
        rhs[slack_nb] += self.x[n:n + m][slack_nb]
        self.x[self.basis] = self.binv @ rhs

    def run_phase(self, cost: np.ndarray, max_iterations: int,
                  retire_artificials: bool = False) -> str:
        m = self.n_rows
        cadence = 40 if self.conservative else REFACTOR_EVERY
        while self.iterations < max_iterations:
            fixed = self.lo == self.hi
            reduced = self.reduced_costs(cost)
            candidate = ~self.in_basis & ~fixed & (
                (~self.at_upper & (reduced < -OPTIMALITY_TOL))
                | (self.at_upper & (reduced > OPTIMALITY_TOL))
            )
            if not np.any(candidate):
                return "optimal"
            idx = np.nonzero(candidate)[0]
            if self.bland:
                enter = int(idx[0])
            else:
                # Devex pricing: largest squared reduced cost over the
                # reference weight.
                scores = reduced[idx] ** 2 / self.devex[idx]
                enter = int(idx[np.argmax(scores)])
            direction = -1.0 if self.at_upper[enter] else 1.0

            alpha = self.solved_column(enter)
            row, step, theta_rows, da = self._ratio_test(enter, direction, alpha)
            if row == -2:  # weak pivot everywhere: refresh the factorization
                self.refactorize()
                alpha = self.solved_column(enter)
                row, step, theta_rows, da = self._ratio_test(
                    enter, direction, alpha, accept_weak=True)
            if not np.isfinite(step):
                return "unbounded"

            self._degenerate_streak = self._degenerate_streak + 1 if step < 1e-12 else 0
            if self._degenerate_streak > DEGENERATE_STREAK_FOR_BLAND:
                self.bland = True

            xb = self.x[self.basis]
            self.x[self.basis] = xb - step * da
            self.x[enter] = (self.hi[enter] if self.at_upper[enter] else self.lo[enter]) \
                + direction * step

            if row < 0:  # bound flip, no basis change
                self.at_upper[enter] = ~self.at_upper[enter]
            else:
                if retire_artificials and not self.bland:
                    # Kicking artificials out first shortens phase one.
                    row = self._prefer_artificial_row(row, da)
                leave = self.basis[row]
                self._update_devex(row, enter, alpha)
                self._pivot(row, enter, alpha, leaving_to_upper=da[row] < 0)
                if retire_artificials and leave >= self.n_struct + m:
                    self.lo[leave] = self.hi[leave] = 0.0
                    self.x[leave] = 0.0

            self.iterations += 1
            if self.iterations % cadence == 0:
                self.refactorize()
        return "iteration-limit"

    def _ratio_test(self, enter: int, direction: float, alpha: np.ndarray,
                    accept_weak: bool = False):
        """Returns ``(row, step, theta_rows, da)``.

        ``row`` is -1 for a bound flip and -2 when every blocking tie has a
        weak pivot and ``accept_weak`` is off.
        """
        m = self.n_rows
        da = direction * alpha
        xb = self.x[self.basis]
        lob, hib = self.lo[self.basis], self.hi[self.basis]

        theta = np.full(m, np.inf)
        dec = da > PIVOT_TOL
        theta[dec] = (xb[dec] - lob[dec]) / da[dec]
        inc = da < -PIVOT_TOL
        theta[inc] = (xb[inc] - hib[inc]) / da[inc]
        theta = np.maximum(theta, 0.0)

        theta_rows = float(np.min(theta)) if m else np.inf
        theta_flip = self.hi[enter] - self.lo[enter]
        step = min(theta_rows, theta_flip)
        if not np.isfinite(step):
            return -1, np.inf, theta_rows, da
        if theta_flip <= theta_rows:
            return -1, step, theta_rows, da

        ties = np.nonzero(theta <= theta_rows + 1e-12)[0]
        strong = ties[np.abs(da[ties]) >= STABLE_PIVOT]
        if len(strong) == 0 and not accept_weak:
            return -2, step, theta_rows, da
        pool = strong if len(strong) else ties
        if self.bland:
            row = int(pool[np.argmin(self.basis[pool])])
        else:
            row = int(pool[np.argmax(np.abs(da[pool]))])
        return row, step, theta_rows, da

    def _prefer_artificial_row(self, row: int, da: np.ndarray) -> int:
        # Called after the step update: an alternative leaving row qualifies
        # only if its basic variable now sits exactly at the bound it would
        # leave to.
        art_start = self.n_struct + self.n_rows
        cand = np.nonzero((self.basis >= art_start) & (np.abs(da) >= STABLE_PIVOT))[0]
        if len(cand) == 0:
            return row
        vars_ = self.basis[cand]
        bound = np.where(da[cand] > 0, self.lo[vars_], self.hi[vars_])
        at_bound = np.isfinite(bound) & (np.abs(self.x[vars_] - bound) <= 1e-11)
        cand = cand[at_bound]
        if len(cand) == 0:
            return row
        return int(cand[np.argmax(np.abs(da[cand]))])

    def _update_devex(self, row: int, enter: int, alpha: np.ndarray):
        pivot = alpha[row]
        if abs(pivot) < PIVOT_TOL:
            return
        n, m = self.n_struct, self.n_rows
        z = np.empty(self.total)
        binv_row = self.binv[row]
        z[:n] = binv_row @ self.a_struct
        z[n:n + m] = -binv_row
        if self.n_art:
            z[n + m:] = self.art_sign * binv_row[self.art_row]
        ratio2 = (z / pivot) ** 2
        w_enter = max(self.devex[enter], 1.0)
        np.maximum(self.devex, ratio2 * w_enter, out=self.devex)
        self.devex[self.basis[row]] = max(w_enter / pivot ** 2, 1.0)
        if float(np.max(self.devex)) > 1e10:
            self.devex[:] = 1.0

    def _pivot(self, row: int, enter: int, alpha: np.ndarray, leaving_to_upper: bool):
        leave = self.basis[row]
        self.x[leave] = self.hi[leave] if leaving_to_upper else self.lo[leave]
        self.at_upper[leave] = leaving_to_upper
        self.in_basis[leave] = False
        self.in_basis[enter] = True
        self.basis[row] = enter

        pivot_row = self.binv[row] / alpha[row]
        # In-place rank-1 update: binv -= alpha (outer) pivot_row.
        dger(-1.0, alpha, pivot_row, a=self.binv, overwrite_a=1)
        self.binv[row] = pivot_row

    def drive_out_artificials(self):
        """Pivot basic artificials (at zero) out of the basis where possible."""
        n, m = self.n_struct, self.n_rows
        for k in range(self.n_art):
            art = n + m + k
            if not self.in_basis[art]:
                continue
            row = int(np.nonzero(self.basis == art)[0][0])
            tableau_struct = self.binv[row] @ self.a_struct
            tableau_slack = -self.binv[row]
            tableau_row = np.concatenate([tableau_struct, tableau_slack])
            options = np.nonzero(
                (np.abs(tableau_row) > 1e-7)
                & ~self.in_basis[: n + m]
                & (self.lo[: n + m] < self.hi[: n + m])
            )[0]
            if len(options) == 0:
                continue  # redundant row; the artificial stays basic at zero
            enter = int(options[0])
            alpha = self.solved_column(enter)
            self._pivot(row, enter, alpha, leaving_to_upper=False)
            self.x[art] = 0.0


class _NumericalBreakdown(Exception):
    """The factorized basis became numerically singular."""


def solve(lp: LinearProgram, max_iterations: int = 50000) -> LpSolution:
    """Solve the LP with the two-phase bounded-variable primal simplex.

    A numerically broken run (singular refactorization) is restarted once
    with a conservative profile; everything stays deterministic.
    """
    if lp.num_vars == 0:
        return LpSolution(x=np.zeros(0), objective=lp.cost_offset, status="optimal",
                          iterations=0, max_violation=0.0)
    if lp.num_rows == 0:
        return _solve_box_only(lp)

    for conservative in (False, True):
        try:
            return _simplex_solve(lp, max_iterations, conservative)
        except _NumericalBreakdown:
            continue
    return LpSolution(x=np.zeros(lp.num_vars), objective=float("nan"),
                      status="iteration-limit", iterations=max_iterations,
                      max_violation=float("inf"))


def _simplex_solve(lp: LinearProgram, max_iterations: int,
                   conservative: bool) -> LpSolution:
    tab = _Tableau(lp)
    tab.conservative = conservative
    n, m = tab.n_struct, tab.n_rows

    if tab.n_art:
        phase1_cost = np.zeros(tab.total)
        phase1_cost[n + m:] = 1.0
        status = tab.run_phase(phase1_cost, max_iterations, retire_artificials=True)
        tab.refactorize()
        art_values = tab.x[n + m:]
        if status == "iteration-limit":
            return _finish(lp, tab, "iteration-limit")
        if float(np.sum(art_values)) > 1e-7:
            blocked = tuple(
                lp.row_tags[tab.art_row[k]]
                for k in range(tab.n_art) if art_values[k] > 1e-7
            )
            sol = _finish(lp, tab, "infeasible")
            sol.infeasible_rows = blocked
            return sol
        tab.drive_out_artificials()
        tab.lo[n + m:] = 0.0
        tab.hi[n + m:] = 0.0
        tab.x[n + m:] = 0.0

    phase2_cost = np.concatenate([lp.cost, np.zeros(m + tab.n_art)])
    status = tab.run_phase(phase2_cost, max_iterations)
    tab.refactorize()
    return _finish(lp, tab, "optimal" if status == "optimal" else status)


def _solve_box_only(lp: LinearProgram) -> LpSolution:
    cost, lo, hi = lp.cost, lp.lower, lp.upper
    x = np.where(cost > 0, lo, np.where(cost < 0, hi, np.where(np.isfinite(lo), lo, hi)))
    if not np.all(np.isfinite(x)):
        return LpSolution(x=np.zeros(lp.num_vars), objective=-np.inf, status="unbounded",
                          iterations=0, max_violation=0.0)
    return LpSolution(x=x, objective=float(cost @ x) + lp.cost_offset, status="optimal",
                      iterations=0, max_violation=0.0)


def _finish(lp: LinearProgram, tab: _Tableau, status: str) -> LpSolution:
    x = tab.x[: lp.num_vars].copy()
    row_vals = lp.dense_matrix() @ x
    violation = max(
        float(np.max(np.maximum(lp.row_lower - row_vals, row_vals - lp.row_upper),
                     initial=0.0)),
        float(np.max(np.maximum(lp.lower - x, x - lp.upper), initial=0.0)),
    )
    if status == "optimal" and violation > 1e-7:
        status = "iteration-limit"  # numerical trouble; do not claim optimality
    return LpSolution(
        x=x,
        objective=float(lp.cost @ x) + lp.cost_offset,
        status=status,
        iterations=tab.iterations,
        max_violation=violation,
    )
