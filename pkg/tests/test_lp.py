import numpy as np
import pytest

from spatialplan.lp import LinearProgram, solve
from oracles import enumerate_lp, random_bounded_lp


def build(cost, a, row_lower, row_upper, lower, upper) -> LinearProgram:
    lp = LinearProgram()
    for j, c in enumerate(cost):
        lp.add_variable(f"x{j}", lower[j], upper[j], cost=c)
    a = np.asarray(a, dtype=float).reshape(len(row_lower), len(cost))
    idx = np.arange(len(cost))
    for r in range(len(row_lower)):
        lp.add_row(idx, a[r], lower=row_lower[r], upper=row_upper[r], tag=("row", r))
    return lp


def test_single_variable_box():
    lp = LinearProgram()
    lp.add_variable("x", 1.0, 2.0, cost=1.0)
    sol = solve(lp)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0)
    assert sol.objective == pytest.approx(1.0)


def test_unit_square_facet():
    lp = build(
        cost=[-1.0, -1.0],
        a=[[1.0, 1.0]],
        row_lower=[-np.inf], row_upper=[1.0],
        lower=[0.0, 0.0], upper=[1.0, 1.0],
    )
    sol = solve(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-1.0, abs=1e-9)
    assert sol.x[0] + sol.x[1] == pytest.approx(1.0, abs=1e-9)


def test_equality_row():
    lp = build(
        cost=[1.0, 2.0],
        a=[[1.0, 1.0]],
        row_lower=[1.5], row_upper=[1.5],
        lower=[0.0, 0.0], upper=[2.0, 2.0],
    )
    sol = solve(lp)
    assert sol.status == "optimal"
    assert sol.x == pytest.approx([1.5, 0.0], abs=1e-9)


def test_infeasible_reports_blocking_rows():
    lp = build(
        cost=[1.0],
        a=[[1.0], [1.0]],
        row_lower=[2.0, -np.inf], row_upper=[np.inf, 1.0],
        lower=[0.0], upper=[5.0],
    )
    sol = solve(lp)
    assert sol.status == "infeasible"
    assert len(sol.infeasible_rows) >= 1


def test_unbounded():
    lp = LinearProgram()
    lp.add_variable("x", 0.0, np.inf, cost=-1.0)
    lp.add_row([0], [1.0], lower=-5.0)
    sol = solve(lp)
    assert sol.status == "unbounded"


def test_iteration_limit_status():
    cost, a, rlo, rhi, lo, hi = random_bounded_lp(np.random.default_rng(0))
    sol = solve(build(cost, a, rlo, rhi, lo, hi), max_iterations=1)
    assert sol.status in ("iteration-limit", "infeasible", "optimal")


def test_deterministic_repeat():
    rng = np.random.default_rng(123)
    cost, a, rlo, rhi, lo, hi = random_bounded_lp(rng)
    first = solve(build(cost, a, rlo, rhi, lo, hi))
    second = solve(build(cost, a, rlo, rhi, lo, hi))
    assert first.status == second.status
    assert np.array_equal(first.x, second.x)
    assert first.iterations == second.iterations


def test_optimal_solutions_respect_tolerances():
    rng = np.random.default_rng(77)
    for _ in range(40):
        cost, a, rlo, rhi, lo, hi = random_bounded_lp(rng)
        lp = build(cost, a, rlo, rhi, lo, hi)
        sol = solve(lp)
        if sol.status != "optimal":
            continue
        assert sol.max_violation <= 1e-7
        assert np.all(sol.x >= lo - 1e-9)
        assert np.all(sol.x <= hi + 1e-9)


def test_matches_enumeration_oracle():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(60):
        cost, a, rlo, rhi, lo, hi = random_bounded_lp(rng)
        lp = build(cost, a, rlo, rhi, lo, hi)
        sol = solve(lp)
        expected_obj, _ = enumerate_lp(cost, a, rlo, rhi, lo, hi)
        if expected_obj is None:
            assert sol.status == "infeasible"
        else:
            assert sol.status == "optimal"
            assert sol.objective == pytest.approx(expected_obj, abs=1e-7)
            checked += 1
    assert checked >= 30


def test_degenerate_problem_terminates():
    # Many redundant rows through the same vertex exercise the anti-cycling path.
    lp = LinearProgram()
    for j in range(4):
        lp.add_variable(f"x{j}", 0.0, 10.0, cost=-1.0)
    idx = np.arange(4)
    for r in range(12):
        coeffs = np.roll([1.0, 1.0, 0.0, 0.0], r % 4)
        lp.add_row(idx, coeffs, lower=-np.inf, upper=0.0)
    sol = solve(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(0.0, abs=1e-9)


def test_named_blocks_and_counts():
    lp = LinearProgram()
    q = lp.add_block("q", 3, lower=0.03, upper=1.0, cost=[5.0, 5.0, 5.0])
    d = lp.add_block("delta", 3, lower=-0.5, upper=0.5)
    assert lp.num_vars == 6
    assert np.array_equal(lp.blocks["q"], q)
    assert lp.var_names[d[0]] == "delta[0]"


def test_mps_dump_smoke():
    lp = build(
        cost=[1.0, -2.0],
        a=[[1.0, 1.0], [1.0, -1.0]],
        row_lower=[0.5, -1.0], row_upper=[1.5, np.inf],
        lower=[0.0, 0.0], upper=[2.0, 2.0],
    )
    text = lp.to_mps()
    assert text.startswith("NAME")
    assert "ROWS" in text and "COLUMNS" in text and "ENDATA" in text
    assert text.count("R000000") >= 2
