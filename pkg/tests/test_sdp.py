import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from classim.errors import ValidationError
from classim.linalg import random_hermitian
from classim.solvers.lp import LpProblem, solve_lp
from classim.solvers.sdp import (REAL, PreparedSdp, SdpBuilder, SdpProblem, adjoint, sdp_feasible,
                                 solve_sdp)

SZ = np.diag([1.0, -1.0])
SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def _density_program(cost):
    b = SdpBuilder()
    k = b.add_block(cost.shape[0], cost=cost)
    b.add_constraint({k: np.eye(cost.shape[0])}, 1.0)
    return b.build(maximize=True)


def _check_certificates(sol):
    assert sol.status == "optimal"
    assert sol.residual <= 1e-7
    assert sol.gap <= 1e-6 * (1 + abs(sol.objective))
    assert sol.min_eig >= -1e-8


def test_fixed_block_trace():
    b = SdpBuilder()
    k = b.add_block(2, cost=np.eye(2))
    b.add_matrix_equality({k: 1.0}, np.eye(2))
    sol = solve_sdp(b.build())
    _check_certificates(sol)
    assert sol.objective == pytest.approx(2.0, abs=1e-7)


def test_max_eigenvalue_of_z():
    sol = solve_sdp(_density_program(SZ))
    _check_certificates(sol)
    assert sol.objective == pytest.approx(1.0, abs=1e-7)
    assert abs(sol.blocks[0][0, 0] - 1) < 1e-6


@given(d=st.integers(1, 5), seed=st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_density_program_equals_lambda_max(d, seed):
    c = random_hermitian(d, np.random.default_rng(seed))
    sol = solve_sdp(_density_program(c))
    _check_certificates(sol)
    assert sol.objective == pytest.approx(np.linalg.eigvalsh(c)[-1], abs=1e-6)
    x = sol.blocks[0]
    assert np.abs(x - x.conj().T).max() < 1e-12


def test_minimize_gives_lambda_min():
    c = random_hermitian(3, np.random.default_rng(4))
    b = SdpBuilder()
    k = b.add_block(3, cost=c)
    b.add_constraint({k: np.eye(3)}, 1.0)
    sol = solve_sdp(b.build(maximize=False))
    assert sol.objective == pytest.approx(np.linalg.eigvalsh(c)[0], abs=1e-6)


def test_batch_matches_single_solves():
    rng = np.random.default_rng(9)
    costs = np.array([random_hermitian(3, rng) for _ in range(7)])
    p = _density_program(costs[0])
    res = PreparedSdp.from_problem(p).solve([costs], p.rhs)
    assert np.all(res.status == "optimal")
    assert np.allclose(res.objective, np.linalg.eigvalsh(costs)[:, -1], atol=1e-6)


def test_feasible_point_returned():
    b = SdpBuilder()
    k = b.add_block(2)
    b.add_constraint({k: np.eye(2)}, 1.0)
    res = sdp_feasible(b.build())
    assert res.feasible
    x = res.blocks[0]
    assert abs(np.trace(x) - 1) < 1e-7 and np.linalg.eigvalsh(x)[0] >= -1e-8


def test_infeasible_with_farkas_ray():
    b = SdpBuilder()
    k = b.add_block(2)
    b.add_constraint({k: np.eye(2)}, -1.0)
    p = b.build()
    res = sdp_feasible(p)
    assert not res.feasible
    y = res.y
    assert p.rhs @ y > 0
    assert np.linalg.eigvalsh(adjoint(p, y)[0])[-1] <= 1e-8


def test_solve_sdp_reports_infeasible():
    b = SdpBuilder()
    k = b.add_block(2, cost=np.eye(2))
    b.add_constraint({k: np.eye(2)}, -1.0)
    assert solve_sdp(b.build()).status == "infeasible"


def _zx_parent_program(v):
    # four parent effects G_ab, marginals give v-noisy Z and X projections
    b = SdpBuilder()
    blocks = [b.add_block(2) for _ in range(4)]
    b.add_matrix_equality({k: 1.0 for k in blocks}, np.eye(2))
    z0 = v * np.diag([1.0, 0.0]) + (1 - v) / 2 * np.eye(2)
    x0 = v * np.full((2, 2), 0.5) + (1 - v) / 2 * np.eye(2)
    b.add_matrix_equality({blocks[0]: 1.0, blocks[1]: 1.0}, z0)
    b.add_matrix_equality({blocks[0]: 1.0, blocks[2]: 1.0}, x0)
    return b.build()


@pytest.mark.parametrize("v,expected", [(0.65, True), (0.70, True), (0.72, False), (0.8, False)])
def test_zx_parent_matches_busch_criterion(v, expected):
    assert sdp_feasible(_zx_parent_program(v)).feasible is expected
    assert bool(np.sqrt(2) * v <= 1) is expected


@given(seed=st.integers(0, 10**6), m=st.integers(1, 4), n=st.integers(2, 6))
@settings(max_examples=25, deadline=None)
def test_lp_as_diagonal_sdp(seed, m, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(m, n))
    x0 = rng.random(n) + 0.1
    c = rng.normal(size=n)
    # keep the LP bounded: add sum x = const
    a = np.vstack([a, np.ones(n)])
    p = LpProblem(c, a, a @ x0, maximize=True)
    lp = solve_lp(p)
    b = SdpBuilder()
    blocks = [b.add_block(1, cost=[[cj]], kind=REAL) for cj in c]
    for row, rhs in zip(a, p.b_eq):
        b.add_constraint({k: [[aij]] for k, aij in zip(blocks, row) if aij != 0}, rhs)
    sol = solve_sdp(b.build())
    assert sol.objective == pytest.approx(lp.objective, abs=1e-6 * (1 + abs(lp.objective)))


def test_problem_validation():
    with pytest.raises(ValidationError):
        SdpProblem(dims=(2,), costs=(np.eye(3),), constraints=(), rhs=[])
    with pytest.raises(ValidationError):
        SdpProblem(dims=(2,), costs=(np.eye(2),), constraints=({1: np.eye(2)},), rhs=[1.0])
