"""End-to-end acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary. Criteria marked ``slow``
(random device families and the 12-state witness bound) take minutes;
``-m "not slow"`` skips them.
"""
import math

import numpy as np
import pytest

from classim.analytic import (bound_result1, bound_result3, build_bases_model, harmonic,
                              mc_mean_max_overlap, mc_verify_result1, mix_models)
from classim.linalg import proj
from classim.simulation import (ClassicalModel, Device, bb84_devices, bb84_model, random_device_family,
                                reconstruction_residual, simulate)
from classim.solvers.sdp import sdp_feasible
from classim.states import StateSet, apply_isotropic_noise, gen_bb84, gen_mub_bases, gen_mub_states
from classim.steering import (SteeringInequality, extend_model, jm_problem, jm_threshold,
                              parent_from_model, qubit_model_from_parent, steering_to_witness)
from classim.witness import classical_bound, critical_visibility, mub_witness

V_BB84 = 1 / math.sqrt(2)
LP_GAP = 1e-7
SDP_GAP = 1e-6
RANDOM_SEED = 2024
ZX_PAIR = StateSet(np.array([proj([1, 0]), proj(np.array([1, 1]) / math.sqrt(2))]), ["0", "+"])


def lp_certified(res):
    return res.gap <= LP_GAP * (1 + abs(res.visibility))


def jm_feasible(states, v):
    """Feasibility with its SDP certificate, asserted before returning."""
    problem, _ = jm_problem(states, v)
    res = sdp_feasible(problem)
    assert res.solution.gap <= SDP_GAP
    return res


# ------------------------------------------------------------------ cached runs

@pytest.fixture(scope="module")
def bb84_run():
    return simulate(gen_bb84(), bb84_devices())


@pytest.fixture(scope="module")
def bases_run():
    model = build_bases_model(gen_mub_bases(3)[:2], 3)
    return model, simulate(gen_mub_states(3, 2), model.devices)


@pytest.fixture(scope="module")
def random_runs():
    s = gen_mub_states(3, 2)
    return {n: simulate(s, random_device_family(3, 3, n, RANDOM_SEED)) for n in (50, 200, 800)}


@pytest.fixture(scope="module")
def witness_bounds():
    return {n: classical_bound(mub_witness(3, n)) for n in (2, 3, 4)}


@pytest.fixture(scope="module")
def steering_run():
    w, zeta = steering_to_witness(SteeringInequality(np.eye(2), gen_mub_bases(2)[:2]))
    return zeta, classical_bound(w)


# ------------------------------------------------------------------ criteria

def test_criterion_1_analytic_bounds():
    for d, v in ((2, 0.5), (3, 0.41667), (4, 0.36111)):
        assert bound_result1(d, d).v == pytest.approx(v, abs=1e-4)
    for m, v in ((2, 0.5), (3, 0.3333), (4, 0.25)):
        assert bound_result3(3, m, 3).v == pytest.approx(v, abs=1e-4)


def test_criterion_2_bb84_model(bb84_run):
    assert reconstruction_residual(bb84_model(), gen_bb84(), V_BB84) <= 1e-12
    assert bb84_run.visibility == pytest.approx(0.70711, abs=1e-5)
    assert bb84_run.visibility == pytest.approx(V_BB84, abs=1e-6)
    assert lp_certified(bb84_run)


def test_criterion_3_bases_model(bases_run):
    model, res = bases_run
    assert reconstruction_residual(model, gen_mub_states(3, 2), 0.5) <= 1e-10
    assert res.visibility >= 0.5 - 1e-6
    assert lp_certified(res)


@pytest.mark.slow
def test_criterion_4_random_families(random_runs):
    vs = [random_runs[n].visibility for n in (50, 200, 800)]
    assert all(v >= 0 for v in vs)
    assert all(b >= a - 1e-7 for a, b in zip(vs, vs[1:]))
    assert max(vs) <= 0.6667 + 1e-4
    assert vs[-1] >= 0.5
    assert all(lp_certified(r) for r in random_runs.values())


@pytest.mark.slow
def test_criterion_5_witness_bounds(witness_bounds):
    assert witness_bounds[2].beta == pytest.approx(4.6667, abs=1e-3)
    assert witness_bounds[3].beta == pytest.approx(6.4115, abs=1e-3)
    assert witness_bounds[4].beta == pytest.approx(7.7835, abs=2e-3)
    assert all(b.max_gap <= SDP_GAP for b in witness_bounds.values())


@pytest.mark.slow
def test_criterion_6_critical_visibilities(witness_bounds):
    for n, v in ((2, 0.6667), (3, 0.5686), (4, 0.4729)):
        got = critical_visibility(mub_witness(3, n), gen_mub_states(3, n), witness_bounds[n].beta)
        assert got == pytest.approx(v, abs=2e-3)


def test_criterion_7_haar_integrals():
    for d in range(2, 5):
        for r in range(2, d + 1):
            mean, se = mc_mean_max_overlap(d, r, 10**5, seed=RANDOM_SEED)
            assert abs(mean - harmonic(r) / d) <= 4 * se
    for d in (2, 3):
        target = np.diag([1.0] + [0.0] * (d - 1))
        assert mc_verify_result1(target, d, d, 10**5, seed=RANDOM_SEED) <= 0.02


def test_criterion_8_steering_equivalence(steering_run):
    zeta, relaxed = steering_run
    assert zeta.beta == pytest.approx(1.41421356237, abs=1e-9)
    assert relaxed.beta == pytest.approx(zeta.beta, abs=1e-6)
    assert relaxed.max_gap <= SDP_GAP


def test_criterion_9_joint_measurability(bb84_run, bases_run):
    assert jm_threshold(ZX_PAIR) == pytest.approx(0.7071, abs=1e-4)
    assert jm_feasible(gen_bb84(), bb84_run.visibility).feasible
    assert jm_feasible(gen_mub_states(3, 2), bases_run[1].visibility).feasible
    # strictness: jointly measurable beyond the witness threshold of 2/3
    assert jm_feasible(gen_mub_states(3, 2), 0.68).feasible


def _models():
    commuting = ClassicalModel([Device(np.eye(2))], [1.0], [np.eye(2)])
    return {
        "commuting": commuting,
        "bb84": extend_model(bb84_model()),
        "bases d=2": extend_model(build_bases_model(gen_mub_bases(2)[:2], 2)),
        "bases d=3": extend_model(build_bases_model(gen_mub_bases(3)[:2], 3)),
        "bases d=3 r=2": extend_model(build_bases_model(gen_mub_bases(3)[:3], 2)),
    }


def test_criterion_10_construction_round_trips():
    for name, model in _models().items():
        parent = parent_from_model(model)
        assert np.abs(parent.effects.sum(axis=0) - np.eye(model.dim)).max() <= 1e-9, name
        assert min(np.linalg.eigvalsh(g)[0] for g in parent.effects) >= -1e-9, name
        assert np.abs(parent.marginals()[:, 0] - model.reconstruct_all()).max() <= 1e-9, name
        if model.dim == 2:
            back = qubit_model_from_parent(parent)
            assert np.abs(back.reconstruct_all() - model.reconstruct_all()).max() <= 1e-9, name
    a, b = bb84_model(), build_bases_model(gen_mub_bases(2)[:2], 2)
    mixed = mix_models(a, b, 0.3).reconstruct_all()
    ra, rb = a.reconstruct_all(), b.reconstruct_all()
    expected = 0.3 * ra[:, None] + 0.7 * rb[None, :]
    assert np.abs(mixed - expected.reshape(mixed.shape)).max() <= 1e-14


@pytest.mark.slow
def test_criterion_11_solver_certificates(bb84_run, bases_run, random_runs, witness_bounds, steering_run):
    lp_runs = [bb84_run, bases_run[1], *random_runs.values()]
    assert all(lp_certified(r) for r in lp_runs)
    sdp_gaps = [b.max_gap for b in witness_bounds.values()] + [steering_run[1].max_gap]
    sdp_gaps.append(jm_feasible(ZX_PAIR, 0.7).solution.gap)
    assert max(sdp_gaps) <= SDP_GAP


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
