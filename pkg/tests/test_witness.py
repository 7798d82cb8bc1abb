import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from classim import witness as wmod
from classim.errors import SizingError, ValidationError
from classim.linalg import sample_haar_unitaries
from classim.simulation import random_device_family, simulate
from classim.states import (Povm, StateSet, apply_isotropic_noise, computational_basis_povm,
                            gen_mub_bases, gen_mub_states)
from classim.witness import (Witness, WitnessBound, classical_bound, critical_visibility,
                             enumerate_strategies, evaluate, mub_witness, qubit_exact_bound,
                             reduced_operators, sign_witness, strategy_bound_sdp, strategy_count)


def _random_witness(seed, d, m, n_meas=2):
    rng = np.random.default_rng(seed)
    meas = [Povm.from_basis(u) for u in sample_haar_unitaries(d, n_meas, rng)]
    return Witness(meas, rng.normal(size=(d, m, n_meas)))


def test_mub_witness_structure():
    w = mub_witness(3, 2)
    assert w.m == 6 and w.coefficients.sum() == 6
    assert np.count_nonzero(w.coefficients) == 6
    assert mub_witness(3, 4).m == 12
    with pytest.raises(ValidationError):
        mub_witness(3, 5)


def test_evaluate_examples():
    w = mub_witness(3, 2)
    target = gen_mub_states(3, 2)
    assert evaluate(w, target) == pytest.approx(6.0, abs=1e-12)
    assert evaluate(w, apply_isotropic_noise(target, 0.5)) == pytest.approx(4.0, abs=1e-12)
    mixed = StateSet(np.broadcast_to(np.eye(3) / 3, (6, 3, 3)))
    expected = sum(w.coefficients[b, x, y] * 1 / 3
                   for b in range(3) for x in range(6) for y in range(2))
    assert evaluate(w, mixed) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValidationError):
        evaluate(w, gen_mub_states(3, 3))


def test_reduced_operators():
    z = computational_basis_povm(2)
    c = np.zeros((2, 1, 1)); c[0, 0, 0] = 1
    assert np.allclose(reduced_operators(Witness([z], c))[0], np.diag([1, 0]))
    w = mub_witness(3, 2)
    ops = reduced_operators(w)
    for j in range(2):
        for k in range(3):
            assert np.allclose(ops[3 * j + k], w.measurements[j].effects[k])
    zero = Witness([z], np.zeros((2, 3, 1)))
    assert np.all(reduced_operators(zero) == 0)


def test_enumeration():
    assert len(list(enumerate_strategies(2, 2))) == 4
    assert len(list(enumerate_strategies(6, 3))) == 729
    assert list(enumerate_strategies(2, 2, symmetry_reduce=True)) == [(0, 0), (0, 1)]
    full = list(enumerate_strategies(4, 3))
    assert full == sorted(full) == list(itertools.product(range(3), repeat=4))
    assert strategy_count(12, 3, True) == 88574
    with pytest.raises(SizingError, match="symmetry"):
        list(enumerate_strategies(12, 3, cap=1000))


def test_symmetry_reduction_covers_every_orbit():
    reps = set(enumerate_strategies(5, 3, symmetry_reduce=True))
    for s in itertools.product(range(3), repeat=5):
        relabel = {}
        canon = tuple(relabel.setdefault(v, len(relabel)) for v in s)
        assert canon in reps


def test_strategy_bound_examples():
    z = computational_basis_povm(2)
    assert strategy_bound_sdp(Witness([z], np.zeros((2, 1, 1))), (0,)) == pytest.approx(0, abs=1e-7)
    c = np.zeros((2, 1, 1)); c[0, 0, 0] = 1
    assert strategy_bound_sdp(Witness([z], c), (0,)) == pytest.approx(1, abs=1e-7)
    with pytest.raises(ValidationError):
        strategy_bound_sdp(Witness([z], c), (2,))


@given(seed=st.integers(0, 10**6), perm=st.permutations(range(3)))
@settings(max_examples=15, deadline=None)
def test_relabeling_invariance(seed, perm):
    w = _random_witness(seed, 3, 4)
    s = np.random.default_rng(seed).integers(0, 3, 4)
    a = strategy_bound_sdp(w, s)
    b = strategy_bound_sdp(w, np.array(perm)[s])
    assert a == pytest.approx(b, abs=2e-6)


@pytest.mark.parametrize("seed", range(10))
def test_qubit_tightness(seed):
    rng = np.random.default_rng(seed)
    meas = [Povm.from_basis(u) for u in sample_haar_unitaries(2, 2, rng)]
    s = rng.normal(size=(3, 2))
    exact = qubit_exact_bound(s, meas)
    relaxed = classical_bound(sign_witness(s, meas))
    assert relaxed.beta == pytest.approx(exact.beta, abs=1e-6)
    # the exact optimizer is a strategy whose relaxation attains the bound
    assert strategy_bound_sdp(sign_witness(s, meas), exact.argmax) == pytest.approx(exact.beta, abs=1e-6)


def test_qubit_exact_examples():
    zx = gen_mub_bases(2)[:2]
    assert qubit_exact_bound(np.eye(2), zx).beta == pytest.approx(np.sqrt(2), abs=1e-12)
    single = np.zeros((2, 2)); single[1, 0] = 1
    assert qubit_exact_bound(single, zx).beta == pytest.approx(1, abs=1e-12)
    with pytest.raises(ValidationError):
        qubit_exact_bound(np.eye(3), gen_mub_bases(3)[:3])
    noisy = Povm([np.diag([0.9, 0.1]), np.diag([0.1, 0.9])])
    with pytest.raises(ValidationError):
        qubit_exact_bound(np.eye(1), [noisy])


def test_coefficient_shift():
    w = _random_witness(5, 3, 3)
    shift = np.random.default_rng(6).normal(size=(3, 2))
    shifted = Witness(w.measurements, w.coefficients + shift[None, :, :])
    states = apply_isotropic_noise(StateSet(np.array([np.diag([1.0, 0, 0]), np.eye(3) / 3,
                                                      np.diag([0, 0.5, 0.5])])), 0.8)
    assert evaluate(shifted, states) - evaluate(w, states) == pytest.approx(shift.sum(), abs=1e-12)
    assert classical_bound(shifted).beta - classical_bound(w).beta == pytest.approx(shift.sum(), abs=1e-6)


def test_symmetry_reduced_bound_matches_full():
    w = _random_witness(11, 3, 4)
    full = classical_bound(w, symmetry_reduce=False, keep_values=True)
    red = classical_bound(w, symmetry_reduce=True)
    assert full.n_strategies == 81 and red.n_strategies == 14
    assert red.beta == pytest.approx(full.beta, abs=2e-6)
    assert full.beta == pytest.approx(np.nanmax(full.values))


def test_soundness_against_lp_models():
    s = gen_mub_states(3, 2)
    w = mub_witness(3, 2)
    beta = classical_bound(w).beta
    for seed in range(3):
        res = simulate(s, random_device_family(3, 3, 60, seed))
        assert evaluate(w, apply_isotropic_noise(s, res.visibility)) <= beta + 1e-5


def test_critical_visibility():
    w = mub_witness(3, 2)
    target = gen_mub_states(3, 2)
    assert critical_visibility(w, target, 6.0) == pytest.approx(1.0)
    assert critical_visibility(w, target, 14 / 3) == pytest.approx(2 / 3, abs=1e-12)
    with pytest.raises(ValidationError):
        critical_visibility(w, target, 7.0)


def test_checkpoint_resume(tmp_path, monkeypatch):
    monkeypatch.setattr(wmod, "CHECKPOINT_EVERY", 10)
    w = _random_witness(2, 3, 5)
    path = str(tmp_path / "ck.json")
    ref = classical_bound(w, batch_size=10)

    class Stop(Exception):
        pass

    def halt(done, total):
        if done >= 20:
            raise Stop

    with pytest.raises(Stop):
        classical_bound(w, batch_size=10, checkpoint=path, progress=halt)
    saved = json.load(open(path))
    assert saved["done"] == 20
    seen = []
    res = classical_bound(w, batch_size=10, checkpoint=path, progress=lambda d, t: seen.append(d))
    assert seen[0] == 30
    assert res.beta == ref.beta and res.argmax == ref.argmax
    other = _random_witness(3, 3, 5)
    with pytest.raises(ValidationError):
        classical_bound(other, batch_size=10, checkpoint=path)


def test_witness_and_bound_json(tmp_path):
    w = _random_witness(1, 2, 3)
    p = tmp_path / "w.json"
    w.save(p)
    back = Witness.load(p)
    assert np.array_equal(back.coefficients, w.coefficients)
    assert back.fingerprint() == w.fingerprint()
    b = qubit_exact_bound(np.eye(2), gen_mub_bases(2)[:2])
    assert WitnessBound.from_dict(json.loads(json.dumps(b.to_dict()))) == b
    with pytest.raises(ValidationError):
        Witness(w.measurements, np.zeros((2, 3, 5)))
