import math

import numpy as np
import pytest

from sparsecap import saturator, theory


@pytest.fixture(scope="module")
def planted():
    return saturator.build_saturating(20, 400, 2000, seed=0)


def test_build_validates_arguments():
    with pytest.raises(ValueError):
        saturator.build_saturating(-1, 5, 5, seed=0)
    with pytest.raises(ValueError):
        saturator.build_saturating(2, 0, 5, seed=0)
    with pytest.raises(ValueError):
        saturator.build_saturating(6, 5, 5, seed=0)  # p < n


def test_build_exhausts_attempts_when_geometry_is_impossible():
    # d=1: any two same-sign near-unit scalars give cross products >= 0.85,
    # and three scalars always contain such a pair
    with pytest.raises(RuntimeError, match="attempts"):
        saturator.build_saturating(3, 1, 4, seed=0, max_attempts=30)


def test_single_point_instance_is_exact():
    inst = saturator.build_saturating(1, 400, 1, seed=3)
    assert inst.mem.tolist() == [0] and inst.mask_bits.tolist() == [1]
    act = float(inst.Wmat[0] @ inst.X[0]) + saturator.BIAS
    assert act > 0
    assert abs(inst.a[0] - inst.y[0] / act) < 1e-12
    assert abs(inst.f(inst.X)[0] - inst.y[0]) < 1e-12
    assert verify_ok(inst)


def verify_ok(inst):
    return saturator.verify_saturating(inst).passed


def test_same_seed_same_instance():
    a = saturator.build_saturating(4, 50, 30, seed=7)
    b = saturator.build_saturating(4, 50, 30, seed=7)
    c = saturator.build_saturating(4, 50, 30, seed=8)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.Wmat, b.Wmat)
    assert np.array_equal(a.mem, b.mem) and np.array_equal(a.a, b.a)
    assert not np.array_equal(a.X, c.X)


def test_planted_instance_passes_gating_checks(planted):
    rep = saturator.verify_saturating(planted)
    assert rep.passed
    for name in saturator.GATING_CHECKS:
        assert rep.check_ok(name), name
    assert rep.checks["interpolation"]["worst"] < 1e-9
    # concentration bands are asymptotic in d; only those may be flagged
    assert set(rep.failures) <= {"cov_norm", "cov_inner", "mem_cross_inner"}


def test_planted_background_carries_no_output_weight(planted):
    assert np.all(planted.a[planted.mask_bits == 0] == 0.0)
    assert int(planted.mask_bits.sum()) == planted.n
    assert len(set(planted.mem.tolist())) == planted.n


def test_verifier_catches_nonexclusive_activation():
    # two covariates 18 degrees apart: cross inner 0.95 clears the 0.8 gate
    X = np.array([[1.0, 0.0], [0.95, math.sqrt(1 - 0.95**2)]])
    A = np.maximum(X @ X.T + saturator.BIAS, 0.0)
    a = np.linalg.solve(A, np.array([1.0, -1.0]))
    inst = saturator.SaturatingInstance(
        n=2, d=2, p=2, X=X, y=np.array([1.0, -1.0]), Wmat=X.copy(),
        bias=saturator.BIAS, mem=np.array([0, 1]),
        mask_bits=np.ones(2, dtype=np.uint8), a=a, seed=0,
    )
    rep = saturator.verify_saturating(inst)
    assert not rep.passed
    assert "activation_exclusive" in rep.failures
    assert rep.check_ok("interpolation")  # the full solve still interpolates


def test_verifier_catches_broken_interpolation():
    inst = saturator.build_saturating(3, 100, 10, seed=1)
    inst.a = inst.a * 2.0
    rep = saturator.verify_saturating(inst)
    assert not rep.passed and "interpolation" in rep.failures


def test_empty_instance_is_vacuously_valid():
    inst = saturator.build_saturating(0, 5, 7, seed=2)
    rep = saturator.verify_saturating(inst)
    assert rep.passed and rep.failures == []
    assert saturator.estimate_lipschitz(inst, samples=20) == 0.0


def test_lipschitz_single_neuron_matches_slope():
    inst = saturator.build_saturating(1, 200, 1, seed=5)
    slope = abs(inst.a[0]) * float(np.linalg.norm(inst.Wmat[0]))
    est = saturator.estimate_lipschitz(inst, samples=50, seed=1)
    assert abs(est - slope) / slope < 0.02


def test_lipschitz_estimate_is_deterministic(planted):
    a = saturator.estimate_lipschitz(planted, samples=30, seed=4)
    b = saturator.estimate_lipschitz(planted, samples=30, seed=4)
    assert a == b and a > 0


def test_lipschitz_stable_across_planted_sizes():
    ests = []
    for n in (5, 10, 20):
        inst = saturator.build_saturating(n, 400, 600, seed=11)
        ests.append(saturator.estimate_lipschitz(inst, samples=100, seed=2))
    assert max(ests) / min(ests) < 2.0


def test_mi_account_reports_capacity_gap(planted):
    acct = saturator.saturating_mi_account(planted)
    assert acct["mask_l1"] == 20
    assert acct["nd"] == 8000
    assert acct["entropy_cap_bits"] == theory.log2_binomial(2000, 20)
    assert acct["peff_continuous"] == theory.peff_continuous(
        acct["entropy_cap_bits"], 20.0, 1.0, 1.0, 0.01
    )
    assert acct["mask_l1"] < acct["nd"]  # few active weights, big mask budget
