import numpy as np
import pytest

from fairslot.core import Family, MechanismConfig, lambda_of, stability_bound
from fairslot.errors import BadShape, Infeasible, KExceedsN
from fairslot.fairness_audit import kunit_tv_bound
from fairslot.kunit import Direction, cap_level, kunit_allocate, kunit_ipa, kunit_pa, water_level_solve


def _random_vhat(rng, n):
    return np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=n))


def test_ipa_running_example():
    alloc = kunit_ipa([4, 2, 1], 2, 1.0)
    assert alloc.a == pytest.approx([6 / 7, 5 / 7, 3 / 7], abs=1e-12)
    assert alloc.water_level == pytest.approx(4 / 7)

    assert kunit_ipa([4, 2, 1], 1, 1.0).a == pytest.approx([2 / 3, 1 / 3, 0.0], abs=1e-12)


def test_ipa_drops_low_values():
    assert kunit_ipa([10, 10, 1], 1, 1.0).a == pytest.approx([0.5, 0.5, 0.0], abs=1e-12)


def test_pa_examples():
    assert kunit_pa([3, 2, 1], 1, 1.0).a == pytest.approx([1 / 2, 1 / 3, 1 / 6], abs=1e-12)
    alloc = kunit_pa([4, 2, 1], 2, 1.0)
    assert alloc.a == pytest.approx([1.0, 2 / 3, 1 / 3], abs=1e-12)
    assert alloc.water_level == pytest.approx(1 / 3)


@pytest.mark.parametrize("family", [Family.IPA, Family.PA])
def test_equal_values_share_evenly(family):
    a = kunit_allocate([5.0] * 4, 2, MechanismConfig(family, 1.5)).a
    assert a == pytest.approx([0.5] * 4, abs=1e-12)


@pytest.mark.parametrize("family", [Family.IPA, Family.PA])
def test_k_zero_and_k_equal_n(family):
    config = MechanismConfig(family, 1.0)
    assert kunit_allocate([3, 2, 1], 0, config).a.tolist() == [0.0, 0.0, 0.0]
    assert kunit_allocate([3, 2, 1], 3, config).a == pytest.approx([1.0, 1.0, 1.0])


@pytest.mark.parametrize("family", [Family.IPA, Family.PA])
def test_k_exceeding_n(family):
    with pytest.raises(KExceedsN):
        kunit_allocate([3, 2, 1], 4, MechanismConfig(family, 1.0))


@pytest.mark.parametrize("family", [Family.IPA, Family.PA])
def test_all_zero_values_are_uniform(family):
    alloc = kunit_allocate([0.0, 0.0, 0.0, 0.0], 3, MechanismConfig(family, 1.0))
    assert alloc.a == pytest.approx([0.75] * 4)
    assert alloc.degenerate


@pytest.mark.parametrize("family", [Family.IPA, Family.PA])
def test_fewer_positive_values_than_units(family):
    alloc = kunit_allocate([5.0, 0.0, 0.0, 0.0], 2, MechanismConfig(family, 1.0))
    assert alloc.a == pytest.approx([1.0, 1 / 3, 1 / 3, 1 / 3])
    assert alloc.water_level is None


def test_ipa_zero_value_gets_nothing_when_enough_positives():
    a = kunit_ipa([3.0, 0.0, 1.0], 1, 1.0).a
    assert a[1] == 0.0
    assert a.sum() == pytest.approx(1.0)


def test_cap_level():
    assert cap_level(np.array([4.0, 2.0, 1.0]), 2) == pytest.approx(1 / 3)
    assert cap_level(np.array([1.0, 1.0]), 2) == pytest.approx(1.0)
    assert cap_level(np.array([3.0, 0.0]), 0) == 0.0
    with pytest.raises(Infeasible):
        cap_level(np.array([3.0, 0.0]), 2)


def test_water_level_solve_both_directions():
    level, a = water_level_solve([0.25, 0.5, 1.0], 2, Direction.FLOOR_ONE_MINUS)
    assert level == pytest.approx(4 / 7)
    assert a == pytest.approx([6 / 7, 5 / 7, 3 / 7])

    level, a = water_level_solve([4, 2, 1], 2, Direction.CAP_AT_ONE)
    assert level == pytest.approx(1 / 3)
    assert a == pytest.approx([1.0, 2 / 3, 1 / 3])

    level, a = water_level_solve([1, 1], 2, "cap_at_one")
    assert level == pytest.approx(1.0)
    assert a == pytest.approx([1.0, 1.0])


def test_floor_form_with_infinite_weights():
    _, a = water_level_solve([np.inf, 1.0, 1.0], 1, Direction.FLOOR_ONE_MINUS)
    assert a == pytest.approx([0.0, 0.5, 0.5])
    with pytest.raises(Infeasible):
        water_level_solve([np.inf, np.inf, 1.0], 2, Direction.FLOOR_ONE_MINUS)


def test_water_level_solve_rejects_bad_weights():
    with pytest.raises(BadShape):
        water_level_solve([1.0, -1.0], 1)
    with pytest.raises(BadShape):
        water_level_solve([np.inf, 1.0], 1, Direction.CAP_AT_ONE)
    with pytest.raises(Infeasible):
        water_level_solve([1.0, 1.0], 3)


@pytest.mark.parametrize("family", [Family.IPA, Family.PA])
@pytest.mark.parametrize("ell", [0.5, 1.0, 3.0])
def test_feasibility_and_order(rng, family, ell):
    config = MechanismConfig(family, ell)
    for _ in range(100):
        n = int(rng.integers(1, 10))
        k = int(rng.integers(0, n + 1))
        vhat = _random_vhat(rng, n)
        a = kunit_allocate(vhat, k, config).a
        assert a.sum() == pytest.approx(k, abs=1e-9)
        assert np.all(a >= 0) and np.all(a <= 1)
        ranked = a[np.argsort(-vhat, kind="stable")]
        assert np.all(np.diff(ranked) <= 1e-12)


@pytest.mark.parametrize("family", [Family.IPA, Family.PA])
def test_scale_free_and_monotone_in_k(rng, family):
    config = MechanismConfig(family, 1.0)
    for _ in range(100):
        n = int(rng.integers(2, 9))
        vhat = _random_vhat(rng, n)
        c = float(np.exp(rng.uniform(-3, 3)))
        for k in range(n + 1):
            a = kunit_allocate(vhat, k, config).a
            assert kunit_allocate(c * vhat, k, config).a == pytest.approx(a, abs=1e-9)
            if k < n:
                assert np.all(kunit_allocate(vhat, k + 1, config).a >= a - 1e-12)


@pytest.mark.parametrize("family", [Family.IPA, Family.PA])
def test_own_value_monotone(rng, family):
    config = MechanismConfig(family, 2.0)
    for _ in range(100):
        n = int(rng.integers(2, 8))
        k = int(rng.integers(1, n + 1))
        vhat = _random_vhat(rng, n)
        i = int(rng.integers(n))
        before = kunit_allocate(vhat, k, config).a
        raised = vhat.copy()
        raised[i] *= float(rng.uniform(1.0, 5.0))
        after = kunit_allocate(raised, k, config).a
        assert after[i] >= before[i] - 1e-12
        others = np.arange(n) != i
        assert np.all(after[others] <= before[others] + 1e-12)


def _perturbed(rng, vhat, lambda_max):
    spread = np.log(lambda_max)
    return vhat * np.exp(rng.uniform(-spread, spread, size=vhat.shape[0]))


@pytest.mark.parametrize("ell", [0.5, 1.0, 2.0])
def test_ipa_value_stability(rng, ell):
    for _ in range(200):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(1, n + 1))
        vhat = _random_vhat(rng, n)
        other = _perturbed(rng, vhat, float(rng.choice([1.5, 4.0, 16.0])))
        lam = lambda_of(vhat, other)
        diff = np.abs(kunit_ipa(vhat, k, ell).a - kunit_ipa(other, k, ell).a)
        assert diff.max() <= stability_bound(lam, ell) + 1e-9


@pytest.mark.parametrize("ell", [0.5, 1.0, 2.0])
def test_pa_subset_stability(rng, ell):
    for _ in range(200):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(1, n + 1))
        vhat = _random_vhat(rng, n)
        other = _perturbed(rng, vhat, float(rng.choice([1.5, 4.0, 16.0])))
        lam = lambda_of(vhat, other)
        delta = kunit_pa(vhat, k, ell).a - kunit_pa(other, k, ell).a
        worst = max(delta[delta > 0].sum(), -delta[delta < 0].sum())
        assert worst <= kunit_tv_bound(lam, ell, k) + 1e-9
