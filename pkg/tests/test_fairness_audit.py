import json

import numpy as np
import pytest

from fairslot.core import Family, MechanismConfig, effective_values, instance_from_effective, lambda_of, validate_instance
from fairslot.errors import DimensionMismatch, InvalidConfig, InvalidH, NonPositiveAlpha
from fairslot.fairness_audit import (
    audit_pair,
    heterogeneous_pref_audit,
    kunit_tv_audit,
    kunit_tv_bound,
    kunit_vs_audit,
    ordered_vs_audit,
    replay_hetero,
    tv_vs_audit,
    weak_vs_audit,
)
from fairslot.kunit import kunit_ipa, kunit_pa
from fairslot.oracles import pair_generator
from fairslot.position import generalized_allocate, generalized_ipa


def test_identical_matrices_pass(running_instance):
    m = generalized_ipa(running_instance, 1.0)
    record = weak_vs_audit(m, m, 1.0, 1.0)
    assert record.measured == 0.0
    assert record.satisfied


def test_weak_bound_on_running_pair(running_instance):
    other = instance_from_effective([1.0, 2.0, 1.0], [1.0, 0.5])
    lam = lambda_of(effective_values(running_instance), effective_values(other))
    assert lam == 4.0
    record = weak_vs_audit(generalized_ipa(running_instance, 1.0), generalized_ipa(other, 1.0), lam, 1.0)
    assert record.bound == pytest.approx(1.875)
    assert record.satisfied


def test_weak_violation_has_witness():
    m, m_prime = [[0.6], [0.3], [0.1]], [[0.4], [0.4], [0.2]]
    record = weak_vs_audit(m, m_prime, 1.0, 1.0)
    assert not record.satisfied
    assert record.measured == pytest.approx(0.2)
    assert record.witness == {"i": 0, "j": 0}
    i, j = record.witness["i"], record.witness["j"]
    assert abs(m[i][j] - m_prime[i][j]) == pytest.approx(record.measured)


def test_ordered_with_explicit_weights():
    m = [[0.5, 0.3], [0.5, 0.7]]
    m_prime = [[0.4, 0.2], [0.6, 0.8]]
    assert ordered_vs_audit(m, m_prime, 0, [1.0, 1.0], 2.0, 1.0).measured == pytest.approx(0.2)
    assert ordered_vs_audit(m, m_prime, 0, [1.0, 0.0], 2.0, 1.0).measured == pytest.approx(0.1)
    worst = ordered_vs_audit(m, m_prime, 0, "worst", 2.0, 1.0)
    assert worst.measured == pytest.approx(0.2)
    assert worst.witness == {"i": 0, "p": 2}
    assert worst.bound == pytest.approx(0.75)


@pytest.mark.parametrize("h", [[0.5, 1.0], [1.2, 0.0], [1.0], "best"])
def test_ordered_rejects_bad_weights(h):
    with pytest.raises(InvalidH):
        ordered_vs_audit([[0.5, 0.5], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]], 0, h, 1.0, 1.0)


def test_tv_picks_the_larger_side():
    m = [[0.4], [0.3], [0.3]]
    m_prime = [[0.3], [0.4], [0.3]]
    (record,) = tv_vs_audit(m, m_prime, 1.0, 1.0)
    assert record.measured == pytest.approx(0.1)
    assert not record.satisfied
    witness = record.witness
    assert witness["column"] == 0
    assert (witness["subset"], witness["sign"]) in (([0], "+"), ([1], "-"))
    delta = np.asarray(m)[witness["subset"], 0] - np.asarray(m_prime)[witness["subset"], 0]
    assert abs(delta.sum()) == pytest.approx(record.measured)

    (kunit,) = tv_vs_audit(m, m_prime, 2.0, 1.0, bound_kind="kunit")
    assert kunit.bound == pytest.approx(1 / 3)
    with pytest.raises(InvalidConfig):
        tv_vs_audit(m, m_prime, 2.0, 1.0, bound_kind="l2")


def test_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        weak_vs_audit(np.zeros((3, 2)), np.zeros((3, 1)), 1.0, 1.0)
    with pytest.raises(DimensionMismatch):
        kunit_vs_audit([0.5, 0.5], [1.0], 1.0, 1.0)


def test_hetero_same_instance_passes():
    m = [[0.7], [0.3]]
    record = heterogeneous_pref_audit(m, m, [1.0, 2.0], [1.0, 2.0], 1.0, 1.0)
    assert record.measured == pytest.approx(0.0, abs=1e-15)
    assert record.satisfied


def test_hetero_favours_the_relatively_more_clickable_ad():
    config = MechanismConfig(Family.IPA, 1.0)
    user = validate_instance({"values": [1.0, 10.0], "alpha": [1.0, 0.01], "beta": [1.0]})
    other = validate_instance({"values": [1.0, 10.0], "alpha": [1.0, 1.0], "beta": [1.0]})
    m, m_prime = generalized_allocate(user, config), generalized_allocate(other, config)
    np.testing.assert_allclose(m.m[:, 0], [10 / 11, 1 / 11], atol=1e-12)
    np.testing.assert_allclose(m_prime.m[:, 0], [1 / 11, 10 / 11], atol=1e-12)
    record = heterogeneous_pref_audit(m, m_prime, user.alpha, other.alpha, 1.0, 1.0)
    assert record.bound == 0.0
    assert record.satisfied
    assert m.m[0, 0] >= m_prime.m[0, 0]


def test_hetero_slack_bound():
    m = [[0.5], [0.5]]
    assert heterogeneous_pref_audit(m, m, [1, 1], [1, 1], 2.0, 1.0).bound == pytest.approx(0.75)


def test_hetero_ties_use_the_worst_order():
    m, m_prime = [[0.7], [0.3]], [[0.5], [0.5]]
    record = heterogeneous_pref_audit(m, m_prime, [1.0, 1.0], [1.0, 1.0], 1.0, 1.0)
    assert record.measured == pytest.approx(0.2)
    assert record.witness == {"prefix": 1, "column": 0, "order": [1]}
    assert not record.satisfied
    assert replay_hetero(m, m_prime, record.witness) == pytest.approx(record.measured)


def test_hetero_rejects_bad_alpha():
    with pytest.raises(NonPositiveAlpha):
        heterogeneous_pref_audit([[1.0]], [[1.0]], [0.0], [1.0], 1.0, 1.0)


def test_kunit_audits():
    assert kunit_tv_bound(1.0, 1.0) == 0.0
    assert kunit_tv_bound(3.0, 1.0) == pytest.approx(0.5)
    assert kunit_tv_bound(float("inf"), 1.0) == 1.0
    record = kunit_vs_audit([0.9, 0.1, 0.0], [0.5, 0.4, 0.1], 2.0, 1.0)
    assert record.witness == {"i": 0}
    assert record.measured == pytest.approx(0.4)
    assert record.satisfied
    tv = kunit_tv_audit([0.9, 0.1, 0.0], [0.5, 0.4, 0.1], 2.0, 1.0)
    assert tv.metric == "kunit_tv"
    assert tv.measured == pytest.approx(0.4)
    assert not tv.satisfied


def test_audit_pair_records(running_instance):
    report = audit_pair(running_instance, running_instance, MechanismConfig())
    assert report.satisfied
    assert report.lambda_effective == 1.0
    metrics = [r.metric for r in report.records]
    assert metrics == ["weak"] + ["ordered"] * 3 + ["tv"] * 2 + ["hetero"]

    frame = report.to_frame()
    assert list(frame.columns) == ["definition", "witness", "measured", "bound", "satisfied"]
    assert json.loads(frame.loc[0, "witness"]) == {"i": 0, "j": 0}
    assert report.to_payload()["satisfied"] is True


def test_audit_pair_kunit_definition(running_instance):
    ipa = audit_pair(running_instance, running_instance, MechanismConfig(Family.IPA), ["kunit"])
    assert [r.metric for r in ipa.records] == ["kunit_vs"]
    pa = audit_pair(running_instance, running_instance, MechanismConfig(Family.PA), ["kunit"])
    assert [r.metric for r in pa.records] == ["kunit_vs", "kunit_tv"]


def test_kunit_tv_bound_scales_with_units():
    assert kunit_tv_bound(4.0, 1.0, 1) == pytest.approx(3 / 5)
    assert kunit_tv_bound(4.0, 1.0, 2) == pytest.approx(2 * 15 / 17)
    assert kunit_tv_bound(2.0, 0.5, 3) == pytest.approx(1.0)
    assert kunit_tv_bound(float("inf"), 1.0, 3) == 3.0
    assert kunit_tv_bound(5.0, 1.0, 0) == 0.0


def test_kunit_tv_two_units():
    a = validate_instance({"values": [1.0, 1.0, 1.0, 1.0], "alpha": [1.0] * 4, "beta": [1.0, 0.5]})
    b = validate_instance({"values": [4.0, 4.0, 1.0, 1.0], "alpha": [1.0] * 4, "beta": [1.0, 0.5]})
    record = kunit_tv_audit(kunit_pa(a.vhat, 2, 1.0).a, kunit_pa(b.vhat, 2, 1.0).a, 4.0, 1.0)
    assert record.measured == pytest.approx(0.6)
    assert record.bound == pytest.approx(30 / 17)
    assert record.satisfied
    assert audit_pair(a, b, MechanismConfig(Family.PA), ["kunit"]).satisfied


def test_kunit_tv_random_pa_pairs():
    config = MechanismConfig(Family.PA, 1.0)
    for seed in range(300):
        a, b = pair_generator(seed, 5, 2, 4.0)
        report = audit_pair(a, b, config, ["kunit"])
        assert report.satisfied, (seed, report.records)


def test_audit_pair_lambda_override():
    a = validate_instance({"values": [1.0, 1.0], "alpha": [1.0, 1.0], "beta": [1.0]})
    b = validate_instance({"values": [1.0, 1.0], "alpha": [1.0, 2.0], "beta": [1.0]})
    assert audit_pair(a, b, MechanismConfig()).satisfied
    forced = audit_pair(a, b, MechanismConfig(), ["weak"], lam=1.0)
    assert not forced.satisfied
    assert forced.records[0].witness["j"] == 0


def test_audit_pair_rejects_bad_input(running_instance):
    with pytest.raises(InvalidConfig):
        audit_pair(running_instance, running_instance, MechanismConfig(), ["fuzzy"])
    smaller = instance_from_effective([4.0, 2.0], [1.0, 0.5])
    with pytest.raises(DimensionMismatch):
        audit_pair(running_instance, smaller, MechanismConfig())


@pytest.mark.parametrize("family", [Family.IPA, Family.PA])
@pytest.mark.parametrize("ell", [0.5, 1.0, 2.0])
def test_stability_guarantees_hold(family, ell):
    config = MechanismConfig(family, ell)
    definitions = ["weak", "ordered", "hetero"] + (["tv"] if family is Family.PA else [])
    rng = np.random.default_rng(11)
    for trial in range(60):
        n = int(rng.integers(2, 8))
        k = int(rng.integers(1, n + 1))
        lambda_max = float(rng.choice([1.0, 1.5, 4.0, 16.0]))
        a, b = pair_generator(int(rng.integers(2**31)), n, k, lambda_max)
        report = audit_pair(a, b, config, definitions)
        failed = [r for r in report.records if not r.satisfied]
        assert not failed, (trial, failed)


@pytest.mark.parametrize("family", [Family.IPA, Family.PA])
def test_single_coordinate_pairs(family):
    for seed in range(40):
        a, b = pair_generator(seed, 5, 2, 2.0, "single_coordinate")
        lam = lambda_of(effective_values(a), effective_values(b))
        assert lam == pytest.approx(4.0)
        if family is Family.IPA:
            record = kunit_vs_audit(kunit_ipa(a.vhat, 2, 1.0).a, kunit_ipa(b.vhat, 2, 1.0).a, lam, 1.0)
        else:
            record = kunit_tv_audit(kunit_pa(a.vhat, 2, 1.0).a, kunit_pa(b.vhat, 2, 1.0).a, lam, 1.0)
        assert record.satisfied


@pytest.mark.campaign
@pytest.mark.parametrize("family", [Family.IPA, Family.PA])
def test_stability_campaign(family):
    config = MechanismConfig(family, 1.0)
    definitions = ["weak", "ordered", "hetero"] + (["tv"] if family is Family.PA else [])
    for seed in range(2000):
        a, b = pair_generator(seed, 8, 4, 8.0)
        assert audit_pair(a, b, config, definitions).satisfied, seed
