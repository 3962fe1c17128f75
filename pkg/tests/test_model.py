import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gamband.model import (
    ActionSet,
    DegenerateProxyWarning,
    InstanceError,
    MisspecCertificate,
    NotGam,
    NotWeakGam,
    RewardInstance,
    certify_gam,
    certify_uniform,
    certify_unified,
    certify_weak_gam,
    check_assumptions,
    gap_profile,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    make_gam_instance,
    make_unified_instance,
    make_weak_gam_instance,
    random_actions,
    random_direction,
    save_instance,
)


def brute_rho(inst, tol=1e-9):
    """Ratio oracle written out action by action."""
    f_star = max(inst.f0)
    worst = 0.0
    for x, f in zip(inst.X, inst.f0):
        gap = f_star - f
        dev = abs(float(np.dot(inst.w_star, x)) - f)
        if gap <= tol:
            assert dev <= tol
        else:
            worst = max(worst, dev / gap)
    return worst


def line_actions():
    # the points 0, 1, 2 on a line, with a constant feature carrying the intercept
    return ActionSet(np.array([[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]]), math.sqrt(5.0))


def line_instance():
    """Proxy 0.75 x + 0.5 on {0, 1, 2}; f0 sits at deviation/gap = 0.7 at x = 0, 1."""
    w = np.array([0.75, 0.5])
    fw = line_actions().actions @ w
    f_star = fw[2]
    f0 = (fw + 0.7 * f_star) / 1.7
    f0[2] = f_star
    return RewardInstance(line_actions(), f0, w, 1.0, 0.1, range_bound=2.0)


def saturated_line_instance():
    # proxy 0.3 x + 1.4; f0 = (0, 1, 2) so the gap-2 action deviates by 0.7 * 2
    return RewardInstance(line_actions(), np.array([0.0, 1.0, 2.0]), np.array([0.3, 1.4]), 1.5, 0.1, 2.0)


def random_gam(d, k, rho, seed, **kw):
    return make_gam_instance(random_actions(d, k, seed), random_direction(d, seed), rho, seed, **kw)


# -- types -------------------------------------------------------------------


def test_action_set_rejects_duplicates_and_norm_violations():
    with pytest.raises(InstanceError, match="duplicates"):
        ActionSet(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]), 1.0)
    with pytest.raises(InstanceError, match="norm"):
        ActionSet(np.array([[2.0, 0.0]]), 1.0)
    with pytest.raises(InstanceError):
        ActionSet(np.zeros((0, 2)), 1.0)
    A = ActionSet(np.eye(3), 1.0)
    assert (A.k, A.dim) == (3, 3)
    with pytest.raises(ValueError):
        A.actions[0, 0] = 5.0


def test_instance_invariants():
    A = ActionSet(np.eye(2), 1.0)
    with pytest.raises(InstanceError, match="C_w"):
        RewardInstance(A, np.zeros(2), np.array([2.0, 0.0]), 1.0, 0.1)
    with pytest.raises(InstanceError, match="range"):
        RewardInstance(A, np.array([0.0, 1.5]), np.zeros(2), 1.0, 0.1, range_bound=1.0)
    with pytest.raises(InstanceError, match="shape"):
        RewardInstance(A, np.zeros(3), np.zeros(2), 1.0, 0.1)


def test_certificate_field_rules():
    with pytest.raises(ValueError):
        MisspecCertificate("gam")
    with pytest.raises(ValueError):
        MisspecCertificate("gam", rho=0.1, eps=0.1)
    with pytest.raises(ValueError):
        MisspecCertificate("unified", rho=0.1)
    with pytest.raises(ValueError):
        MisspecCertificate("weak_gam", rho=0.1)
    with pytest.raises(ValueError):
        MisspecCertificate("gam", rho=1.0)
    c = MisspecCertificate("unified", rho=0.05, eps=0.02)
    assert MisspecCertificate.from_dict(c.to_dict()) == c


# -- certify_gam ---------------------------------------------------------------


def test_realizable_has_rho_zero():
    A = random_actions(3, 10, 0)
    w = random_direction(3, 0) * 0.4
    inst = RewardInstance(A, A.actions @ w, w, 0.4, 0.1)
    assert certify_gam(inst).rho == 0.0
    assert certify_uniform(inst).eps == 0.0


def test_line_instance_is_exactly_0p7():
    assert certify_gam(line_instance()).rho == pytest.approx(0.7, abs=1e-12)


def test_disagreement_at_maximizer_raises():
    A = ActionSet(np.eye(2), 1.0)
    inst = RewardInstance(A, np.array([1.0, 0.0]), np.array([0.9, 0.0]), 1.0, 0.1)
    with pytest.raises(NotGam) as err:
        certify_gam(inst)
    assert err.value.action_index == 0
    assert err.value.violation == pytest.approx(0.1)


def test_ratio_at_least_one_raises():
    A = ActionSet(np.eye(2), 1.0)
    # proxy overestimates the suboptimal action past the maximum
    inst = RewardInstance(A, np.array([1.0, 0.0]), np.array([1.0, 1.0]), 2.0, 0.1)
    with pytest.raises(NotGam) as err:
        certify_gam(inst)
    assert err.value.action_index == 1


@pytest.mark.parametrize("seed", range(5))
def test_constructed_rho_certifies_below_target(seed):
    inst = random_gam(3, 40, 0.4, seed)
    cert = certify_gam(inst)
    assert cert.rho <= 0.4 + 1e-9
    assert cert.rho == pytest.approx(brute_rho(inst), abs=1e-12)


# -- certify_uniform -----------------------------------------------------------


def test_uniform_single_deviation():
    A = ActionSet(np.eye(3), 1.0)
    w = np.array([0.5, 0.2, 0.1])
    f0 = A.actions @ w
    f0[2] -= 0.3
    inst = RewardInstance(A, f0, w, 1.0, 0.1)
    assert certify_uniform(inst).eps == pytest.approx(0.3, abs=1e-15)


def test_uniform_on_saturated_gam_instance():
    inst = saturated_line_instance()
    assert certify_gam(inst).rho == pytest.approx(0.7, abs=1e-12)
    gaps = inst.f_star - inst.f0
    assert gaps.max() == 2.0
    assert certify_uniform(inst).eps == pytest.approx(0.7 * 2.0, abs=1e-12)


# -- certify_weak_gam ----------------------------------------------------------


def test_weak_equals_gam_on_gam_instance():
    inst = line_instance()
    weak = certify_weak_gam(inst)
    assert weak.rho == pytest.approx(certify_gam(inst).rho, abs=1e-12)
    assert weak.c_star == pytest.approx(0.0, abs=1e-12)


def test_weak_is_shift_invariant():
    inst = line_instance()
    shifted = inst.replace(w_star=inst.w_star - np.array([0.0, 5.0]), param_bound=6.0)
    with pytest.raises(NotGam):
        certify_gam(shifted)
    weak = certify_weak_gam(shifted)
    assert weak.rho == pytest.approx(0.7, abs=1e-12)
    assert weak.c_star == pytest.approx(5.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_weak_construction_hits_target(seed):
    A = random_actions(3, 30, seed)
    inst = make_weak_gam_instance(A, random_direction(3, seed), 0.35, 0.25, seed, range_bound=2.0)
    weak = certify_weak_gam(inst)
    assert weak.rho == pytest.approx(0.35, abs=1e-9)
    assert weak.c_star == pytest.approx(0.25, abs=1e-12)


def test_weak_fails_when_proxy_maximizer_is_suboptimal():
    A = ActionSet(np.eye(2), 1.0)
    inst = RewardInstance(A, np.array([1.0, 0.0]), np.array([0.0, 1.0]), 1.0, 0.1)
    with pytest.raises(NotWeakGam):
        certify_weak_gam(inst)


# -- certify_unified -----------------------------------------------------------


def test_unified_reductions():
    inst = random_gam(3, 30, 0.5, 7, saturate=True)
    rho = certify_gam(inst).rho
    assert certify_unified(inst, 0.0).eps == certify_uniform(inst).eps
    assert certify_unified(inst, rho).eps == pytest.approx(0.0, abs=1e-12)
    half = certify_unified(inst, rho / 2)
    gaps = inst.f_star - inst.f0
    expected = max(0.0, max(abs(p - f) - rho / 2 * g for p, f, g in zip(inst.proxy, inst.f0, gaps)))
    assert half.eps == pytest.approx(expected, abs=1e-15)
    assert half.eps > 0


def test_unified_rejects_bad_rho():
    with pytest.raises(ValueError):
        certify_unified(line_instance(), 1.0)


@pytest.mark.parametrize("seed", range(4))
def test_unified_construction(seed):
    A = random_actions(3, 50, seed)
    inst = make_unified_instance(A, random_direction(3, seed), 0.05, 0.02, seed)
    cert = certify_unified(inst, 0.05)
    assert 0 < cert.eps <= 0.02 + 1e-12
    # maximizer untouched
    assert set(np.flatnonzero(inst.f0 == inst.f_star)) == set(np.flatnonzero(inst.proxy == inst.proxy.max()))


# -- make_gam_instance -----------------------------------------------------------


def test_target_zero_is_realizable():
    A = random_actions(2, 10, 3)
    w = random_direction(2, 3) * 0.3
    inst = make_gam_instance(A, w, 0.0, 3)
    np.testing.assert_array_equal(inst.f0, A.actions @ w)


def test_line_family():
    inst = make_gam_instance(line_actions(), np.array([0.75, 0.5]), 0.7, 0, range_bound=3.0)
    assert certify_gam(inst).rho <= 0.7 + 1e-9
    assert list(inst.optimal_indices()) == [2]
    # f0 may be rescaled into the range bound; the maximizer still agrees with the proxy
    assert inst.f_star == pytest.approx(inst.proxy.max(), abs=1e-12)


def test_rescaling_preserves_ratio():
    A = random_actions(3, 20, 11)
    w = random_direction(3, 11) * 5.0
    inst = make_gam_instance(A, w, 0.6, 11, saturate=True)
    assert inst.f0.max() - inst.f0.min() <= 1.0
    assert certify_gam(inst).rho == pytest.approx(0.6, abs=1e-9)
    assert np.linalg.norm(inst.w_star) < 5.0


def test_degenerate_proxy_is_flagged():
    A = ActionSet(np.array([[0.0, 1.0], [0.0, -1.0]]), 1.0)
    with pytest.warns(DegenerateProxyWarning):
        inst = make_gam_instance(A, np.array([1.0, 0.0]), 0.5, 0)
    assert certify_gam(inst).rho == 0.0


def test_round_trip_500_random_draws():
    for seed in range(500):
        inst = random_gam(3, 50, 0.4, seed)
        assert certify_gam(inst).rho <= 0.4 + 1e-9


# -- gap profile -----------------------------------------------------------------


def test_gap_profile_examples():
    A = ActionSet(np.eye(3), 1.0)
    const = RewardInstance(A, np.full(3, 0.2), np.full(3, 0.2), 1.0, 0.1)
    p = gap_profile(const)
    assert np.all(p.gaps == 0) and p.min_positive_gap is None
    inst = RewardInstance(A, np.array([1.0, 0.7, 0.4]), np.array([1.0, 0.7, 0.4]), 2.0, 0.1)
    p = gap_profile(inst)
    np.testing.assert_allclose(p.gaps, [0.0, 0.3, 0.6], atol=1e-15)
    assert p.min_positive_gap == pytest.approx(0.3)
    g = random_gam(3, 20, 0.3, 1)
    np.testing.assert_array_equal(gap_profile(g).gaps, np.array([max(g.f0) - f for f in g.f0]))


# -- assumptions -----------------------------------------------------------------


def test_assumption_bounds():
    A = ActionSet(np.array([[1.0, 0.0], [0.0, 1.0]]), 1.0)
    w = np.array([1.0, 0.0])
    inst = RewardInstance(A, A.actions @ w, w, 1.0, 0.1)
    a3 = check_assumptions(inst, 10_000, "A3")
    assert a3.bound == pytest.approx(0.017253370732198233, rel=1e-12)
    assert a3.holds and a3.rho == 0.0
    assert check_assumptions(inst, 10_000, "A4").holds
    A4 = ActionSet(np.eye(4), 1.0)
    inst4 = RewardInstance(A4, A4.actions @ np.full(4, 0.25), np.full(4, 0.25), 1.0, 0.1)
    assert check_assumptions(inst4, 1, "A4").bound == 0.03125
    assert not check_assumptions(inst4, 1, "A4", rho=0.04).holds
    assert check_assumptions(inst4, 1, "A4", rho=0.03125).holds


# -- properties --------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    d=st.integers(1, 5),
    k=st.integers(2, 30),
    rho=st.floats(0.0, 0.95),
    seed=st.integers(0, 2**31 - 1),
)
def test_proposition_properties(d, k, rho, seed):
    inst = random_gam(d, k, rho, seed)
    cert = certify_gam(inst)
    assert cert.rho <= rho + 1e-9
    proxy = inst.proxy
    opt_f0 = set(np.flatnonzero(inst.f0 >= inst.f_star - 1e-9))
    opt_w = set(np.flatnonzero(proxy >= proxy.max() - 1e-9))
    assert opt_f0 == opt_w
    assert proxy.max() == pytest.approx(inst.f_star, abs=1e-9)
    assert np.all(np.abs(proxy - inst.f0) <= cert.rho * (inst.f_star - inst.f0) + 1e-9)
    assert certify_unified(inst, 0.0).eps == certify_uniform(inst).eps


@settings(max_examples=40, deadline=None)
@given(
    rho=st.floats(0.0, 0.9),
    shift=st.floats(-3.0, 3.0),
    seed=st.integers(0, 2**31 - 1),
)
def test_weak_band_property(rho, shift, seed):
    A = random_actions(3, 15, seed)
    inst = make_weak_gam_instance(A, random_direction(3, seed), rho, shift, seed, range_bound=2.0)
    cert = certify_weak_gam(inst)
    g = inst.proxy.max() - inst.proxy
    g0 = inst.f_star - inst.f0
    assert np.all((1 - cert.rho) * g0 <= g + 1e-9)
    assert np.all(g <= (1 + cert.rho) * g0 + 1e-9)


# -- file format ---------------------------------------------------------------------


def test_instance_file_round_trip(tmp_path):
    inst = random_gam(3, 25, 0.3, 5)
    cert = certify_gam(inst)
    path = tmp_path / "env.json"
    save_instance(path, inst, cert)
    back = load_instance(path)
    np.testing.assert_array_equal(back.X, inst.X)
    np.testing.assert_array_equal(back.f0, inst.f0)
    np.testing.assert_array_equal(back.w_star, inst.w_star)
    assert (back.sigma, back.param_bound, back.range_bound) == (inst.sigma, inst.param_bound, inst.range_bound)
    assert back.meta["seed"] == 5
    assert MisspecCertificate.from_dict(back.meta["certificate"]) == cert
    # writing the loaded instance again gives the same bytes
    path2 = tmp_path / "env2.json"
    save_instance(path2, back)
    assert path2.read_bytes() == path.read_bytes()


def test_instance_dict_fields_and_missing_field():
    doc = instance_to_dict(line_instance())
    assert {"dim", "actions", "f0", "w_star", "sigma", "C_b", "C_w", "range_bound"} <= set(doc)
    del doc["f0"]
    with pytest.raises(InstanceError, match="f0"):
        instance_from_dict(doc)
