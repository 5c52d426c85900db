import itertools
import math

import numpy as np
import pytest

from gpwpc.errors import BudgetExceededError, InvalidParameterError, InvalidWeightError
from gpwpc.multiindex import (IndexSet, MultiIndex, SignedMultiIndex, WeightConfig, beta, box_index_set,
                              build_Lambda, choose_xi_for_budget, default_r, grid_cardinality, log_sigma,
                              order_indices, p_weight, sigma, signed_companions)
from gpwpc.pde_model import FieldSpec


def rho_config(rho=(1.5, 2.0, 3.0), p=0.5, **kwargs):
    r = kwargs.pop('r', default_r(p))
    worst = max(sum(v ** (-l) for l in range(1, 2 * r + 1)) for v in rho)
    return WeightConfig(p=p, r=r, rho=rho, c_dim=min(1.0, 1.0 / worst), **kwargs)


def test_multi_index_basics():
    s = MultiIndex({3: 2, 1: 1, 2: 0})
    assert s.entries == ((1, 1), (3, 2))
    assert s.support == (1, 3)
    assert (s.l1, s.l0, s.linf) == (3, 2, 2)
    assert s[2] == 0 and s[3] == 2
    assert s == MultiIndex([(1, 1), (3, 2)])
    assert hash(s) == hash(MultiIndex({1: 1, 3: 2}))
    assert MultiIndex.from_json(s.to_json()) == s
    assert MultiIndex().is_zero()


def test_multi_index_validation():
    with pytest.raises(InvalidParameterError):
        MultiIndex({0: 1})
    with pytest.raises(InvalidParameterError):
        MultiIndex({1: -1})


def test_half_order_and_predecessors():
    s = MultiIndex({1: 2, 2: 1})
    assert MultiIndex({1: 1}).is_leq(s)
    assert not MultiIndex({3: 1}).is_leq(s)
    assert set(s.predecessors()) == {MultiIndex({1: 1, 2: 1}), MultiIndex({1: 2})}


def test_signed_companions_order():
    s = MultiIndex({1: 1, 4: 2})
    companions = signed_companions(s)
    assert [c.signs for c in companions] == [((1, -1), (4, -1)), ((1, -1), (4, 1)),
                                            ((1, 1), (4, -1)), ((1, 1), (4, 1))]
    assert all(c.nu() == 2 for c in companions)
    assert signed_companions(MultiIndex()) == [SignedMultiIndex(MultiIndex(), ())]
    assert SignedMultiIndex.from_json(companions[1].to_json()) == companions[1]


def test_signed_multi_index_validation():
    with pytest.raises(InvalidParameterError):
        SignedMultiIndex(MultiIndex({1: 1}), ((2, 1),))
    with pytest.raises(InvalidParameterError):
        SignedMultiIndex(MultiIndex({1: 1}), ((1, 0),))


def test_weight_config_validation():
    with pytest.raises(InvalidParameterError):
        rho_config(p=2.0)
    with pytest.raises(InvalidWeightError):
        rho_config(rho=(3.0, 2.0, 4.0))
    with pytest.raises(InvalidWeightError):
        WeightConfig(p=0.5, r=3, rho=(1.5, 2.0), c_dim=1.0)
    assert rho_config(p=0.5).q == pytest.approx(2.0 / 3.0)


def test_default_r():
    assert default_r(0.5) == 3
    assert default_r(0.4) == 3
    assert default_r(1.0) == 2


def test_weights_from_field_keep_sigma_monotone():
    cfg = WeightConfig.from_field(FieldSpec(dims=4, theta0=0.6, tau=3.0), p=0.5)
    assert sum(rho * b for rho, b in zip(cfg.rho, cfg.b)) == pytest.approx(1.5)
    assert sigma(MultiIndex(), cfg) == pytest.approx(1.0)
    for s in box_index_set(MultiIndex({1: 3, 2: 2, 3: 1})):
        for pred in s.predecessors():
            assert log_sigma(pred, cfg) <= log_sigma(s, cfg) + 1e-12


def test_b_family_weights_from_field():
    spec = FieldSpec(dims=3, theta0=0.6, tau=3.0)
    cfg = WeightConfig.from_field(spec, p=0.5, family='b', b_scale=0.5)
    assert cfg.family == 'b' and cfg.r == 3
    np.testing.assert_allclose(cfg.b, spec.b_norms())
    for j, b in enumerate(cfg.b, start=1):
        assert cfg.dim_sum(j) == pytest.approx(sum((math.e * 0.5 * b) ** l for l in range(1, 7)))
    assert cfg.c_dim * cfg.dim_sum(1) == pytest.approx(1.0)

    s = MultiIndex({1: 2, 3: 1})
    expected = (cfg.c_dim * 2 ** -3 * cfg.dim_sum(1)) * (cfg.c_dim * cfg.dim_sum(3))
    assert sigma(s, cfg) == pytest.approx(expected ** (0.5 / 2 - 1))
    # smaller b_j means a smaller beta, so later dimensions cost more
    assert sigma(MultiIndex({1: 1}), cfg) < sigma(MultiIndex({2: 1}), cfg) < sigma(MultiIndex({3: 1}), cfg)
    for s in box_index_set(MultiIndex({1: 3, 2: 2, 3: 2})):
        for pred in s.predecessors():
            assert log_sigma(pred, cfg) <= log_sigma(s, cfg) + 1e-12


def test_b_family_validation_and_frozen_dims():
    cfg = WeightConfig.from_field(FieldSpec(dims=2, theta0=0.4, frozen_dims=frozenset({2})), family='b')
    assert cfg.b[1] == 0.0
    assert math.isinf(log_sigma(MultiIndex({2: 1}), cfg))
    with pytest.raises(InvalidParameterError):
        WeightConfig(family='b', b=())
    with pytest.raises(InvalidWeightError):
        WeightConfig(family='b', b=(0.1, -0.2))
    with pytest.raises(InvalidWeightError):
        WeightConfig(family='b', b=(1.0,), c_dim=1.0)


def test_frozen_dimensions_get_infinite_sigma():
    cfg = WeightConfig.from_field(FieldSpec(dims=3, theta0=0.5, tau=2.0, frozen_dims=frozenset({2})), p=0.5)
    assert math.isinf(cfg.rho[1])
    assert math.isinf(log_sigma(MultiIndex({2: 1}), cfg))
    assert math.isfinite(log_sigma(MultiIndex({3: 1}), cfg))


def test_beta_product_form():
    cfg = rho_config()
    s = MultiIndex({1: 2, 3: 1})
    expected = (cfg.c_dim * 2 ** (-cfg.r) * cfg.dim_sum(1)) * (cfg.c_dim * cfg.dim_sum(3))
    assert beta(s, cfg) == pytest.approx(expected)
    assert sigma(s, cfg) == pytest.approx(expected ** (cfg.p / 2 - 1))


def test_p_weight():
    s = MultiIndex({1: 2, 2: 1})
    assert p_weight(s, 2.0, 1.0) == pytest.approx(9.0 * 4.0)
    assert p_weight(s, 0.0, 5.0) == 1.0
    with pytest.raises(InvalidParameterError):
        p_weight(s, -1.0, 1.0)


def test_grid_cardinality():
    members = [MultiIndex(), MultiIndex({1: 1}), MultiIndex({1: 2}), MultiIndex({1: 1, 2: 1})]
    assert grid_cardinality(members) == 1 + 3 + 5 + 9


def test_build_Lambda_matches_brute_force():
    rng = np.random.default_rng(12)
    for _ in range(20):
        dims = int(rng.integers(1, 4))
        p = float(rng.uniform(0.3, 0.8))
        rho = tuple(sorted(rng.uniform(1.2, 4.0, size=dims)))
        cfg = rho_config(rho=rho, p=p)
        log_threshold = float(rng.uniform(0.2, 2.5))
        xi = math.exp(cfg.q * log_threshold)
        index_set = build_Lambda(xi, cfg, dims)

        box = [MultiIndex(zip(range(1, dims + 1), levels))
               for levels in itertools.product(range(7), repeat=dims)]
        brute = {s for s in box if log_sigma(s, cfg) <= log_threshold}
        inside = {s for s in index_set if s.linf <= 6}
        assert inside == brute
        assert all(log_sigma(s, cfg) <= log_threshold + 1e-12 for s in index_set)
        assert index_set.is_downward_closed()


def test_build_Lambda_validation():
    cfg = rho_config()
    with pytest.raises(InvalidParameterError):
        build_Lambda(1.0, cfg, 3)
    with pytest.raises(InvalidParameterError):
        build_Lambda(10.0, cfg, 4)
    with pytest.raises(BudgetExceededError):
        build_Lambda(1e6, cfg, 3, member_cap=10)


def test_order_indices_starts_at_zero():
    cfg = rho_config()
    ordered = order_indices(cfg, 8, 3)
    assert len(ordered) == 8
    assert ordered[0] == MultiIndex()
    keys = [log_sigma(s, cfg) for s in ordered]
    assert keys == sorted(keys)


def test_choose_xi_for_budget_is_nested_and_within_budget():
    cfg = rho_config()
    previous = None
    for n in [1, 9, 41, 137]:
        xi, index_set = choose_xi_for_budget(n, cfg, 'points', 3)
        assert grid_cardinality(index_set) <= n
        assert index_set.is_downward_closed()
        assert xi == pytest.approx(math.exp(cfg.q * max(log_sigma(s, cfg) for s in index_set)))
        if previous is not None:
            assert set(previous) <= set(index_set)
        previous = index_set
    _, single = choose_xi_for_budget(1, cfg, 'points', 3)
    assert list(single) == [MultiIndex()]


def test_choose_xi_for_budget_terms_mode():
    cfg = rho_config()
    _, index_set = choose_xi_for_budget(10, cfg, 'terms', 2)
    assert len(index_set) == 10
    assert all(s.support == () or max(s.support) <= 2 for s in index_set)
    with pytest.raises(InvalidParameterError):
        choose_xi_for_budget(10, cfg, 'volume', 2)


def test_box_index_set():
    index_set = box_index_set(MultiIndex({1: 2, 3: 1}))
    assert len(index_set) == 6
    assert index_set.is_downward_closed()
    assert index_set.max_levels() == {1: 2, 3: 1}
    assert IndexSet.from_json(index_set.to_json()).members == index_set.members
