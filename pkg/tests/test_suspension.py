"""Suspension semiflows: evolution, lifted measures, entropy transfer."""
import numpy as np
import pytest

from pesin_lab.dynamics import CAT_MATRIX, builtin, flow
from pesin_lab.errors import (
    NonPositiveCeiling,
    NotInvertible,
    UnknownSystem,
    ValidationError,
)
from pesin_lab.suspension import (
    BaseSystem,
    SuspensionPoint,
    abramov_check,
    base_system,
    constant_ceiling,
    expansivity_probe,
    lift_measure_sample,
    parse_ceiling,
    suspend,
)

LOG_CAT = float(np.log(np.max(np.linalg.eigvals(CAT_MATRIX)).real))


def test_parse_ceiling_forms():
    c = parse_ceiling("const:2.5")
    assert c.alpha == 2.5 and c.h_max == 2.5
    assert np.allclose(c.h(np.zeros((4, 2))), 2.5)
    cos = parse_ceiling("cosine:1.0,0.5")
    assert cos.alpha == 0.5 and cos.h_max == 1.5
    xs = np.array([[0.0], [0.5]])
    assert np.allclose(cos.h(xs), [1.5, 0.5])
    for bad in ("const:abc", "cosine:1.0", "cosine:0.5,0.5", "step:1"):
        with pytest.raises(ValidationError):
            parse_ceiling(bad)


def test_suspend_rejects_nonpositive_ceiling():
    with pytest.raises(NonPositiveCeiling):
        suspend(base_system("rotation"), constant_ceiling(0.0))
    with pytest.raises(NonPositiveCeiling):
        suspend(base_system("rotation"), constant_ceiling(-1.0))


def test_suspend_spot_checks_declared_bounds():
    from pesin_lab.suspension import Ceiling

    lying_low = Ceiling(h=lambda pts: np.full(len(pts), 1.0), alpha=2.0, h_max=2.0, label="lie")
    with pytest.raises(NonPositiveCeiling):
        suspend(base_system("rotation"), lying_low)
    lying_high = Ceiling(h=lambda pts: np.full(len(pts), 3.0), alpha=1.0, h_max=2.0, label="lie")
    with pytest.raises(ValidationError):
        suspend(base_system("rotation"), lying_high)


def test_evolve_below_ceiling_only_drifts():
    sys_ = suspend(base_system("rotation"), constant_ceiling(1.0))
    start = SuspensionPoint(np.array([0.3]), 0.2)
    out = sys_.evolve(start, 0.5)
    assert np.allclose(out.base_point, [0.3])
    assert abs(out.height - 0.7) < 1e-12


def test_evolve_crosses_ceiling_applies_base():
    alpha = (np.sqrt(5.0) - 1.0) / 2.0
    sys_ = suspend(base_system("rotation"), constant_ceiling(1.0))
    out = sys_.evolve(SuspensionPoint(np.array([0.3]), 0.5), 1.0)
    assert np.allclose(out.base_point, [np.mod(0.3 + alpha, 1.0)], atol=1e-12)
    assert abs(out.height - 0.5) < 1e-12


def test_evolve_multiple_crossings():
    sys_ = suspend(base_system("cat"), constant_ceiling(2.0))
    x = np.array([0.21, 0.43])
    out = sys_.evolve(SuspensionPoint(x, 0.5), 5.0)
    expected = np.mod(CAT_MATRIX @ np.mod(CAT_MATRIX @ x, 1.0), 1.0)
    assert np.allclose(out.base_point, expected, atol=1e-12)
    assert abs(out.height - 1.5) < 1e-12


def test_evolve_semigroup_property():
    sys_ = suspend(base_system("cat"), parse_ceiling("cosine:1.2,0.4"))
    p = SuspensionPoint(np.array([0.17, 0.66]), 0.3)
    stepped = sys_.evolve(sys_.evolve(p, 1.9), 2.3)
    direct = sys_.evolve(p, 4.2)
    assert np.allclose(stepped.base_point, direct.base_point, atol=1e-9)
    assert abs(stepped.height - direct.height) < 1e-9


def test_evolve_backward_inverts():
    sys_ = suspend(base_system("cat"), parse_ceiling("cosine:1.2,0.4"))
    p = SuspensionPoint(np.array([0.17, 0.66]), 0.3)
    fwd = sys_.evolve(p, 3.7)
    back = sys_.evolve(fwd, -3.7)
    assert np.allclose(back.base_point, p.base_point, atol=1e-9)
    assert abs(back.height - p.height) < 1e-9


def test_backward_needs_invertible_base():
    one_way = BaseSystem(
        name="doubling",
        dim=1,
        map=lambda pts: np.mod(2.0 * pts, 1.0),
        sampler=lambda rng, n: rng.uniform(0.0, 1.0, size=(n, 1)),
    )
    sys_ = suspend(one_way, constant_ceiling(1.0))
    with pytest.raises(NotInvertible):
        sys_.evolve(SuspensionPoint(np.array([0.3]), 0.5), -1.0)
    with pytest.raises(NotInvertible):
        expansivity_probe(one_way, 1e-3, 10, 5, seed=0)


def test_lifted_measure_density():
    # under h(x) = 1 + 0.5 cos(2 pi x) the invariant density of the height
    # marginal gives mean height E[h^2] / (2 E[h]) = 1.125 / 2
    sys_ = suspend(base_system("rotation"), parse_ceiling("cosine:1.0,0.5"))
    pts = lift_measure_sample(sys_, seed=7, count=20000)
    heights = np.array([p.height for p in pts])
    xs = np.array([p.base_point[0] for p in pts])
    assert np.all(heights >= 0.0)
    assert np.all(heights <= 1.0 + 0.5 * np.cos(2 * np.pi * xs) + 1e-12)
    assert abs(heights.mean() - 0.5625) < 0.01
    # base marginal is biased toward the tall part of the ceiling
    tall = np.mean((xs < 0.25) | (xs > 0.75))
    assert tall > 0.55


def test_mean_ceiling_estimate_constant_exact():
    sys_ = suspend(base_system("cat"), constant_ceiling(2.0))
    assert abs(sys_.mean_ceiling - 2.0) < 1e-12
    assert sys_.ceiling.integral_stderr == 0.0


def test_abramov_transfer_constant_ceilings():
    cat2 = suspend(base_system("cat"), constant_ceiling(2.0))
    assert abs(abramov_check(cat2) - LOG_CAT / 2.0) < 1e-12
    cat1 = suspend(base_system("cat"), constant_ceiling(1.0))
    assert abs(abramov_check(cat1) - LOG_CAT) < 1e-12
    rot = suspend(base_system("rotation"), constant_ceiling(3.0))
    assert abramov_check(rot) == 0.0


def test_abramov_transfer_variable_ceiling():
    sys_ = suspend(base_system("cat"), parse_ceiling("cosine:1.0,0.5"), seed=1)
    est = abramov_check(sys_)
    # mean ceiling is 1.0 up to Monte Carlo error
    slack = 5.0 * sys_.ceiling.integral_stderr
    assert abs(est - LOG_CAT) < LOG_CAT * slack / (1.0 - slack)


def test_abramov_needs_base_entropy():
    nameless = BaseSystem(
        name="mystery",
        dim=1,
        map=lambda pts: np.mod(pts + 0.37, 1.0),
        inverse=lambda pts: np.mod(pts - 0.37, 1.0),
        sampler=lambda rng, n: rng.uniform(0.0, 1.0, size=(n, 1)),
    )
    sys_ = suspend(nameless, constant_ceiling(2.0))
    with pytest.raises(ValidationError):
        abramov_check(sys_)
    assert abs(abramov_check(sys_, base_entropy=0.7) - 0.35) < 1e-12


def test_expansivity_separates_hyperbolic_base():
    rep = expansivity_probe(base_system("cat"), 1e-3, 200, 40, seed=3)
    assert rep.fraction_separated == 1.0


def test_expansivity_keeps_isometries_together():
    rot = expansivity_probe(base_system("rotation"), 1e-3, 200, 40, seed=3)
    assert rot.fraction_separated == 0.0
    ident = expansivity_probe(base_system("identity"), 1e-3, 200, 40, seed=3)
    assert ident.fraction_separated == 0.0


def test_unknown_base_name():
    with pytest.raises(UnknownSystem):
        base_system("horseshoe")


def test_flow_field_matches_discrete_suspension():
    # the builtin 3d suspension field moves points exactly like the discrete
    # suspension of the same automorphism under the unit ceiling
    fld = builtin("cat_suspension3")
    sys_ = suspend(base_system("cat"), constant_ceiling(1.0))
    start = np.array([0.21, 0.43, 0.2])
    t = 3.1
    via_flow = flow(fld, start, t)
    via_map = sys_.evolve(SuspensionPoint(start[:2], start[2]), t)
    assert np.allclose(via_flow.position[:2], via_map.base_point, atol=1e-9)
    assert abs(via_flow.position[2] - via_map.height) < 1e-9
