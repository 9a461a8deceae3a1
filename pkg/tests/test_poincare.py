"""Normal-bundle cocycles, deterministic frames, and domination probes."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from pesin_lab.dynamics import CAT_MATRIX, builtin, flow
from pesin_lab.errors import DegenerateSplitting, SingularPoint, ValidationError
from pesin_lab.poincare import (
    complement_frame,
    domination_check,
    linear_poincare,
    normal_frame,
    project_normal,
    rotate_frame,
)

CAT_STRETCH = float(np.max(np.linalg.eigvals(CAT_MATRIX)).real)
assert abs(CAT_STRETCH - (3.0 + np.sqrt(5.0)) / 2.0) < 1e-12

unit3 = st.tuples(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)
).filter(lambda v: 0.1 < np.linalg.norm(v))


def test_projection_drops_vertical_component():
    fld = builtin("cat_suspension3")
    x = np.array([0.2, 0.3, 0.4])
    v = np.array([1.5, -0.5, 2.0])
    out = project_normal(fld, x, v)
    assert np.allclose(out, [1.5, -0.5, 0.0], atol=1e-12)


@given(unit3)
def test_projection_is_orthogonal_to_field(v):
    fld = builtin("abc")
    x = np.array([0.9, 2.1, 4.2])
    out = project_normal(fld, x, np.array(v))
    vel = fld.velocity(x)
    assert abs(np.dot(out, vel)) < 1e-9 * np.linalg.norm(vel)
    # projecting twice changes nothing
    assert np.allclose(project_normal(fld, x, out), out, atol=1e-12)


@given(unit3)
def test_complement_frame_orthonormal_oriented(v):
    anchor = np.array(v) / np.linalg.norm(v)
    frame = complement_frame([anchor], 3)
    assert frame.shape == (2, 3)
    gram = frame @ frame.T
    assert np.allclose(gram, np.eye(2), atol=1e-10)
    assert np.max(np.abs(frame @ anchor)) < 1e-10
    basis = np.vstack([anchor, frame])
    assert np.linalg.det(basis) > 0


def test_normal_frame_rejects_singular_point():
    fld = builtin("zero3")
    with pytest.raises(SingularPoint):
        normal_frame(fld, np.array([0.1, 0.2, 0.3]))
    with pytest.raises(SingularPoint):
        linear_poincare(fld, np.array([0.1, 0.2, 0.3]), 1.0)


def test_cat_suspension_window_singular_values():
    # the normal cocycle of the suspended automorphism stretches by the
    # matrix power lambda^t and contracts by its inverse, exactly
    fld = builtin("cat_suspension3")
    x = np.array([0.15, 0.62, 0.33])
    for t in (0.5, 1.0, 2.0):
        pc = linear_poincare(fld, x, t)
        sv = np.linalg.svd(pc.matrix, compute_uv=False)
        assert np.allclose(
            sv, [CAT_STRETCH**t, CAT_STRETCH**-t], rtol=1e-7
        )
        assert abs(abs(np.linalg.det(pc.matrix)) - 1.0) < 1e-8


def test_frame_seed_changes_matrix_not_singular_values():
    fld = builtin("abc")
    x = np.array([1.7, 0.9, 3.3])
    base = linear_poincare(fld, x, 2.0)
    sv0 = np.linalg.svd(base.matrix, compute_uv=False)
    for seed in (1, 2):
        other = linear_poincare(fld, x, 2.0, frame_seed=seed)
        sv = np.linalg.svd(other.matrix, compute_uv=False)
        assert np.allclose(sv, sv0, rtol=1e-9)
        assert not np.allclose(other.matrix, base.matrix, atol=1e-6)


def test_normal_cocycle_composes():
    # chaining two windows in matched frames reproduces the long window;
    # the flow component killed by the projection never contaminates it
    fld = builtin("abc")
    x = np.array([0.8, 1.2, 2.9])
    first = linear_poincare(fld, x, 1.1)
    second = linear_poincare(fld, first.end.base, 1.7)
    whole = linear_poincare(fld, x, 2.8)
    assert np.allclose(second.matrix @ first.matrix, whole.matrix, atol=1e-6)


def test_rotate_frame_stays_orthonormal():
    fld = builtin("abc")
    frame = normal_frame(fld, np.array([1.0, 2.0, 3.0]))
    rot = rotate_frame(frame, np.random.default_rng(5))
    assert np.allclose(rot.vectors @ rot.vectors.T, np.eye(2), atol=1e-10)
    vel = fld.velocity(frame.base)
    assert np.max(np.abs(rot.vectors @ vel)) < 1e-9 * np.linalg.norm(vel)


def test_domination_uniform_hyperbolic_window_one():
    report = domination_check(
        builtin("cat_suspension3"), np.array([0.15, 0.62, 0.33]), 1.0, 10.0
    )
    assert report.passed
    assert report.orbit_samples == 10
    assert abs(report.max_product - CAT_STRETCH**-2) < 1e-6


def test_domination_fails_below_critical_window():
    # contraction over a 0.1 window is lambda^(-0.2) ~ 0.825 > 1/2
    report = domination_check(
        builtin("cat_suspension3"), np.array([0.15, 0.62, 0.33]), 0.1, 2.0
    )
    assert not report.passed
    assert abs(report.max_product - CAT_STRETCH**-0.2) < 1e-6


def test_domination_product_decreases_with_window():
    fld = builtin("cat_suspension3")
    x = np.array([0.4, 0.9, 0.05])
    products = [
        domination_check(fld, x, ell, 4.0).max_product for ell in (0.5, 1.0, 2.0)
    ]
    assert products[0] > products[1] > products[2]


def test_domination_degenerate_on_drift():
    with pytest.raises(DegenerateSplitting):
        domination_check(builtin("constant3"), np.array([0.3, 0.3, 0.3]), 1.0, 5.0)


def test_domination_validates_window():
    fld = builtin("cat_suspension3")
    with pytest.raises(ValidationError):
        domination_check(fld, np.array([0.1, 0.1, 0.1]), -1.0, 5.0)
    with pytest.raises(ValidationError):
        domination_check(fld, np.array([0.1, 0.1, 0.1]), 2.0, 1.0)


def test_domination_splitting_directions_align():
    # on the suspended automorphism the weak/strong directions returned per
    # sample are the eigendirections of the base matrix, lifted horizontally
    report = domination_check(
        builtin("cat_suspension3"), np.array([0.15, 0.62, 0.33]), 1.0, 4.0
    )
    w, v = np.linalg.eigh(CAT_MATRIX)
    weak = np.append(v[:, 0], 0.0)  # eigenvalue < 1
    strong = np.append(v[:, 1], 0.0)
    for weak_dir, strong_dir in report.splitting:
        assert abs(abs(np.dot(weak_dir, weak)) - 1.0) < 1e-6
        assert abs(abs(np.dot(strong_dir, strong)) - 1.0) < 1e-6
