"""Cocycles on the normal bundle and the finite-time domination test.

Along a regular orbit the tangent map is compressed onto the orthogonal
complement of the flow direction: project DX^t onto the normal space at the
endpoint and express it in orthonormal frames at both ends.  The resulting
matrices form a cocycle (the component discarded by the projection lies along
the flow direction, which DX^t preserves), and their singular values do not
depend on the in-plane orientation of the frames.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    DEFAULT_INTEGRATOR,
    SINGULAR_SPEED,
    IntegratorOptions,
    VectorField,
    tangent_flow,
)
from .errors import DegenerateSplitting, SingularPoint, ValidationError

# Singular values closer than this admit no preferred splitting direction.
DEGENERATE_GAP = 1e-10


@dataclass(frozen=True, eq=False)
class NormalFrame:
    """Orthonormal vectors spanning the normal space at a point.

    vectors has shape (k, dim) with rows pairwise orthonormal and orthogonal
    to the flow direction (and to any further anchors used to build it).
    """

    base: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True, eq=False)
class PoincareCocycle:
    """A normal-bundle cocycle segment expressed in endpoint frames."""

    start: NormalFrame
    end: NormalFrame
    t: float
    matrix: np.ndarray

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)


@dataclass(frozen=True, eq=False)
class DominationReport:
    """Outcome of the finite-time domination sweep along one orbit."""

    ell: float
    orbit_samples: int
    max_product: float
    splitting: tuple
    passed: bool
    method: str = "finite_time_singular_directions"

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "orbit_samples": self.orbit_samples,
            "max_product": self.max_product,
            "passed": self.passed,
            "method": self.method,
            "splitting": [
                {"minus": list(map(float, m)), "plus": list(map(float, p))}
                for m, p in self.splitting
            ],
        }


def project_normal(field: VectorField, x, v) -> np.ndarray:
    """Orthogonal projection of v onto the normal space of the flow at x."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    vel = np.asarray(field.velocity(x), float)
    speed = np.linalg.norm(vel)
    if speed < SINGULAR_SPEED:
        raise SingularPoint(f"field vanishes at {x.tolist()}; no normal space")
    u = vel / speed
    return v - np.dot(v, u) * u


def complement_frame(anchors, dim: int) -> np.ndarray:
    """Gram-Schmidt the canonical basis against the anchors.

    For each anchor the canonical basis vector most parallel to it is skipped
    (ties broken by lowest index), the remaining ones are orthonormalized in
    index order, and the final vector is flipped if needed so that
    [anchors, frame] is positively oriented.  Deterministic by construction.
    """
    anchors = [np.asarray(a, float) for a in anchors]
    skip: list[int] = []
    for a in anchors:
        weights = np.abs(a).astype(float)
        weights[skip] = -1.0
        skip.append(int(np.argmax(weights)))
    frame: list[np.ndarray] = []
    for i in range(dim):
        if i in skip:
            continue
        v = np.zeros(dim)
        v[i] = 1.0
        for _ in range(2):  # twice for numerical stability
            for a in anchors + frame:
                v = v - np.dot(v, a) * a
        nrm = np.linalg.norm(v)
        if nrm < 1e-10:
            raise DegenerateSplitting("canonical basis degenerates against the anchors")
        frame.append(v / nrm)
    if frame and np.linalg.det(np.vstack(anchors + frame)) < 0:
        frame[-1] = -frame[-1]
    return np.array(frame)


def normal_frame(field: VectorField, x) -> NormalFrame:
    """Deterministic orthonormal frame for the normal space at a regular x."""
    x = np.asarray(x, float)
    vel = np.asarray(field.velocity(x), float)
    speed = np.linalg.norm(vel)
    if speed < SINGULAR_SPEED:
        raise SingularPoint(f"field vanishes at {x.tolist()}; no normal frame")
    return NormalFrame(x, complement_frame([vel / speed], field.dim))


def rotate_frame(frame: NormalFrame, rng: np.random.Generator) -> NormalFrame:
    """Re-seed the in-plane orientation with a random orthogonal mix."""
    k = frame.vectors.shape[0]
    q, r = np.linalg.qr(rng.normal(size=(k, k)))
    q = q * np.sign(np.diag(r))
    return NormalFrame(frame.base, q @ frame.vectors)


def linear_poincare(
    field: VectorField,
    x,
    t: float,
    opts: IntegratorOptions = DEFAULT_INTEGRATOR,
    frame_seed: int | None = None,
) -> PoincareCocycle:
    """The normal-bundle cocycle over [0, t] starting at x.

    The matrix is FrameEnd . DX^t . FrameStart^T, i.e. the projected tangent
    map in endpoint frame coordinates.  frame_seed, if given, randomizes the
    in-plane orientation of both frames (singular values are unaffected;
    useful for orientation-independence checks).
    """
    seg = tangent_flow(field, x, t, opts)
    f0 = normal_frame(field, seg.base.position)
    f1 = normal_frame(field, seg.end.position)
    if frame_seed is not None:
        ss = np.random.SeedSequence(frame_seed)
        rng0, rng1 = (np.random.default_rng(s) for s in ss.spawn(2))
        f0 = rotate_frame(f0, rng0)
        f1 = rotate_frame(f1, rng1)
    matrix = f1.vectors @ seg.matrix @ f0.vectors.T
    return PoincareCocycle(f0, f1, float(t), matrix)


def domination_check(
    field: VectorField,
    x,
    ell: float,
    horizon: float,
    opts: IntegratorOptions = DEFAULT_INTEGRATOR,
) -> DominationReport:
    """Probe an ell-dominated splitting along the orbit of x.

    At sample points spaced ell along the orbit, the splitting directions are
    the extreme finite-time singular directions of the window cocycle; the
    product (weak stretch over the window) x (inverse strong stretch) must
    stay at or below 1/2 at every sample for the test to pass.
    """
    if ell <= 0:
        raise ValidationError("ell must be positive")
    n_samples = int(np.floor(horizon / ell + 1e-9))
    if n_samples < 1:
        raise ValidationError("horizon shorter than a single window")
    point = np.asarray(x, float)
    products = []
    splitting = []
    for _ in range(n_samples):
        pc = linear_poincare(field, point, ell, opts)
        u, s, vt = np.linalg.svd(pc.matrix)
        if s[0] - s[-1] < DEGENERATE_GAP:
            raise DegenerateSplitting(
                f"singular values {s.tolist()} coincide within {DEGENERATE_GAP}"
            )
        # ||P^ell restricted to the weak direction|| = smallest singular value;
        # ||P^(-ell) at the image restricted to the strong direction|| = 1/largest.
        products.append(float(s[-1] / s[0]))
        splitting.append(
            (
                pc.start.vectors.T @ vt[-1],
                pc.end.vectors.T @ u[:, 0],
            )
        )
        point = pc.end.base
    max_product = float(max(products))
    return DominationReport(
        ell=float(ell),
        orbit_samples=n_samples,
        max_product=max_product,
        splitting=tuple(splitting),
        passed=bool(max_product <= 0.5),
    )
