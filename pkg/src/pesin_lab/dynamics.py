"""Vector fields on flat domains, flow integration, and tangent cocycles.

Manifolds are flat tori, periodic boxes, or plain boxes; charts are global
coordinates, and periodic identification happens only when a computed point
is read out (integration runs in the covering space, which is exact for
fields that are invariant under the identification).  One extra identification
is supported: a mapping-torus gluing on a single axis, where re-entry through
the top face applies an integer unimodular matrix to the transverse torus
coordinates.  That is enough to carry the suspension of a hyperbolic torus
automorphism as a bona fide three-dimensional flow.

The default integrator is an adaptive embedded Runge-Kutta 5(4) pair
(scipy's RK45) with configurable absolute/relative tolerances that are
recorded alongside every numeric output produced downstream.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    NonFiniteState,
    NumericalError,
    StepUnderflow,
    UnknownSystem,
    ValidationError,
)

# |X(x)| below this marks x as a singularity of the field.
SINGULAR_SPEED = 1e-12

# Height snap for the mapping-torus gluing, so that a trajectory landing on
# the ceiling within integrator round-off is counted as having crossed it.
_GLUE_SNAP = 1e-9

BUILTIN_FIELDS = (
    "zero3",
    "constant3",
    "abc",
    "cat_suspension3",
    "harmonic4",
    "coupled_quartic4",
)


@dataclass(frozen=True)
class MappingTorusGluing:
    """Identification (p, top) ~ (A p mod 1, bottom) along one axis.

    A must be an integer matrix with determinant +-1 so the identification
    preserves volume and inverts exactly.
    """

    axis: int
    matrix: np.ndarray
    inverse: np.ndarray
    transverse: tuple[int, ...]

    @staticmethod
    def make(axis: int, matrix, dim: int) -> "MappingTorusGluing":
        m = np.asarray(matrix, dtype=float)
        if abs(abs(round(float(np.linalg.det(m)))) - 1) > 0:
            raise ValidationError("gluing matrix must be unimodular")
        if not np.allclose(m, np.rint(m)):
            raise ValidationError("gluing matrix must have integer entries")
        inv = np.rint(np.linalg.inv(m))
        transverse = tuple(i for i in range(dim) if i != axis)
        return MappingTorusGluing(axis, m, inv, transverse)


@dataclass(frozen=True)
class Domain:
    """A box with optional periodic axes and an optional mapping-torus axis."""

    lo: np.ndarray
    hi: np.ndarray
    periodic: tuple[bool, ...]
    gluing: MappingTorusGluing | None = None

    @staticmethod
    def torus(dim: int, span: float = 1.0) -> "Domain":
        return Domain(np.zeros(dim), np.full(dim, span), (True,) * dim)

    @staticmethod
    def box(lo, hi) -> "Domain":
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        return Domain(lo, hi, (False,) * lo.size)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Uniform draws from the box (the reference volume measure)."""
        if size is None:
            return rng.uniform(self.lo, self.hi)
        return rng.uniform(self.lo, self.hi, size=(size, self.dim))

    def wrap(self, x) -> np.ndarray:
        return self.wrap_batch(np.asarray(x, float)[None, :])[0]

    def wrap_batch(self, pts) -> np.ndarray:
        """Map cover coordinates back into the fundamental domain."""
        pts = np.array(pts, dtype=float)
        if self.gluing is not None:
            g = self.gluing
            a = g.axis
            span = self.hi[a] - self.lo[a]
            n = np.floor((pts[:, a] - self.lo[a]) / span + _GLUE_SNAP).astype(int)
            pts[:, a] -= n * span
            np.clip(pts[:, a], self.lo[a], None, out=pts[:, a])
            taxes = list(g.transverse)
            while True:
                fwd = np.nonzero(n > 0)[0]
                bwd = np.nonzero(n < 0)[0]
                if fwd.size == 0 and bwd.size == 0:
                    break
                for idx, mat, sgn in ((fwd, g.matrix, -1), (bwd, g.inverse, +1)):
                    if idx.size:
                        sub = pts[np.ix_(idx, taxes)] @ mat.T
                        sub -= np.floor(sub)
                        pts[np.ix_(idx, taxes)] = sub
                        n[idx] += sgn
        for i, per in enumerate(self.periodic):
            if per and (self.gluing is None or i != self.gluing.axis):
                span = self.hi[i] - self.lo[i]
                pts[:, i] = self.lo[i] + np.mod(pts[:, i] - self.lo[i], span)
        return pts

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))


@dataclass(frozen=True)
class VectorField:
    """A smooth field given by chart formulas for velocity and jacobian.

    Both callables accept arrays of shape (..., dim); the jacobian returns
    (..., dim, dim).  The divergence is the trace of the jacobian.
    """

    name: str
    dim: int
    domain: Domain
    velocity: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    divergence_free: bool = False

    def divergence(self, x):
        jac = np.asarray(self.jacobian(np.asarray(x, float)))
        return np.trace(jac, axis1=-2, axis2=-1)

    def speed(self, x) -> float:
        return float(np.linalg.norm(self.velocity(np.asarray(x, float))))

    def is_singular(self, x) -> bool:
        return self.speed(x) < SINGULAR_SPEED


@dataclass(frozen=True, eq=False)
class TrajectoryPoint:
    position: np.ndarray
    time: float


@dataclass(frozen=True, eq=False)
class CocycleSegment:
    """The pair (orbit segment, tangent matrix DX^t) along it."""

    base: TrajectoryPoint
    end: TrajectoryPoint
    t: float
    matrix: np.ndarray

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))


@dataclass(frozen=True)
class IntegratorOptions:
    """Adaptive embedded Runge-Kutta 5(4) settings, recorded in outputs."""

    rtol: float = 1e-9
    atol: float = 1e-9
    max_step: float = np.inf
    method: str = "RK45"

    def asdict(self) -> dict:
        d = {"rtol": self.rtol, "atol": self.atol, "method": self.method}
        if np.isfinite(self.max_step):
            d["max_step"] = self.max_step
        return d


DEFAULT_INTEGRATOR = IntegratorOptions()

# Hamiltonian work defaults to tighter tolerances: an explicit (non-symplectic)
# scheme needs them to keep energy drift below 1e-6 over t ~ 1e3.
HAMILTONIAN_INTEGRATOR = IntegratorOptions(rtol=1e-11, atol=1e-11)


def _integrate(rhs, y0, t, opts: IntegratorOptions) -> np.ndarray:
    y0 = np.asarray(y0, float)
    if t == 0.0:
        return y0.copy()
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        sol = solve_ivp(
            rhs,
            (0.0, float(t)),
            y0,
            method=opts.method,
            rtol=opts.rtol,
            atol=opts.atol,
            max_step=opts.max_step,
        )
    y = sol.y[:, -1] if sol.y.size else np.full(y0.shape, np.nan)
    if not sol.success:
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"state left finite range during integration: {sol.message}")
        raise StepUnderflow(sol.message)
    if not np.all(np.isfinite(y)):
        raise NonFiniteState("integration produced a non-finite state")
    return y


def flow(field: VectorField, x, t: float, opts: IntegratorOptions = DEFAULT_INTEGRATOR) -> TrajectoryPoint:
    """Advance x by time t (negative t runs the field backward)."""
    x = np.asarray(x, float)
    y = _integrate(lambda s, y: np.asarray(field.velocity(y), float), x, t, opts)
    return TrajectoryPoint(field.domain.wrap(y), float(t))


def flow_batch(field: VectorField, pts, t: float, opts: IntegratorOptions = DEFAULT_INTEGRATOR) -> np.ndarray:
    """Advance a batch of points jointly (one stacked adaptive integration).

    Error control acts on the stacked system, so the step size is set by the
    worst-behaved orbit in the batch; per-orbit accuracy is at least as good
    as a solo run at the same tolerances.
    """
    pts = np.asarray(pts, float)
    n, d = pts.shape
    if t == 0.0:
        return field.domain.wrap_batch(pts)

    def rhs(s, y):
        return np.asarray(field.velocity(y.reshape(n, d)), float).ravel()

    y = _integrate(rhs, pts.ravel(), t, opts)
    return field.domain.wrap_batch(y.reshape(n, d))


def tangent_flow(field: VectorField, x, t: float, opts: IntegratorOptions = DEFAULT_INTEGRATOR) -> CocycleSegment:
    """Jointly integrate the state and the variational equation dM/ds = J M."""
    x = np.asarray(x, float)
    d = field.dim
    y0 = np.concatenate([x, np.eye(d).ravel()])

    def rhs(s, y):
        pos = y[:d]
        mat = y[d:].reshape(d, d)
        vel = np.asarray(field.velocity(pos), float)
        jac = np.asarray(field.jacobian(pos), float)
        return np.concatenate([vel, (jac @ mat).ravel()])

    y = _integrate(rhs, y0, t, opts)
    return CocycleSegment(
        TrajectoryPoint(field.domain.wrap(x), 0.0),
        TrajectoryPoint(field.domain.wrap(y[:d]), float(t)),
        float(t),
        y[d:].reshape(d, d),
    )


def liouville_check(
    field: VectorField,
    x,
    t: float,
    opts: IntegratorOptions = DEFAULT_INTEGRATOR,
    segment: float = 1.0,
) -> float:
    """|det DX^t - exp(integral of div X along the orbit)|.

    For fields flagged divergence-free the integral vanishes and this is
    |det DX^t - 1|.

    The determinant is accumulated multiplicatively over orbit pieces of
    length at most `segment` (det of a composed cocycle is the product of
    the piece determinants).  A single transition matrix over t = 100 on a
    hyperbolic field has entries near exp(lambda t), and its one-shot
    determinant drowns in cancellation long before that; short pieces stay
    well conditioned at any horizon.
    """
    x = np.asarray(x, float)
    d = field.dim
    n_pieces = max(1, int(np.ceil(abs(t) / segment)))
    dt = t / n_pieces
    log_det = 0.0

    if field.divergence_free:
        for _ in range(n_pieces):
            seg = tangent_flow(field, x, dt, opts)
            sign, piece = np.linalg.slogdet(seg.matrix)
            if sign <= 0.0:
                raise NumericalError("transition matrix lost orientation")
            log_det += float(piece)
            x = seg.end.position
        return abs(np.expm1(log_det))

    div_integral = 0.0
    for _ in range(n_pieces):
        y0 = np.concatenate([x, np.eye(d).ravel(), [0.0]])

        def rhs(s, y):
            pos = y[:d]
            mat = y[d : d + d * d].reshape(d, d)
            vel = np.asarray(field.velocity(pos), float)
            jac = np.asarray(field.jacobian(pos), float)
            return np.concatenate([vel, (jac @ mat).ravel(), [np.trace(jac)]])

        y = _integrate(rhs, y0, dt, opts)
        sign, piece = np.linalg.slogdet(y[d : d + d * d].reshape(d, d))
        if sign <= 0.0:
            raise NumericalError("transition matrix lost orientation")
        log_det += float(piece)
        div_integral += float(y[-1])
        x = field.domain.wrap(y[:d])
    return abs(float(np.exp(log_det) - np.exp(div_integral)))


# ---------------------------------------------------------------------------
# builtin fields


CAT_MATRIX = np.array([[2.0, 1.0], [1.0, 1.0]])


def cat_generator() -> np.ndarray:
    """Symmetric matrix logarithm of the torus automorphism (2x+y, x+y)."""
    w, v = np.linalg.eigh(CAT_MATRIX)
    return v @ np.diag(np.log(w)) @ v.T


def _zero3() -> VectorField:
    def vel(x):
        return np.zeros(np.shape(x))

    def jac(x):
        return np.zeros(np.shape(x) + (3,))

    return VectorField("zero3", 3, Domain.torus(3), vel, jac, divergence_free=True)


# Dyadic drift components: the time-1 map then moves dyadic grid lines onto
# grid lines exactly, which keeps itinerary statistics of this zero-entropy
# flow free of cell-boundary artifacts.
CONSTANT3_DRIFT = np.array([0.25, 0.125, 0.0625])


def _constant3() -> VectorField:
    c = CONSTANT3_DRIFT

    def vel(x):
        return np.broadcast_to(c, np.shape(x)) + 0.0

    def jac(x):
        return np.zeros(np.shape(x) + (3,))

    return VectorField("constant3", 3, Domain.torus(3), vel, jac, divergence_free=True)


def _abc() -> VectorField:
    """The A=B=C=1 member of the classic solenoidal trigonometric family."""

    def vel(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack(
            [
                np.sin(x3) + np.cos(x2),
                np.sin(x1) + np.cos(x3),
                np.sin(x2) + np.cos(x1),
            ],
            axis=-1,
        )

    def jac(x):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        z = np.zeros(np.shape(x)[:-1])
        row1 = np.stack([z, -np.sin(x2), np.cos(x3)], axis=-1)
        row2 = np.stack([np.cos(x1), z, -np.sin(x3)], axis=-1)
        row3 = np.stack([-np.sin(x1), np.cos(x2), z], axis=-1)
        return np.stack([row1, row2, row3], axis=-2)

    return VectorField("abc", 3, Domain.torus(3, 2.0 * np.pi), vel, jac, divergence_free=True)


def _cat_suspension3() -> VectorField:
    """Unit-ceiling suspension of the torus automorphism (2x+y, x+y) mod 1.

    Points drift upward at unit speed on [0,1)^3 and re-enter through the
    ceiling with the automorphism applied to (x, y).  The tangent cocycle uses
    the uniformly stretched model: the jacobian is the constant symmetric
    logarithm of the automorphism embedded in the horizontal plane, so the
    variational equation integrates to the real matrix power A^t.  Expansion
    is thereby spread continuously in time, matching the frame cocycle of the
    smooth mapping-torus geometry, and finite-time singular values are well
    defined for every window length (a jump-at-the-ceiling transport would
    make every window that misses the ceiling exactly neutral).
    """
    gen = np.zeros((3, 3))
    gen[:2, :2] = cat_generator()

    def vel(x):
        out = np.zeros(np.shape(x))
        out[..., 2] = 1.0
        return out

    def jac(x):
        return np.broadcast_to(gen, np.shape(x) + (3,)) + 0.0

    dom = Domain(
        np.zeros(3),
        np.ones(3),
        (True, True, False),
        MappingTorusGluing.make(2, CAT_MATRIX, 3),
    )
    return VectorField("cat_suspension3", 3, dom, vel, jac, divergence_free=True)


def builtin(name: str) -> VectorField:
    """Look up a builtin field by name; raises UnknownSystem otherwise."""
    if name == "zero3":
        return _zero3()
    if name == "constant3":
        return _constant3()
    if name == "abc":
        return _abc()
    if name == "cat_suspension3":
        return _cat_suspension3()
    if name in ("harmonic4", "coupled_quartic4"):
        from .hamiltonian import builtin_hamiltonian

        return builtin_hamiltonian(name).field
    raise UnknownSystem(f"no builtin field named {name!r} (have {', '.join(BUILTIN_FIELDS)})")


# ---------------------------------------------------------------------------
# JSON system descriptions


def _polynomial_callables(term_lists: Sequence[Sequence[tuple]], dim: int):
    """Build velocity/jacobian closures for per-component monomial lists."""
    comps = []
    for terms in term_lists:
        comps.append([(np.asarray(e, dtype=int), float(c)) for e, c in terms])

    def eval_component(terms, x):
        acc = np.zeros(np.shape(x)[:-1])
        for e, c in terms:
            acc = acc + c * np.prod(x ** e, axis=-1)
        return acc

    def vel(x):
        x = np.asarray(x, float)
        return np.stack([eval_component(t, x) for t in comps], axis=-1)

    # d/dx_j of c * prod x^e is c*e_j * x^(e - delta_j)
    jac_terms = []
    for terms in comps:
        row = []
        for j in range(dim):
            cell = []
            for e, c in terms:
                if e[j] > 0:
                    e2 = e.copy()
                    e2[j] -= 1
                    cell.append((e2, c * e[j]))
            row.append(cell)
        jac_terms.append(row)

    def jac(x):
        x = np.asarray(x, float)
        rows = []
        for row in jac_terms:
            rows.append(np.stack([eval_component(cell, x) for cell in row], axis=-1))
        return np.stack(rows, axis=-2)

    return vel, jac, comps


def _symbolic_divergence(comps, dim: int) -> dict:
    """Collect the monomials of sum_i d(f_i)/dx_i with cancellation."""
    acc: dict[tuple, float] = {}
    for i, terms in enumerate(comps):
        for e, c in terms:
            if e[i] > 0:
                e2 = e.copy()
                e2[i] -= 1
                key = tuple(int(v) for v in e2)
                acc[key] = acc.get(key, 0.0) + c * e[i]
    return {k: v for k, v in acc.items() if abs(v) > 1e-12}


def load_system(source) -> VectorField:
    """Load a field from a builtin name or a JSON description (path, text, or dict).

    Schema: {"name": str, "dim": 3 or 4, "kind": "builtin" | "polynomial" |
    "hamiltonian", "coefficients": ...}.  Polynomial coefficients are given
    per component as lists of (exponent-tuple, coefficient) pairs; the
    "hamiltonian" kind takes a single such list for a scalar H on dim 4.
    An optional "domain" gives {"lo": [...], "hi": [...], "periodic": [...]}.
    """
    if isinstance(source, dict):
        desc = source
    else:
        text = str(source)
        if "{" in text:
            desc = json.loads(text)
        elif os.path.exists(text):
            with open(text) as fh:
                desc = json.load(fh)
        else:
            return builtin(text)

    kind = desc.get("kind", "builtin")
    if kind == "builtin":
        return builtin(desc.get("name", ""))

    name = desc.get("name", kind)
    try:
        dim = int(desc["dim"])
    except KeyError as exc:
        raise ValidationError("system description needs a 'dim' entry") from exc

    if kind == "hamiltonian":
        from .hamiltonian import polynomial_hamiltonian

        return polynomial_hamiltonian(name, dim, desc["coefficients"], desc.get("domain")).field

    if kind != "polynomial":
        raise ValidationError(f"unknown system kind {kind!r}")

    coeffs = desc["coefficients"]
    if len(coeffs) != dim:
        raise ValidationError("polynomial field needs one coefficient list per component")
    for terms in coeffs:
        for e, _ in terms:
            if len(e) != dim:
                raise ValidationError("exponent tuples must match the field dimension")

    vel, jac, comps = _polynomial_callables(coeffs, dim)
    leftover = _symbolic_divergence(comps, dim)
    declared_free = bool(desc.get("divergence_free", True))
    if declared_free and leftover:
        raise ValidationError(
            f"field declared divergence-free but divergence has terms {leftover}"
        )

    if "domain" in desc and desc["domain"] is not None:
        d = desc["domain"]
        dom = Domain(
            np.asarray(d["lo"], float),
            np.asarray(d["hi"], float),
            tuple(bool(b) for b in d.get("periodic", [False] * dim)),
        )
    else:
        dom = Domain.box([-1.0] * dim, [1.0] * dim)

    return VectorField(name, dim, dom, vel, jac, divergence_free=not leftover)
