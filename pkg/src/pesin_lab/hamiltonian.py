"""4D symplectic systems: fields induced by a Hamiltonian, energy-level
sampling, and the two-dimensional cocycle transversal to the flow inside a
level set.

Coordinates are ordered (q1, p1, q2, p2) and J is the standard symplectic
matrix in that ordering, so X_H = J grad H and omega(u, v) = u . J v.  The
trace of J Hess H vanishes identically (paired off-diagonal entries of a
symmetric matrix cancel), so induced fields are divergence-free by
construction, not by tolerance.

Level sets are sampled by projecting box-uniform seeds onto {H = e} with
damped Newton steps along grad H; accepted points carry coarea weights
1/|grad H| so weighted averages approximate the invariant level measure.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import (
    HAMILTONIAN_INTEGRATOR,
    SINGULAR_SPEED,
    Domain,
    IntegratorOptions,
    VectorField,
    tangent_flow,
)
from .errors import (
    AllSamplesRejected,
    CriticalLevel,
    DimensionMismatch,
    EmptyLevel,
    SingularPoint,
    UnknownSystem,
    ValidationError,
)
from .lyapunov import IntegratedExponent
from .poincare import NormalFrame, PoincareCocycle, complement_frame

J4 = np.array(
    [
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ]
)

LEVEL_TOL = 1e-9

CRITICAL_GRAD = 1e-8

DRIFT_TOL = 1e-6

_MAX_NEWTON = 100

BUILTIN_HAMILTONIANS = ("harmonic4", "coupled_quartic4")


@dataclass(frozen=True, eq=False)
class HamiltonianSystem:
    """A Hamiltonian on a 4D box together with its induced field.

    H, grad_H and hessian accept arrays of shape (..., 4); the field is
    X_H = J grad_H, and symplectic_form is the matrix of omega(u, v) = u.Jv.
    """

    name: str
    H: Callable
    grad_H: Callable
    hessian: Callable
    field: VectorField
    symplectic_form: np.ndarray


def make_hamiltonian(name, H, grad_H, hessian, domain: Domain) -> HamiltonianSystem:
    """Assemble the induced field and spot-check the defining identity."""
    if domain.dim != 4:
        raise DimensionMismatch(f"Hamiltonian systems live on dim 4, got {domain.dim}")

    def velocity(x):
        return np.asarray(grad_H(x), float) @ J4.T

    def jacobian(x):
        return np.matmul(J4, np.asarray(hessian(x), float))

    field = VectorField(name, 4, domain, velocity, jacobian, divergence_free=True)
    sys = HamiltonianSystem(name, H, grad_H, hessian, field, J4)

    rng = np.random.default_rng(np.random.SeedSequence(0))
    pts = domain.sample(rng, 32)
    g = np.asarray(grad_H(pts), float)
    v = velocity(pts)
    # omega(X_H, e_i) = (J X_H)_i contracted against grad H component-wise
    mismatch = np.abs(v @ J4.T + g).max()
    scale = max(1.0, np.abs(g).max())
    if mismatch > 1e-10 * scale:
        raise ValidationError(
            f"grad_H inconsistent with the symplectic pairing (residual {mismatch:.2e})"
        )
    return sys


def _harmonic4() -> HamiltonianSystem:
    def H(x):
        x = np.asarray(x, float)
        return 0.5 * np.sum(x * x, axis=-1)

    def grad(x):
        return np.asarray(x, float) + 0.0

    def hess(x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.eye(4), x.shape + (4,)) + 0.0

    dom = Domain.box([-3.0] * 4, [3.0] * 4)
    return make_hamiltonian("harmonic4", H, grad, hess, dom)


def _coupled_quartic4() -> HamiltonianSystem:
    """Two unit oscillators coupled through the positive term (q1 q2)^2.

    The only critical point is the origin, so every positive level is
    regular; H >= |x|^2/2 keeps any orbit with H <= 50 inside the box.
    """

    def H(x):
        x = np.asarray(x, float)
        return 0.5 * np.sum(x * x, axis=-1) + x[..., 0] ** 2 * x[..., 2] ** 2

    def grad(x):
        x = np.asarray(x, float)
        q1, p1, q2, p2 = (x[..., i] for i in range(4))
        return np.stack(
            [q1 + 2.0 * q1 * q2**2, p1, q2 + 2.0 * q1**2 * q2, p2], axis=-1
        )

    def hess(x):
        x = np.asarray(x, float)
        q1, q2 = x[..., 0], x[..., 2]
        out = np.zeros(x.shape[:-1] + (4, 4))
        out[..., 0, 0] = 1.0 + 2.0 * q2**2
        out[..., 1, 1] = 1.0
        out[..., 2, 2] = 1.0 + 2.0 * q1**2
        out[..., 3, 3] = 1.0
        out[..., 0, 2] = out[..., 2, 0] = 4.0 * q1 * q2
        return out

    dom = Domain.box([-10.0] * 4, [10.0] * 4)
    return make_hamiltonian("coupled_quartic4", H, grad, hess, dom)


def builtin_hamiltonian(name: str) -> HamiltonianSystem:
    if name == "harmonic4":
        return _harmonic4()
    if name == "coupled_quartic4":
        return _coupled_quartic4()
    raise UnknownSystem(
        f"no builtin Hamiltonian named {name!r} (have {', '.join(BUILTIN_HAMILTONIANS)})"
    )


def polynomial_hamiltonian(name: str, dim: int, terms, domain=None) -> HamiltonianSystem:
    """Hamiltonian from (exponent-tuple, coefficient) monomial pairs."""
    if dim != 4:
        raise DimensionMismatch(f"Hamiltonian systems live on dim 4, got {dim}")
    parsed = []
    for e, c in terms:
        e = np.asarray(e, dtype=int)
        if e.shape != (4,):
            raise ValidationError("Hamiltonian exponent tuples must have length 4")
        if (e < 0).any():
            raise ValidationError("monomial exponents must be nonnegative")
        parsed.append((e, float(c)))

    def eval_terms(term_list, x):
        x = np.asarray(x, float)
        acc = np.zeros(x.shape[:-1])
        for e, c in term_list:
            acc = acc + c * np.prod(x**e, axis=-1)
        return acc

    grads = []
    for i in range(4):
        grads.append(
            [
                (e - np.eye(4, dtype=int)[i], c * e[i])
                for e, c in parsed
                if e[i] > 0
            ]
        )
    hessians = []
    for i in range(4):
        row = []
        for j in range(4):
            row.append(
                [
                    (e - np.eye(4, dtype=int)[j], c * e[j])
                    for e, c in grads[i]
                    if e[j] > 0
                ]
            )
        hessians.append(row)

    def H(x):
        return eval_terms(parsed, x)

    def grad(x):
        x = np.asarray(x, float)
        return np.stack([eval_terms(grads[i], x) for i in range(4)], axis=-1)

    def hess(x):
        x = np.asarray(x, float)
        rows = [
            np.stack([eval_terms(hessians[i][j], x) for j in range(4)], axis=-1)
            for i in range(4)
        ]
        return np.stack(rows, axis=-2)

    if domain is None:
        dom = Domain.box([-1.0] * 4, [1.0] * 4)
    elif isinstance(domain, Domain):
        dom = domain
    else:
        dom = Domain(
            np.asarray(domain["lo"], float),
            np.asarray(domain["hi"], float),
            tuple(bool(b) for b in domain.get("periodic", [False] * 4)),
        )
    return make_hamiltonian(name, H, grad, hess, dom)


def load_hamiltonian(source) -> HamiltonianSystem:
    """Hamiltonian from 'builtin:name', a builtin name, a JSON path/text, or a dict."""
    if isinstance(source, HamiltonianSystem):
        return source
    if isinstance(source, str):
        if source.startswith("builtin:"):
            return builtin_hamiltonian(source.split(":", 1)[1])
        if source in BUILTIN_HAMILTONIANS:
            return builtin_hamiltonian(source)
        if "{" in source:
            desc = json.loads(source)
        else:
            with open(source) as fh:
                desc = json.load(fh)
    elif isinstance(source, dict):
        desc = source
    else:
        raise ValidationError(f"cannot load a Hamiltonian from {type(source).__name__}")
    if desc.get("kind", "hamiltonian") == "builtin":
        return builtin_hamiltonian(desc.get("name", ""))
    return polynomial_hamiltonian(
        desc.get("name", "hamiltonian"),
        int(desc.get("dim", 4)),
        desc["coefficients"],
        desc.get("domain"),
    )


# ---------------------------------------------------------------------------
# Energy levels


@dataclass(frozen=True, eq=False)
class EnergyLevelSample:
    """Points on {H = e} with coarea weights (1/|grad H|, unnormalized)."""

    energy: float
    points: np.ndarray
    weights: np.ndarray
    regular: bool
    n_rejected: int
    level_tol: float = LEVEL_TOL


def sample_level(
    sys: HamiltonianSystem,
    e: float,
    count: int,
    seed: int,
    level_tol: float = LEVEL_TOL,
) -> EnergyLevelSample:
    """Project box-uniform seeds onto the level {H = e}.

    Each seed takes at most 100 Newton steps x <- x - (H-e) grad H/|grad H|^2
    (step length capped at a quarter of the box diagonal); seeds that fail to
    land within level_tol are rejected and redrawn.  EmptyLevel if the whole
    seed budget converges nowhere (e.g. e below min H).
    """
    if count < 1:
        raise ValidationError("need at least one level point")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    dom = sys.field.domain
    cap = 0.25 * float(np.linalg.norm(dom.hi - dom.lo))
    collected: list[np.ndarray] = []
    n_rejected = 0
    budget = 50 * count
    spent = 0
    while sum(len(c) for c in collected) < count and spent < budget:
        batch = min(max(count, 64), budget - spent)
        spent += batch
        x = dom.sample(rng, batch)
        for _ in range(_MAX_NEWTON):
            miss = np.asarray(sys.H(x), float) - e
            todo = np.abs(miss) > level_tol
            if not todo.any():
                break
            g = np.asarray(sys.grad_H(x), float)
            gn2 = np.einsum("ij,ij->i", g, g)
            move = todo & (gn2 > 1e-24)
            if not move.any():
                break
            step = np.zeros_like(x)
            step[move] = (miss[move] / gn2[move])[:, None] * g[move]
            ln = np.linalg.norm(step, axis=1)
            scale = np.where(ln > cap, cap / np.maximum(ln, 1e-300), 1.0)
            x = x - step * scale[:, None]
        good = np.abs(np.asarray(sys.H(x), float) - e) <= level_tol
        n_rejected += int((~good).sum())
        if good.any():
            collected.append(x[good])
    if not collected:
        raise EmptyLevel(f"no seed projected onto H = {e} within {level_tol:g}")
    pts = np.concatenate(collected)[:count]
    grad_norms = np.linalg.norm(np.asarray(sys.grad_H(pts), float), axis=1)
    return EnergyLevelSample(
        energy=float(e),
        points=pts,
        weights=1.0 / np.maximum(grad_norms, 1e-300),
        regular=bool((grad_norms >= CRITICAL_GRAD).all()),
        n_rejected=n_rejected,
        level_tol=level_tol,
    )


# ---------------------------------------------------------------------------
# Transversal cocycle


def transversal_frame(sys: HamiltonianSystem, x) -> NormalFrame:
    """Orthonormal 2-frame spanning the plane orthogonal to X_H and grad H.

    The plane is invariant under J (J swaps the two anchors up to sign), so
    omega restricts to +/- the area form on it; the second vector's sign is
    fixed so that omega(f1, f2) = +1.
    """
    x = np.asarray(x, float)
    g = np.asarray(sys.grad_H(x), float)
    gn = np.linalg.norm(g)
    if gn < CRITICAL_GRAD:
        raise CriticalLevel(f"grad H below {CRITICAL_GRAD:g} at {x.tolist()}")
    v = J4 @ g
    sn = np.linalg.norm(v)
    if sn < SINGULAR_SPEED:
        raise SingularPoint(f"X_H vanishes at {x.tolist()}")
    u1 = v / sn
    u2 = g - np.dot(g, u1) * u1
    u2 = u2 / np.linalg.norm(u2)
    f1, f2 = complement_frame([u1, u2], 4)
    if float(f1 @ J4 @ f2) < 0.0:
        f2 = -f2
    return NormalFrame(x, np.array([f1, f2]))


def transversal_poincare(
    sys: HamiltonianSystem,
    x,
    t: float,
    opts: IntegratorOptions = HAMILTONIAN_INTEGRATOR,
) -> PoincareCocycle:
    """The 2x2 cocycle of the flow on the transversal plane over [0, t].

    Both endpoint frames are omega-oriented, and the true tangent map
    preserves omega, so the matrix has determinant 1 up to integration error.
    """
    seg = tangent_flow(sys.field, x, t, opts)
    f0 = transversal_frame(sys, seg.base.position)
    f1 = transversal_frame(sys, seg.end.position)
    matrix = f1.vectors @ seg.matrix @ f0.vectors.T
    return PoincareCocycle(f0, f1, float(t), matrix)


def _transversal_top(sys, x0, t_horizon, renorm_interval, opts):
    """Top accumulated exponent of the transversal cocycle plus energy drift."""
    n_steps = max(1, int(round(t_horizon / renorm_interval)))
    dt = t_horizon / n_steps
    x = np.asarray(x0, float)
    e0 = float(sys.H(x))
    q = np.eye(2)
    acc = np.zeros(2)
    for _ in range(n_steps):
        pc = transversal_poincare(sys, x, dt, opts)
        q, r = np.linalg.qr(pc.matrix @ q)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        q = q * signs
        acc += np.log(np.abs(np.diag(r)))
        x = pc.end.base
    drift = abs(float(sys.H(x)) - e0)
    return acc / t_horizon, drift


def level_exponent(
    sys: HamiltonianSystem,
    e: float,
    n_samples: int,
    t_horizon: float,
    seed: int,
    opts: IntegratorOptions = HAMILTONIAN_INTEGRATOR,
    renorm_interval: float = 1.0,
) -> IntegratedExponent:
    """Coarea-weighted average of the top transversal exponent on {H = e}.

    Runs whose energy drifts by more than 1e-6 over the horizon are dropped
    (integrator mistrust, counted in n_rejected), as are runs through
    critical or singular points.
    """
    level = sample_level(sys, e, n_samples, seed)
    values = []
    weights = []
    n_rejected = level.n_rejected
    for x, w in zip(level.points, level.weights):
        try:
            acc, drift = _transversal_top(sys, x, t_horizon, renorm_interval, opts)
        except (CriticalLevel, SingularPoint):
            n_rejected += 1
            continue
        if drift > DRIFT_TOL:
            n_rejected += 1
            continue
        values.append(max(float(acc[0]), 0.0))
        weights.append(w)
    if not values:
        raise AllSamplesRejected(f"no usable orbit on level H = {e}")
    values = np.array(values)
    weights = np.array(weights)
    weights = weights / weights.sum()
    mean = float(weights @ values)
    if values.size > 1:
        var = float(weights @ (values - mean) ** 2)
        neff = 1.0 / float(weights @ weights)
        stderr = float(np.sqrt(var / max(neff - 1.0, 1.0)))
    else:
        stderr = 0.0
    return IntegratedExponent(
        value=mean,
        n_samples=values.size,
        t_horizon=float(t_horizon),
        stderr=stderr,
        method="qr_average",
        n_rejected=n_rejected,
    )


@dataclass(frozen=True, eq=False)
class LevelIntegral:
    """Trapezoid integral of level exponents over an energy grid."""

    value: float
    stderr: float
    e_grid: tuple
    levels: tuple


def integrated_level_entropy(
    sys: HamiltonianSystem,
    e_grid,
    n_samples: int = 16,
    t_horizon: float = 200.0,
    seed: int = 0,
    opts: IntegratorOptions = HAMILTONIAN_INTEGRATOR,
    renorm_interval: float = 1.0,
) -> LevelIntegral:
    """Integrate the level exponent in energy by the trapezoid rule.

    Under the entropy/exponent identity for smooth level measures this
    estimates the total entropy carried by the energy range.  A single-level
    grid has zero integration width and returns 0 (the level value is still
    reported).  Levels that cannot be sampled or evaluated abort the
    integration with the offending energies listed.
    """
    e_grid = [float(e) for e in np.atleast_1d(np.asarray(e_grid, float))]
    if len(e_grid) == 0:
        raise ValidationError("need at least one energy level")
    if any(b <= a for a, b in zip(e_grid, e_grid[1:])):
        raise ValidationError("e_grid must be strictly increasing")
    children = np.random.SeedSequence(seed).spawn(len(e_grid))
    levels = []
    failures = []
    for e, child in zip(e_grid, children):
        try:
            levels.append(
                level_exponent(
                    sys,
                    e,
                    n_samples,
                    t_horizon,
                    int(child.generate_state(1)[0]),
                    opts,
                    renorm_interval,
                )
            )
        except (EmptyLevel, CriticalLevel, AllSamplesRejected) as exc:
            failures.append((e, exc))
    if failures:
        listing = "; ".join(f"e={e:g}: {exc}" for e, exc in failures)
        raise CriticalLevel(f"levels not integrable: {listing}")
    if len(e_grid) == 1:
        return LevelIntegral(0.0, 0.0, tuple(e_grid), tuple(levels))
    vals = np.array([lv.value for lv in levels])
    errs = np.array([lv.stderr for lv in levels])
    widths = np.diff(np.asarray(e_grid))
    value = float(np.sum(0.5 * (vals[:-1] + vals[1:]) * widths))
    quad_w = np.zeros(len(e_grid))
    quad_w[:-1] += 0.5 * widths
    quad_w[1:] += 0.5 * widths
    stderr = float(np.sqrt(np.sum((quad_w * errs) ** 2)))
    return LevelIntegral(value, stderr, tuple(e_grid), tuple(levels))


def energy_capped_sampler(sys: HamiltonianSystem, cap: float, max_tries: int = 100000):
    """Box-uniform sampler restricted to the invariant region {H <= cap}.

    For the built-ins the cap keeps whole orbits inside the box (H bounds
    |x|^2/2), so the restricted volume is flow-invariant and suitable for
    space averages.
    """

    def draw(rng):
        for _ in range(max_tries):
            x = sys.field.domain.sample(rng)
            if float(sys.H(x)) <= cap:
                return x
        raise AllSamplesRejected(f"no sample with H <= {cap} in {max_tries} tries")

    return draw
