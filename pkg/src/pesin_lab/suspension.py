"""Suspension semiflows over discrete base maps.

A base map R together with a ceiling function h bounded below by a positive
constant defines a semiflow on the space of pairs (x, r) with 0 <= r < h(x):
drift upward in r, drop to the graph floor and apply R whenever the ceiling
is reached.  Base invariant measures lift to (measure x height-Lebesgue)
normalized by the mean ceiling, and the entropy of the suspension is the base
entropy divided by that mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonPositiveCeiling, NotInvertible, ValidationError

BUILTIN_BASES = ("cat", "rotation", "identity")


@dataclass(frozen=True, eq=False)
class BaseSystem:
    """A measurable map of the unit torus with an invariant sampler.

    map/inverse act on arrays of shape (n, dim); sampler(rng, n) draws n
    points distributed by the invariant measure.  known_entropy records the
    metric entropy when available in closed form.
    """

    name: str
    dim: int
    map: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[np.random.Generator, int], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray] | None = None
    known_entropy: float | None = None


@dataclass(frozen=True, eq=False)
class Ceiling:
    """A ceiling function with its declared positive lower bound.

    integral_estimate is the Monte Carlo mean of h under the base invariant
    measure (with standard error), computed once at suspension time.
    """

    h: Callable[[np.ndarray], np.ndarray]
    alpha: float
    h_max: float
    label: str
    integral_estimate: float = float("nan")
    integral_stderr: float = float("nan")


@dataclass(frozen=True, eq=False)
class SuspensionPoint:
    base_point: np.ndarray
    height: float


@dataclass(frozen=True, eq=False)
class ExpansivityReport:
    fraction_separated: float
    pairs: int
    separated: int
    delta: float
    horizon: int


def parse_ceiling(text: str) -> Ceiling:
    """Parse "const:c" or "cosine:a,b" (h = a + b cos(2 pi x), a > b >= 0)."""
    kind, _, rest = text.partition(":")
    if kind == "const":
        try:
            c = float(rest)
        except ValueError as exc:
            raise ValidationError(f"bad constant ceiling {text!r}") from exc
        return Ceiling(
            h=lambda pts: np.full(np.shape(pts)[0], c),
            alpha=c,
            h_max=c,
            label=text,
        )
    if kind == "cosine":
        try:
            a_str, b_str = rest.split(",")
            a, b = float(a_str), float(b_str)
        except ValueError as exc:
            raise ValidationError(f"bad cosine ceiling {text!r}") from exc
        if not (a > b >= 0):
            raise ValidationError("cosine ceiling needs a > b >= 0")
        return Ceiling(
            h=lambda pts: a + b * np.cos(2.0 * np.pi * np.asarray(pts)[..., 0]),
            alpha=a - b,
            h_max=a + b,
            label=text,
        )
    raise ValidationError(f"unknown ceiling format {text!r} (use const:c or cosine:a,b)")


def constant_ceiling(c: float) -> Ceiling:
    return parse_ceiling(f"const:{c}")


@dataclass(frozen=True, eq=False)
class SuspensionSystem:
    """A base map suspended under a ceiling."""

    base: BaseSystem
    ceiling: Ceiling

    @property
    def mean_ceiling(self) -> float:
        return self.ceiling.integral_estimate

    def evolve(self, point: SuspensionPoint, s: float) -> SuspensionPoint:
        """Advance by time s; negative s needs an invertible base."""
        pts, heights = self.evolve_batch(
            np.asarray(point.base_point, float)[None, :],
            np.array([point.height]),
            s,
        )
        return SuspensionPoint(pts[0], float(heights[0]))

    def evolve_batch(self, pts, heights, s: float):
        """Vectorized evolve: the number of base applications at each point is
        the largest n whose ceiling Birkhoff sum stays at or below r + s."""
        pts = np.array(pts, dtype=float)
        total = np.array(heights, dtype=float) + float(s)
        h = np.asarray(self.ceiling.h(pts), float)
        if s >= 0:
            while True:
                over = np.nonzero(total >= h)[0]
                if over.size == 0:
                    break
                pts[over] = self.base.map(pts[over])
                total[over] -= h[over]
                h[over] = np.asarray(self.ceiling.h(pts[over]), float)
        else:
            if self.base.inverse is None:
                raise NotInvertible(
                    f"base {self.base.name!r} has no inverse; cannot evolve backward"
                )
            while True:
                under = np.nonzero(total < 0)[0]
                if under.size == 0:
                    break
                pts[under] = self.base.inverse(pts[under])
                h_new = np.asarray(self.ceiling.h(pts[under]), float)
                total[under] += h_new
                h[under] = h_new
        return pts, total

    def lift_samples(self, rng: np.random.Generator, count: int):
        """Rejection-sample (base measure x Lebesgue)/mean ceiling as arrays."""
        pts_out = np.empty((count, self.base.dim))
        heights_out = np.empty(count)
        filled = 0
        # acceptance rate is integral/h_max; the 1.2 is head-room
        batch = max(64, int(1.2 * count * self.ceiling.h_max / self.ceiling.integral_estimate))
        while filled < count:
            xs = self.base.sampler(rng, batch)
            us = rng.uniform(0.0, self.ceiling.h_max, size=batch)
            keep = us < np.asarray(self.ceiling.h(xs), float)
            take = min(int(keep.sum()), count - filled)
            idx = np.nonzero(keep)[0][:take]
            pts_out[filled : filled + take] = xs[idx]
            heights_out[filled : filled + take] = us[idx]
            filled += take
        return pts_out, heights_out


def suspend(base: BaseSystem, ceiling: Ceiling, seed: int = 0, n_check: int = 10000) -> SuspensionSystem:
    """Build the suspension, estimating the mean ceiling and spot-checking
    the declared bounds on a seeded sample."""
    if not np.isfinite(ceiling.alpha) or ceiling.alpha <= 0:
        raise NonPositiveCeiling(f"ceiling lower bound {ceiling.alpha} is not positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    xs = base.sampler(rng, n_check)
    hs = np.asarray(ceiling.h(xs), float)
    if np.any(hs < ceiling.alpha - 1e-12):
        raise NonPositiveCeiling(
            f"ceiling dips below its declared lower bound {ceiling.alpha}"
        )
    if np.any(hs > ceiling.h_max + 1e-12):
        raise ValidationError("ceiling exceeds its declared upper bound")
    est = float(hs.mean())
    stderr = float(hs.std(ddof=1) / np.sqrt(hs.size)) if hs.size > 1 else 0.0
    ceiling = Ceiling(
        h=ceiling.h,
        alpha=ceiling.alpha,
        h_max=ceiling.h_max,
        label=ceiling.label,
        integral_estimate=est,
        integral_stderr=stderr,
    )
    return SuspensionSystem(base, ceiling)


def lift_measure_sample(system: SuspensionSystem, seed: int, count: int) -> list[SuspensionPoint]:
    """Seeded draws from the lifted invariant measure."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pts, heights = system.lift_samples(rng, count)
    return [SuspensionPoint(pts[i], float(heights[i])) for i in range(count)]


def abramov_check(system: SuspensionSystem, base_entropy: float | None = None) -> float:
    """Predicted suspension entropy: base entropy over mean ceiling."""
    if base_entropy is None:
        base_entropy = system.base.known_entropy
    if base_entropy is None:
        raise ValidationError("no base entropy available for the transfer formula")
    return float(base_entropy) / system.mean_ceiling


def _torus_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(a - b)
    d = np.minimum(d, 1.0 - d)
    return np.linalg.norm(d, axis=-1)


def expansivity_probe(
    base: BaseSystem,
    delta: float,
    pairs: int,
    horizon: int,
    seed: int,
) -> ExpansivityReport:
    """Fraction of delta-close pairs that separate beyond delta within the
    two-sided horizon.  Expansive maps push this to 1, isometries to 0."""
    if base.inverse is None:
        raise NotInvertible(f"base {base.name!r} has no inverse; probe needs both directions")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    xs = base.sampler(rng, pairs)
    offsets = rng.uniform(-delta / 2, delta / 2, size=xs.shape)
    ys = np.mod(xs + offsets, 1.0)
    separated = np.zeros(pairs, dtype=bool)
    for step in (base.map, base.inverse):
        a, b = xs.copy(), ys.copy()
        for _ in range(horizon):
            a = step(a)
            b = step(b)
            separated |= _torus_distance(a, b) > delta
    count = int(separated.sum())
    return ExpansivityReport(
        fraction_separated=count / pairs,
        pairs=pairs,
        separated=count,
        delta=delta,
        horizon=horizon,
    )


# ---------------------------------------------------------------------------
# builtin bases

_CAT = np.array([[2.0, 1.0], [1.0, 1.0]])
_CAT_INV = np.array([[1.0, -1.0], [-1.0, 2.0]])

# golden-mean rotation number for the circle rotation base
_ROTATION_ANGLE = (np.sqrt(5.0) - 1.0) / 2.0


def base_system(name: str) -> BaseSystem:
    if name == "cat":
        lam = float(np.max(np.linalg.eigvalsh(_CAT)))
        return BaseSystem(
            name="cat",
            dim=2,
            map=lambda pts: np.mod(pts @ _CAT.T, 1.0),
            inverse=lambda pts: np.mod(pts @ _CAT_INV.T, 1.0),
            sampler=lambda rng, n: rng.uniform(0.0, 1.0, size=(n, 2)),
            known_entropy=float(np.log(lam)),
        )
    if name == "rotation":
        return BaseSystem(
            name="rotation",
            dim=1,
            map=lambda pts: np.mod(pts + _ROTATION_ANGLE, 1.0),
            inverse=lambda pts: np.mod(pts - _ROTATION_ANGLE, 1.0),
            sampler=lambda rng, n: rng.uniform(0.0, 1.0, size=(n, 1)),
            known_entropy=0.0,
        )
    if name == "identity":
        return BaseSystem(
            name="identity",
            dim=2,
            map=lambda pts: np.array(pts, dtype=float),
            inverse=lambda pts: np.array(pts, dtype=float),
            sampler=lambda rng, n: rng.uniform(0.0, 1.0, size=(n, 2)),
            known_entropy=0.0,
        )
    from .errors import UnknownSystem

    raise UnknownSystem(f"no builtin base named {name!r} (have {', '.join(BUILTIN_BASES)})")
