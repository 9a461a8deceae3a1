"""Lyapunov spectra by QR renormalization and integrated upper exponents.

The spectrum of one orbit comes from the usual product of tangent segments
with periodic QR re-orthonormalization: accumulated logs of the R diagonal
divided by total time.  The space-averaged upper exponent is a seeded Monte
Carlo average of max(top exponent, 0) over volume-distributed starting
points, with a companion finite-horizon estimator built from operator norms
of the normal-bundle cocycle; the latter dominates the former at every
horizon and is non-increasing in it.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    DEFAULT_INTEGRATOR,
    SINGULAR_SPEED,
    IntegratorOptions,
    VectorField,
    tangent_flow,
)
from .errors import AllSamplesRejected, SingularPoint, ValidationError
from .poincare import linear_poincare

# Orbits that pass this close to a singularity (by the speed proxy) are
# rejected by the sampling estimators and resampled.
REJECT_SPEED = 1e-9

_MAX_RESAMPLE = 100


@dataclass(frozen=True, eq=False)
class LyapunovSpectrum:
    """Finite-time exponents of one orbit, sorted in descending order."""

    exponents: np.ndarray
    t_total: float
    renorm_interval: float
    residual_sum: float
    flow_exponent_index: int | None
    final_frame: np.ndarray
    final_position: np.ndarray
    min_speed: float
    max_speed: float

    @property
    def top(self) -> float:
        return float(self.exponents[0])


@dataclass(frozen=True, eq=False)
class IntegratedExponent:
    """Space-averaged nonnegative upper exponent with sampling error."""

    value: float
    n_samples: int
    t_horizon: float
    stderr: float
    method: str
    n_rejected: int = 0


def spectrum(
    field: VectorField,
    x,
    t_total: float,
    renorm_interval: float = 0.5,
    opts: IntegratorOptions = DEFAULT_INTEGRATOR,
) -> LyapunovSpectrum:
    """QR-renormalized exponents over [0, t_total] starting at x.

    The frame column whose accumulated exponent is closest to zero tracks the
    flow direction on hyperbolic systems; flow_exponent_index reports which
    sorted exponent belongs to the frame vector best aligned with the field
    at the final point (None at a singular endpoint).
    """
    if t_total <= 0 or renorm_interval <= 0:
        raise ValidationError("t_total and renorm_interval must be positive")
    n_steps = max(1, int(round(t_total / renorm_interval)))
    dt = float(renorm_interval)
    d = field.dim
    pos = np.asarray(x, float)
    q = np.eye(d)
    logs = np.zeros(d)
    min_speed = np.inf
    max_speed = 0.0
    for _ in range(n_steps):
        speed = field.speed(pos)
        min_speed = min(min_speed, speed)
        max_speed = max(max_speed, speed)
        seg = tangent_flow(field, pos, dt, opts)
        q, r = np.linalg.qr(seg.matrix @ q)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        q = q * signs
        logs += np.log(np.abs(np.diag(r)))
        pos = seg.end.position
    speed = field.speed(pos)
    min_speed = min(min_speed, speed)
    max_speed = max(max_speed, speed)

    total = n_steps * dt
    raw = logs / total
    order = np.argsort(-raw, kind="stable")
    exponents = raw[order]

    flow_index = None
    vel = np.asarray(field.velocity(pos), float)
    if np.linalg.norm(vel) >= SINGULAR_SPEED:
        u = vel / np.linalg.norm(vel)
        cosines = np.abs(q.T @ u)
        frame_col = int(np.argmax(cosines))
        flow_index = int(np.nonzero(order == frame_col)[0][0])

    return LyapunovSpectrum(
        exponents=exponents,
        t_total=total,
        renorm_interval=dt,
        residual_sum=float(abs(np.sum(exponents))),
        flow_exponent_index=flow_index,
        final_frame=q,
        final_position=pos,
        min_speed=float(min_speed),
        max_speed=float(max_speed),
    )


def pairing_check(spec: LyapunovSpectrum) -> float:
    """max(|l1 + l3|, |l2|) for a three-dimensional spectrum.

    Volume preservation pairs the extreme exponents and pins the middle one
    (the flow direction) at zero.
    """
    if spec.exponents.size != 3:
        raise ValidationError("pairing check applies to three-dimensional spectra")
    e = spec.exponents
    return float(max(abs(e[0] + e[2]), abs(e[1])))


def _near_singular_passage(spec: LyapunovSpectrum) -> bool:
    # A regular orbit that dips below the rejection speed passed near a
    # singularity.  An orbit that is singular throughout (zero field) carries
    # the identity cocycle and is kept.
    return spec.min_speed < REJECT_SPEED <= spec.max_speed


def _default_sampler(field: VectorField):
    return lambda rng: field.domain.sample(rng)


def integrated_exponent(
    field: VectorField,
    n_samples: int,
    t_horizon: float,
    seed: int,
    renorm_interval: float = 0.5,
    opts: IntegratorOptions = DEFAULT_INTEGRATOR,
    sampler=None,
    threads: int = 1,
) -> IntegratedExponent:
    """Monte Carlo average of max(top exponent, 0) over volume sampling.

    One seed sequence drives every per-sample substream, so results are
    bit-identical regardless of thread count.  Orbits passing near a
    singularity are rejected and resampled from the same substream (counted
    in n_rejected); if every sample exhausts its resampling budget the whole
    estimate fails with AllSamplesRejected.
    """
    if n_samples < 1:
        raise ValidationError("need at least one sample")
    draw = sampler if sampler is not None else _default_sampler(field)
    children = np.random.SeedSequence(seed).spawn(n_samples)

    def worker(i: int):
        rng = np.random.default_rng(children[i])
        rejected = 0
        for _ in range(_MAX_RESAMPLE):
            x0 = draw(rng)
            spec = spectrum(field, x0, t_horizon, renorm_interval, opts)
            if _near_singular_passage(spec):
                rejected += 1
                continue
            return max(spec.top, 0.0), rejected
        return None, rejected

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, range(n_samples)))
    else:
        results = [worker(i) for i in range(n_samples)]

    values = [v for v, _ in results if v is not None]
    n_rejected = sum(r for _, r in results)
    if not values:
        raise AllSamplesRejected(f"all {n_samples} samples rejected near singularities")
    arr = np.array(values)
    stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return IntegratedExponent(
        value=float(arr.mean()),
        n_samples=arr.size,
        t_horizon=float(t_horizon),
        stderr=stderr,
        method="qr_average",
        n_rejected=n_rejected,
    )


def finite_n_estimator(
    field: VectorField,
    n: float,
    n_samples: int,
    seed: int,
    opts: IntegratorOptions = DEFAULT_INTEGRATOR,
    sampler=None,
    threads: int = 1,
) -> IntegratedExponent:
    """(1/n) integral of log ||P^n|| by volume Monte Carlo.

    P^n is the normal-bundle cocycle over a window of length n and ||.|| the
    operator norm.  By submultiplicativity the sequence over n is
    subadditive, so these averages decrease (within noise) toward the
    integrated upper exponent and dominate it at every n.  Fixed points with
    an identity cocycle contribute log 1 = 0 by convention (the window norm
    is 1 in any transverse frame).
    """
    if n <= 0:
        raise ValidationError("window length n must be positive")
    draw = sampler if sampler is not None else _default_sampler(field)
    children = np.random.SeedSequence(seed).spawn(n_samples)

    def worker(i: int):
        rng = np.random.default_rng(children[i])
        rejected = 0
        for _ in range(_MAX_RESAMPLE):
            x0 = draw(rng)
            if field.speed(x0) < SINGULAR_SPEED:
                seg = tangent_flow(field, x0, n, opts)
                stays = np.linalg.norm(seg.end.position - np.asarray(x0, float)) <= 1e-8
                trivial = np.linalg.norm(seg.matrix - np.eye(field.dim)) <= 1e-8
                if stays and trivial:
                    return 0.0, rejected
                rejected += 1
                continue
            try:
                pc = linear_poincare(field, x0, n, opts)
            except SingularPoint:
                rejected += 1
                continue
            top = float(np.linalg.svd(pc.matrix, compute_uv=False)[0])
            return float(np.log(top) / n), rejected
        return None, rejected

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, range(n_samples)))
    else:
        results = [worker(i) for i in range(n_samples)]

    values = [v for v, _ in results if v is not None]
    n_rejected = sum(r for _, r in results)
    if not values:
        raise AllSamplesRejected(f"all {n_samples} samples rejected")
    arr = np.array(values)
    stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return IntegratedExponent(
        value=float(arr.mean()),
        n_samples=arr.size,
        t_horizon=float(n),
        stderr=stderr,
        method="finite_n_inf",
        n_rejected=n_rejected,
    )
