"""Executable forms of the a-priori estimates.

Every check works in the constant-background frame: the metric at rung
``eps`` is ``g = (1 + eps) I + H(Phi)`` with ``Phi`` the shifted potential,
and the normalized trace is ``q = n + trace H(Phi) / (1 + eps)``.  Pointwise
inequalities are returned as residual fields (claimed sign: nonnegative up
to round-off or discretization); ladder-level uniformity claims are returned
as verdicts carrying witnesses.

Two checks are exact identities — the trace identity and the determinant
shift — and must cancel to round-off: they guard the algebra everything else
stands on.  The differential inequality for ``log q`` and the convexity
comparison for quasi-plurisubharmonic weights are genuine estimates whose
residuals are nonnegative in the continuum and must stay so on the grid up
to a small discretization allowance.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .geometry import (
    GridField,
    HermitianFormField,
    half_laplacian,
    complex_hessian,
    min_eigenvalue_field,
    scaled_identity,
    spectral_gradient,
)
from .ma import AlphaModel, _MetricData, PositivityError
from .pluripotential import QuasiPshModel, SingularSet, evaluate, _periodic_delta

__all__ = [
    "HOLDS",
    "VIOLATED",
    "INCONCLUSIVE",
    "Verdict",
    "EstimateReport",
    "ProbeResult",
    "SobolevHolderReport",
    "c0_uniformity",
    "siu_residual",
    "comparison_residual",
    "trace_identity_defect",
    "max_principle_probe",
    "c2_uniformity",
    "delta_trend",
    "holder_seminorm",
    "holder_scaling",
    "sobolev_holder_probe",
]

HOLDS = "holds"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Verdict:
    """Outcome of one ladder-level check.

    ``status`` is one of the three module constants; a violated verdict
    always carries a witness — the named scalars that broke the bound.
    """

    status: str
    summary: str
    witness: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.status not in (HOLDS, VIOLATED, INCONCLUSIVE):
            raise ValueError(f"unknown verdict status {self.status!r}")

    @property
    def ok(self) -> bool:
        return self.status == HOLDS


@dataclass(frozen=True)
class EstimateReport:
    """A named verdict plus the scalars that support it."""

    name: str
    verdict: Verdict
    data: tuple[tuple[str, float], ...] = ()


def _metric(Phi: GridField, eps: float) -> _MetricData:
    data = _MetricData.build(scaled_identity(Phi.spec, 1.0 + eps), Phi)
    if float(np.min(data.det)) <= 0:
        raise PositivityError("metric is singular: determinant vanishes on the grid")
    return data


def _q_values(Phi: GridField, eps: float) -> np.ndarray:
    """Normalized metric trace ``n + trace H(Phi) / (1 + eps)``; must be > 0."""
    q = Phi.spec.n + half_laplacian(Phi).values / (1.0 + eps)
    qmin = float(np.min(q))
    if qmin <= 0:
        raise ValueError(
            f"normalized metric trace must be positive, grid minimum {qmin:.3e}"
        )
    return q


def siu_residual(Phi: GridField, f: GridField, eps: float, C: float) -> GridField:
    """Residual of the differential inequality for the log metric trace.

    With ``q = n + trace H(Phi)/(1+eps)`` and ``f`` the log density in the
    constant-background frame, the claim is

        Delta_g log q  >=  (Delta f / (1+eps) - C) / q  -  C (1+eps) trace(g^{-1})

    pointwise, where ``Delta_g`` is the metric Laplacian and ``Delta`` the
    flat half-Laplacian.  Returned is left minus right; for ``n = 1`` with
    ``C = 0`` the two sides agree identically because the equation itself
    says ``log q = f``, so the residual there measures pure discretization
    noise.  At ``Phi = 0``, ``f = 0`` the residual is the constant
    ``C/n + C n``.
    """
    spec = Phi.spec
    q = _q_values(Phi, eps)
    data = _metric(Phi, eps)
    logq = GridField(spec, np.log(q))
    lhs = data.contract(complex_hessian(logq))
    rhs = (half_laplacian(f).values / (1.0 + eps) - C) / q
    rhs = rhs - C * (1.0 + eps) * data.inverse_trace()
    return GridField(spec, lhs - rhs)


_COMPARISON_PRECONDITION = -1e-8


def comparison_residual(
    Phi: GridField, psi: GridField, C: float, eps: float = 0.0
) -> GridField:
    """Residual of the convexity comparison for a curvature-bounded weight.

    Precondition: ``C I + H(psi)`` is positive semidefinite on the grid (up
    to ``-1e-8``); rejected otherwise, since the claim is simply false for
    under-certified constants.  The claim:

        trace(g^{-1} (C I + H(psi)))  >=  (C n + Delta psi) / ((1+eps) q),

    which holds pointwise because each eigenvalue of ``g`` is at most the
    full trace ``(1+eps) q``.  Returned is left minus right — nonnegative up
    to round-off whenever the precondition holds.
    """
    spec = Phi.spec
    shifted = scaled_identity(spec, C)
    form_vals = shifted.values + complex_hessian(psi).values
    min_eig = float(
        np.min(min_eigenvalue_field(HermitianFormField(spec, form_vals)).values)
    )
    if min_eig < _COMPARISON_PRECONDITION:
        raise ValueError(
            f"weight is not curvature-bounded by C={C:.6g}: "
            f"grid minimum eigenvalue {min_eig:.3e}"
        )
    q = _q_values(Phi, eps)
    data = _metric(Phi, eps)
    lhs = C * data.inverse_trace() + data.contract(complex_hessian(psi))
    rhs = (C * spec.n + half_laplacian(psi).values) / ((1.0 + eps) * q)
    return GridField(spec, lhs - rhs)


def trace_identity_defect(Phi: GridField, eps: float) -> float:
    """Sup defect of ``trace(g^{-1} H(Phi)) = n - (1+eps) trace(g^{-1})``.

    Both sides are computed independently from the same metric cache; the
    identity is pure linear algebra, so the defect is round-off only.
    """
    spec = Phi.spec
    data = _metric(Phi, eps)
    lhs = data.contract(complex_hessian(Phi))
    rhs = spec.n - (1.0 + eps) * data.inverse_trace()
    return float(np.max(np.abs(lhs - rhs)))


@dataclass(frozen=True)
class ProbeResult:
    """Where the weighted trace peaks and what the metric looks like there."""

    argmax: tuple[int, ...]
    S_max: float
    sum_inverse_at_argmax: float
    global_weighted_sup: float


def max_principle_probe(state, psi2_eps: GridField, C: float) -> ProbeResult:
    """Locate the maximum of ``S = -2 C Phi + psi2_eps + log q``.

    ``exp(S)`` is the weighted trace whose supremum the maximum-principle
    argument controls; at the discrete argmax the probe also records
    ``(1+eps) trace(g^{-1})`` — the sum of reciprocal normalized eigenvalues
    that the argument bounds by a dimensional constant.
    """
    Phi, eps = state.Phi, state.eps
    q = _q_values(Phi, eps)
    S = -2.0 * C * Phi.values + psi2_eps.values + np.log(q)
    flat = int(np.argmax(S))
    idx = tuple(int(i) for i in np.unravel_index(flat, Phi.spec.shape))
    data = _metric(Phi, eps)
    sum_inv = float(((1.0 + eps) * data.inverse_trace())[idx])
    s_max = float(S[idx])
    return ProbeResult(
        argmax=idx,
        S_max=s_max,
        sum_inverse_at_argmax=sum_inv,
        global_weighted_sup=float(np.exp(s_max)),
    )


def _fit_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(x, y, 1)[0])


def c0_uniformity(states) -> Verdict:
    """Uniform boundedness of ``sup |phi_eps|`` down the ladder.

    Holds when every rung's sup norm stays within 25 percent of the first
    rung's and the least-squares slope against ``-log eps`` does not exceed
    0.01 per e-fold.  Unbounded potentials fail the slope test long before
    the ladder ends.
    """
    if len(states) < 3:
        return Verdict(
            INCONCLUSIVE, f"need at least 3 rungs, got {len(states)}"
        )
    sups = np.array([float(np.max(np.abs(s.phi.values))) for s in states])
    eps = np.array([s.eps for s in states])
    first = sups[0]
    deviation = np.abs(sups - first)
    worst = int(np.argmax(deviation))
    slope = _fit_slope(-np.log(eps), sups)
    within = bool(np.all(deviation <= 0.25 * first + 1e-15))
    flat = slope <= 0.01
    if within and flat:
        return Verdict(
            HOLDS,
            f"sup norms within 25% of first rung ({first:.6g}), "
            f"slope {slope:.3e} per e-fold",
            witness=(("first_sup", float(first)), ("slope", slope)),
        )
    parts = []
    if not within:
        parts.append(
            f"rung eps={eps[worst]:g} has sup {sups[worst]:.6g} vs first {first:.6g}"
        )
    if not flat:
        parts.append(f"slope {slope:.3e} exceeds 0.01 per e-fold")
    return Verdict(
        VIOLATED,
        "; ".join(parts),
        witness=(
            ("worst_eps", float(eps[worst])),
            ("worst_sup", float(sups[worst])),
            ("first_sup", float(first)),
            ("slope", slope),
        ),
    )


def _centers_of(singular) -> tuple:
    """Accept a singular-set record or a plain tuple of center coordinates."""
    if isinstance(singular, SingularSet):
        return singular.centers
    return tuple(singular)


def _exclusion_mask(spec, centers, radius: float) -> np.ndarray:
    """True where the periodic distance to every center is at least ``radius``."""
    if not centers:
        return np.ones(spec.shape, dtype=bool)
    coords = spec.coordinates()
    keep = np.ones(spec.shape, dtype=bool)
    for center in centers:
        d2 = np.zeros(spec.shape)
        for axis in range(spec.num_axes):
            d2 = d2 + _periodic_delta(coords[axis], center[axis]) ** 2
        keep &= np.sqrt(d2) >= radius
    return keep


def c2_uniformity(
    states, psi2: QuasiPshModel, alpha: AlphaModel, C: float
) -> Verdict:
    """Uniformity of the weighted second-order quantity down the ladder.

    Per rung the quantity is ``sup q * exp(psi2_hat - 2 C Phi)`` over grid
    points at least one spacing away from the singular centers, where
    ``psi2_hat`` is the sharp weight (grid-floored at its poles) held fixed
    across rungs, and ``Phi = phi + rho`` is re-derived here from the raw
    potentials rather than read off the states.  Holds when every rung stays
    within a factor 2 of the first and the relative least-squares slope
    against ``-log eps`` is at most 0.05 per e-fold.  The unweighted trace
    blows up along the ladder in singular scenarios; only the weighted
    quantity can stay uniform.
    """
    if len(states) < 3:
        return Verdict(INCONCLUSIVE, f"need at least 3 rungs, got {len(states)}")
    spec = states[0].phi.spec
    rho = alpha.rho()
    weight = evaluate(psi2)
    centers = tuple(p.center for p in psi2.poles)
    keep = _exclusion_mask(spec, centers, spec.h)
    if not keep.any():
        raise ValueError("every grid point is excluded by the singular centers")
    vals = []
    for s in states:
        Phi = GridField(spec, s.phi.values + rho.values)
        q = _q_values(Phi, s.eps)
        S = np.log(q) + weight.values - 2.0 * C * Phi.values
        vals.append(float(np.exp(np.max(S[keep]))))
    vals = np.array(vals)
    eps = np.array([s.eps for s in states])
    first = vals[0]
    ratio = vals / first
    worst = int(np.argmax(ratio))
    slope = _fit_slope(-np.log(eps), ratio)
    bounded = bool(np.all(ratio <= 2.0))
    flat = slope <= 0.05
    if bounded and flat:
        return Verdict(
            HOLDS,
            f"weighted second-order supremum within factor 2 of first rung "
            f"({first:.6g}), relative slope {slope:.3e} per e-fold",
            witness=(("first_sup", float(first)), ("relative_slope", slope)),
        )
    parts = []
    if not bounded:
        parts.append(
            f"rung eps={eps[worst]:g} reaches {ratio[worst]:.3g} x first rung"
        )
    if not flat:
        parts.append(f"relative slope {slope:.3e} exceeds 0.05 per e-fold")
    return Verdict(
        VIOLATED,
        "; ".join(parts),
        witness=(
            ("worst_eps", float(eps[worst])),
            ("worst_ratio", float(ratio[worst])),
            ("first_sup", float(first)),
            ("relative_slope", slope),
        ),
    )


def delta_trend(states, final_bound: float = 1e-2) -> Verdict:
    """Decay of the mass-restoring constants down the ladder.

    Holds when the final ``|delta_eps|`` is below the bound and the absolute
    values do not increase over the last three rungs.
    """
    if len(states) < 3:
        return Verdict(INCONCLUSIVE, f"need at least 3 rungs, got {len(states)}")
    deltas = [abs(s.delta_eps) for s in states]
    tail = deltas[-3:]
    decreasing = all(b <= a * (1.0 + 1e-12) + 1e-15 for a, b in zip(tail, tail[1:]))
    small = deltas[-1] <= final_bound
    if small and decreasing:
        return Verdict(
            HOLDS,
            f"final |delta| {deltas[-1]:.3e} <= {final_bound:g}, "
            f"non-increasing over last 3 rungs",
            witness=(("final_delta", deltas[-1]),),
        )
    parts = []
    if not small:
        parts.append(f"final |delta| {deltas[-1]:.3e} exceeds {final_bound:g}")
    if not decreasing:
        parts.append(f"|delta| not decreasing over last 3 rungs: {tail}")
    return Verdict(
        VIOLATED,
        "; ".join(parts),
        witness=(("final_delta", deltas[-1]), ("tail_start", tail[0])),
    )


def _stencil_offsets(num_axes: int) -> list[tuple[int, ...]]:
    """One representative per antipodal pair of {-1,0,1}^d offsets."""
    offsets = []
    for v in product((-1, 0, 1), repeat=num_axes):
        if all(c == 0 for c in v):
            continue
        first = next(c for c in v if c != 0)
        if first > 0:
            offsets.append(v)
    return offsets


def holder_seminorm(
    phi: GridField,
    gamma: float,
    exclusion_radius: float,
    singular=(),
) -> float:
    """Discrete Hoelder seminorm of the gradient away from the singular set.

    The seminorm is the maximum of ``|grad phi(x + d) - grad phi(x)| / |d|^gamma``
    over a stencil of lattice directions at one, two, and four grid spacings
    (separations capped at 1/4, the injectivity scale of the periodic
    distance), restricted to pairs whose endpoints both keep the exclusion
    distance from every singular center.  ``singular`` is a singular-set
    record or a plain tuple of centers.  Monotone non-increasing in the
    exclusion radius by construction.  Raises when the exclusion empties the
    stencil; requires at least two grid spacings of exclusion radius so the
    shortest stencil legs cannot straddle a pole.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"Hoelder exponent must lie in (0,1), got {gamma}")
    spec = phi.spec
    if exclusion_radius < 2.0 * spec.h * (1.0 - 1e-12):
        raise ValueError(
            f"exclusion radius must be at least 2h = {2 * spec.h:g}, "
            f"got {exclusion_radius:g}"
        )
    centers = _centers_of(singular)
    grad = spectral_gradient(phi)
    keep = _exclusion_mask(spec, centers, exclusion_radius)
    best = -np.inf
    any_valid = False
    for v in _stencil_offsets(spec.num_axes):
        vnorm = float(np.linalg.norm(v))
        for m in (1, 2, 4):
            separation = m * spec.h * vnorm
            if separation > 0.25:
                continue
            shift = tuple(-m * c for c in v)
            axes = tuple(range(spec.num_axes))
            diff2 = np.zeros(spec.shape)
            for comp in grad:
                diff2 += (np.roll(comp, shift, axis=axes) - comp) ** 2
            valid = keep & np.roll(keep, shift, axis=axes)
            if not valid.any():
                continue
            any_valid = True
            quotient = np.sqrt(diff2[valid]) / separation**gamma
            best = max(best, float(np.max(quotient)))
    if not any_valid:
        raise ValueError(
            f"exclusion radius {exclusion_radius:g} leaves no admissible "
            f"stencil pairs on an N={spec.N} grid"
        )
    return best


def holder_scaling(
    states,
    gamma: float,
    centers: tuple,
    inner_radius: float,
    outer_radius: float,
) -> Verdict:
    """Interior regularity versus near-pole concentration of the gradient.

    Two claims: the seminorm at the outer exclusion radius is stable (within
    50 percent spread) over the last three rungs, and at the final rung the
    inner-radius seminorm exceeds the outer-radius one by a factor of at
    least 10 — gradient roughness concentrates at the poles.
    """
    if len(states) < 3:
        return Verdict(INCONCLUSIVE, f"need at least 3 rungs, got {len(states)}")
    outer = [
        holder_seminorm(s.phi, gamma, outer_radius, centers) for s in states[-3:]
    ]
    inner_final = holder_seminorm(states[-1].phi, gamma, inner_radius, centers)
    spread_ok = max(outer) <= 1.5 * min(outer)
    concentration = inner_final / outer[-1]
    concentrated = concentration >= 10.0
    witness = (
        ("outer_min", float(min(outer))),
        ("outer_max", float(max(outer))),
        ("inner_final", float(inner_final)),
        ("concentration_ratio", float(concentration)),
    )
    if spread_ok and concentrated:
        return Verdict(
            HOLDS,
            f"outer seminorm stable ({min(outer):.4g}..{max(outer):.4g}), "
            f"inner/outer ratio {concentration:.3g} >= 10",
            witness=witness,
        )
    parts = []
    if not spread_ok:
        parts.append(
            f"outer seminorm spread {max(outer) / min(outer):.3g} exceeds 1.5"
        )
    if not concentrated:
        parts.append(f"inner/outer ratio {concentration:.3g} below 10")
    return Verdict(VIOLATED, "; ".join(parts), witness=witness)


@dataclass(frozen=True)
class SobolevHolderReport:
    """Embedding-condition bookkeeping on a patch away from the centers."""

    sobolev_norm: float
    holder_value: float
    ratio: float
    margins: tuple[tuple[str, float], ...]
    condition_ok: tuple[tuple[str, bool], ...]


def sobolev_holder_probe(
    phi: GridField,
    gamma: float,
    q_exponent: float,
    exclusion_radius: float,
    singular=(),
    d_override: float | None = None,
) -> SobolevHolderReport:
    """Second-order integrability versus Hoelder continuity on a patch.

    Computes the volume-weighted ``L^q`` norm of the complex Hessian
    (Frobenius, pointwise) and the Hoelder-``gamma`` seminorm of the
    gradient on the same patch — the two sides of the compactness embedding
    — plus the condition margins ``q (1 - gamma) - d`` for both readings of
    the dimension, the real ``2n`` and the complex ``n``, and an optional
    configured value.  A positive margin is the condition under which
    second-order integrability upgrades to Hoelder continuity of the
    gradient; the seminorm-to-norm ratio is the per-rung diagnostic.
    """
    if q_exponent <= 0:
        raise ValueError(f"integrability exponent must be positive, got {q_exponent}")
    spec = phi.spec
    centers = _centers_of(singular)
    keep = _exclusion_mask(spec, centers, exclusion_radius)
    if not keep.any():
        raise ValueError("exclusion radius removes the whole grid")
    hess = complex_hessian(phi)
    frob = np.sqrt(np.sum(np.abs(hess.values) ** 2, axis=(-2, -1)))
    cell = spec.h**spec.num_axes
    sobolev = float((np.sum(frob[keep] ** q_exponent) * cell) ** (1.0 / q_exponent))
    holder = holder_seminorm(phi, gamma, exclusion_radius, centers)
    ratio = holder / sobolev if sobolev > 0 else (0.0 if holder == 0 else float("inf"))
    margins = [
        ("real_dimension", q_exponent * (1.0 - gamma) - 2 * spec.n),
        ("complex_dimension", q_exponent * (1.0 - gamma) - spec.n),
    ]
    if d_override is not None:
        margins.append(("configured", q_exponent * (1.0 - gamma) - d_override))
    return SobolevHolderReport(
        sobolev_norm=sobolev,
        holder_value=holder,
        ratio=float(ratio),
        margins=tuple((k, float(v)) for k, v in margins),
        condition_ok=tuple((k, v > 0) for k, v in margins),
    )
