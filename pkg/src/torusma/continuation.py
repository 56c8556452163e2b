"""Continuation down the regularization ladder.

A scenario couples a degenerate background family, a pair of model potentials
forming the density ``exp(psi1 - psi2)``, an integrability exponent ``p > 1``,
and a decreasing schedule of regularization parameters.  At each rung ``eps``
the solved equation is

    det(a + eps I + H(phi_eps)) = (1 + delta_eps) exp(psi1_eps - psi2_eps),

where ``psi_j_eps`` are the smoothed potentials at the same ``eps`` and the
scalar ``delta_eps`` restores exact mass balance rung by rung.  Solutions are
mean-zero, warm-started down the ladder, and carried with the shifted
potential ``Phi = phi + rho`` in which the background becomes the constant
form ``(1 + eps) I`` — the frame every curvature-type estimate uses.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import estimates
from .geometry import GridField, TorusSpec, integrate, scaled_identity
from .ma import AlphaModel, ma_density, solve_ma_detailed
from .pluripotential import QuasiPshModel, evaluate, hessian_lower_bound, regularize

__all__ = [
    "Scenario",
    "ContinuationState",
    "ContinuationError",
    "LimitResult",
    "enforce_mass_balance",
    "delta_eps",
    "run_continuation",
    "shift_potential",
    "shift_defect",
    "extract_limit",
]

_BALANCE_RTOL = 1e-10


@dataclass(frozen=True)
class Scenario:
    """A full continuation experiment in closed form."""

    name: str
    spec: TorusSpec
    alpha: AlphaModel
    psi1: QuasiPshModel
    psi2: QuasiPshModel
    p: float
    eps_schedule: tuple[float, ...]
    tol: float = 1e-10
    C_config: float | None = None
    description: str = ""

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError(f"integrability exponent must exceed 1, got {self.p}")
        sched = tuple(float(e) for e in self.eps_schedule)
        if not sched:
            raise ValueError("schedule must contain at least one value")
        if sched[0] > 0.5 or any(e <= 0 for e in sched):
            raise ValueError("schedule values must lie in (0, 0.5]")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("schedule must be strictly decreasing")
        for part in (self.alpha.spec, self.psi1.spec, self.psi2.spec):
            if part != self.spec:
                raise ValueError("all scenario components must share one grid")
        object.__setattr__(self, "eps_schedule", sched)

    def resolved_C(self) -> float:
        """The uniform constant for the maximum-principle probes.

        Defaults to the certified curvature bound of ``psi2`` (the flat torus
        contributes no curvature of its own); a configured override wins.
        """
        if self.C_config is not None:
            return self.C_config
        return hessian_lower_bound(self.psi2)


@dataclass(frozen=True)
class ContinuationState:
    """One solved rung of the ladder."""

    eps: float
    delta_eps: float
    phi: GridField
    Phi: GridField
    newton_steps: int
    diagnostics: dict


class ContinuationError(RuntimeError):
    """A rung failed; completed earlier rungs are attached."""

    def __init__(self, msg: str, states: list, rung: int, eps: float):
        super().__init__(msg)
        self.states = states
        self.rung = rung
        self.eps = eps


@lru_cache(maxsize=32)
def _smoothed(model: QuasiPshModel, eps: float) -> GridField:
    return regularize(model, eps)


def _mass_alpha(alpha: AlphaModel, eps: float = 0.0) -> float:
    zero = GridField(alpha.spec, alpha.spec.zeros())
    return integrate(ma_density(alpha.coefficients(eps), zero))


def _mass_density(psi1: QuasiPshModel, psi2: QuasiPshModel) -> float:
    diff = evaluate(psi1).values - evaluate(psi2).values
    return float(np.exp(diff).mean())


def enforce_mass_balance(scenario: Scenario) -> Scenario:
    """Shift ``psi1`` by the constant equating the two total masses.

    The constant is ``kappa = log(mass of det a / mass of exp(psi1 - psi2))``,
    with pole values grid-floored; after the shift the masses agree to
    ``1e-10`` relative.
    """
    mass_a = _mass_alpha(scenario.alpha)
    mass_d = _mass_density(scenario.psi1, scenario.psi2)
    if not (np.isfinite(mass_a) and np.isfinite(mass_d)) or mass_a <= 0 or mass_d <= 0:
        raise ValueError(
            f"masses must be finite and positive, got {mass_a} and {mass_d}"
        )
    if abs(mass_d - mass_a) <= _BALANCE_RTOL * abs(mass_a):
        return scenario
    kappa = float(np.log(mass_a / mass_d))
    balanced = replace(scenario, psi1=scenario.psi1.shifted(kappa))
    residual = abs(_mass_density(balanced.psi1, balanced.psi2) - mass_a) / mass_a
    if residual > _BALANCE_RTOL:
        raise ValueError(f"balance residual {residual:.3e} exceeds {_BALANCE_RTOL}")
    return balanced


def delta_eps(scenario: Scenario, eps: float) -> float:
    """Mass-restoring constant at rung ``eps``.

    Defined by ``(1 + delta) * int exp(psi1_eps - psi2_eps) = int det(a + eps I)``
    with both potentials smoothed at the same ``eps`` as the background shift.
    """
    p1 = _smoothed(scenario.psi1, eps)
    p2 = _smoothed(scenario.psi2, eps)
    mass = float(np.exp(p1.values - p2.values).mean())
    return _mass_alpha(scenario.alpha, eps) / mass - 1.0


def shift_potential(state: ContinuationState, alpha: AlphaModel) -> GridField:
    """The potential in the constant-background frame: ``Phi = phi + rho``.

    ``a + eps I + H(phi)`` and ``(1 + eps) I + H(Phi)`` are the same matrix,
    so the rung equation holds verbatim for ``Phi``.
    """
    return GridField(state.phi.spec, state.phi.values + alpha.rho().values)


def shift_defect(state: ContinuationState, alpha: AlphaModel) -> float:
    """Sup difference of the two independently computed rung determinants.

    ``det(a + eps I + H(phi))`` uses the closed-form coefficients,
    ``det((1+eps) I + H(Phi))`` the spectral Hessian of the shifted
    potential; exact algebra says they agree, so the defect is round-off.
    """
    return _shift_defect(state.phi, state.Phi, alpha, state.eps)


def _shift_defect(
    phi: GridField, Phi: GridField, alpha: AlphaModel, eps: float
) -> float:
    lhs = ma_density(alpha.coefficients(eps), phi)
    rhs = ma_density(scaled_identity(phi.spec, 1.0 + eps), Phi)
    return float(np.max(np.abs(lhs.values - rhs.values)))


def run_continuation(scenario: Scenario, warm_start: bool = True) -> list[ContinuationState]:
    """Solve every rung of the schedule, warm-starting each from the last.

    Preconditions: the scenario is mass-balanced.  Each state carries the
    solver diagnostics and the per-rung estimate scalars (curvature-probe
    suprema, inequality residual minima, trace-identity defect).  A failed
    rung raises with all completed states attached.
    """
    mass_a = _mass_alpha(scenario.alpha)
    mass_d = _mass_density(scenario.psi1, scenario.psi2)
    if abs(mass_d - mass_a) > 1e-8 * abs(mass_a):
        raise ValueError(
            f"scenario is not mass-balanced ({mass_d:.12g} vs {mass_a:.12g}); "
            f"apply enforce_mass_balance first"
        )
    C = scenario.resolved_C()
    rho = scenario.alpha.rho()
    states: list[ContinuationState] = []
    prev_phi: GridField | None = None
    for rung, eps in enumerate(scenario.eps_schedule):
        try:
            p1 = _smoothed(scenario.psi1, eps)
            p2 = _smoothed(scenario.psi2, eps)
            delta = delta_eps(scenario, eps)
            F = GridField(
                scenario.spec, (1.0 + delta) * np.exp(p1.values - p2.values)
            )
            a_eps = scenario.alpha.coefficients(eps)
            result = solve_ma_detailed(
                a_eps, F, phi0=prev_phi, tol=scenario.tol
            )
            phi = result.phi
            Phi = GridField(scenario.spec, phi.values + rho.values)
            defect = _shift_defect(phi, Phi, scenario.alpha, eps)
            f_log = GridField(
                scenario.spec,
                np.log(F.values) - scenario.spec.n * np.log1p(eps),
            )
            siu = estimates.siu_residual(Phi, f_log, eps, C)
            probe = estimates.max_principle_probe(
                _EstimateView(eps, Phi), p2, C
            )
            trace_defect = estimates.trace_identity_defect(Phi, eps)
            diagnostics = {
                "residual_sup": result.residual_sup,
                "shift_defect": defect,
                "siu_min_residual": float(np.min(siu.values)),
                "weighted_c2_sup": probe.global_weighted_sup,
                "sum_inverse_at_argmax": probe.sum_inverse_at_argmax,
                "argmax": probe.argmax,
                "trace_defect": trace_defect,
            }
            states.append(
                ContinuationState(
                    eps=eps,
                    delta_eps=delta,
                    phi=phi,
                    Phi=Phi,
                    newton_steps=result.newton_steps,
                    diagnostics=diagnostics,
                )
            )
            prev_phi = phi if warm_start else None
        except Exception as exc:
            if isinstance(exc, ContinuationError):
                raise
            raise ContinuationError(
                f"rung {rung} (eps={eps:g}) failed: {exc}", states, rung, eps
            ) from exc
    return states


@dataclass(frozen=True)
class _EstimateView:
    """Minimal state view for probes that only need (eps, Phi)."""

    eps: float
    Phi: GridField


@dataclass(frozen=True)
class LimitResult:
    phi_limit: GridField
    cauchy_table: tuple[float, ...]
    converged: bool
    monotone: bool


def extract_limit(states: list[ContinuationState], cauchy_tol: float) -> LimitResult:
    """Last iterate plus the table of consecutive sup-norm differences.

    Convergence is declared when the final difference is below the tolerance.
    A non-monotone difference table (differences failing to decrease) is the
    non-Cauchy flag — reported, never fatal.
    """
    if len(states) < 3:
        raise ValueError(f"need at least 3 rungs to extract a limit, got {len(states)}")
    diffs = tuple(
        float(np.max(np.abs(a.phi.values - b.phi.values)))
        for a, b in zip(states, states[1:])
    )
    monotone = all(b <= a + 1e-14 for a, b in zip(diffs, diffs[1:]))
    return LimitResult(
        phi_limit=states[-1].phi,
        cauchy_table=diffs,
        converged=diffs[-1] <= cauchy_tol,
        monotone=monotone,
    )
