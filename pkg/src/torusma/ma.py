"""The determinant-type elliptic operator and its damped Newton solver.

The unknown is a real potential ``phi`` on the torus; the operator is the
pointwise determinant ``det(a + H(phi))`` of the background Hermitian
coefficient field ``a`` perturbed by the complex Hessian of ``phi``.  The
equation ``det(a + H(phi)) = F`` is solved in log-residual form

    r(phi) = log det(a + H(phi)) - log F,

whose linearization at ``phi`` is exactly the metric Laplacian
``u -> trace((a + H(phi))^{-1} H(u))``.  Newton steps solve the linearized
system with a Krylov iteration preconditioned by the flat spectral inverse
composed with a pointwise inverse-metric-trace scaling; step lengths are
halved until both positivity of the perturbed form and strict sup-norm
residual decrease hold.  Solutions are normalized to zero mean.

``AlphaModel`` is the family of degenerate background forms: a product-cosine
potential ``rho = (t/pi^2) sum_j cos(2 pi x_j)`` whose coefficient matrix is
exactly ``diag(1 - t cos(2 pi x_j))`` — nonnegative for all ``t <= 1``, with
quadratic vanishing on the sheets ``{x_j = 0}`` at ``t = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .geometry import (
    GridField,
    HermitianFormField,
    TorusSpec,
    complex_hessian,
    integrate,
    invert_half_laplacian,
    min_eigenvalue_field,
)

__all__ = [
    "AlphaModel",
    "CompatibilityError",
    "PositivityError",
    "IterationLimitError",
    "PositivityReport",
    "SolveResult",
    "ma_density",
    "positivity_check",
    "linearized_apply",
    "solve_ma",
    "solve_ma_detailed",
    "poisson_oracle_n1",
    "degeneracy_integrability",
]


class CompatibilityError(ValueError):
    """Total masses of the two sides of the equation disagree."""


class PositivityError(RuntimeError):
    """No admissible iterate keeps the perturbed form positive."""


class IterationLimitError(RuntimeError):
    """Newton did not converge within the step cap."""

    def __init__(self, msg: str, steps: int, residual: float):
        super().__init__(msg)
        self.steps = steps
        self.residual = residual


@dataclass(frozen=True)
class AlphaModel:
    """Degenerate background family with closed-form potential and coefficients.

    ``t = 0`` is the flat background; ``t = 1`` degenerates quadratically on
    the coordinate sheets.  ``eps0`` is the claimed integrability exponent of
    the reciprocal density ``1/det a`` (any value below 1/2 is integrable for
    this family; see :func:`degeneracy_integrability`).
    """

    spec: TorusSpec
    t: float
    eps0: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"degeneracy parameter must be in [0,1], got {self.t}")
        if self.eps0 <= 0:
            raise ValueError(f"integrability exponent must be positive, got {self.eps0}")

    def _cosines(self) -> list[np.ndarray]:
        """cos(2 pi x_j) for each complex coordinate, broadcastable."""
        return [
            np.cos(2 * np.pi * self.spec.axis_coordinate(2 * j))
            for j in range(self.spec.n)
        ]

    def rho(self) -> GridField:
        """Potential with ``I + H(rho)`` equal to the coefficient field."""
        vals = sum(self._cosines()) * (self.t / np.pi**2)
        return GridField(self.spec, np.broadcast_to(vals, self.spec.shape).copy())

    def eta(self) -> GridField:
        """The comparison potential ``-rho``."""
        r = self.rho()
        return GridField(self.spec, -r.values)

    def coefficients(self, eps: float = 0.0) -> HermitianFormField:
        """Closed-form ``diag(1 - t cos(2 pi x_j)) + eps I``."""
        n = self.spec.n
        out = np.zeros(self.spec.shape + (n, n), dtype=complex)
        for j, c in enumerate(self._cosines()):
            out[..., j, j] = np.broadcast_to(1.0 - self.t * c + eps, self.spec.shape)
        return HermitianFormField(self.spec, out)


def ma_density(a: HermitianFormField, phi: GridField) -> GridField:
    """Pointwise ``det(a + H(phi))``; may be negative, callers gate on positivity."""
    form = HermitianFormField(a.spec, a.values + complex_hessian(phi).values)
    return GridField(a.spec, form.det())


@dataclass(frozen=True)
class PositivityReport:
    ok: bool
    min_eig: float


_POSITIVITY_MARGIN = 1e-10


def positivity_check(a: HermitianFormField, phi: GridField) -> PositivityReport:
    """Grid minimum of the smallest eigenvalue of ``a + H(phi)``."""
    form = HermitianFormField(a.spec, a.values + complex_hessian(phi).values)
    m = float(np.min(min_eigenvalue_field(form).values))
    return PositivityReport(ok=m >= _POSITIVITY_MARGIN, min_eig=m)


@dataclass
class _MetricData:
    """Per-iterate cache: determinant and adjugate of g = a + H(phi)."""

    det: np.ndarray
    adj00: np.ndarray  # real
    adj11: np.ndarray | None  # real (n=2 only)
    adj01: np.ndarray | None  # complex (n=2 only)
    n: int

    @classmethod
    def build(cls, a: HermitianFormField, phi: GridField) -> "_MetricData":
        g = HermitianFormField(a.spec, a.values + complex_hessian(phi).values)
        n = a.spec.n
        if n == 1:
            g00 = np.real(g.values[..., 0, 0])
            return cls(det=g00, adj00=np.ones_like(g00), adj11=None, adj01=None, n=1)
        g00 = np.real(g.values[..., 0, 0])
        g11 = np.real(g.values[..., 1, 1])
        g01 = g.values[..., 0, 1]
        det = g00 * g11 - np.abs(g01) ** 2
        # adjugate: inverse = adj / det
        return cls(det=det, adj00=g11, adj11=g00, adj01=-g01, n=2)

    def contract(self, M: HermitianFormField) -> np.ndarray:
        """trace(g^{-1} M) pointwise — real for Hermitian input."""
        if self.n == 1:
            return np.real(M.values[..., 0, 0]) / self.det
        num = (
            self.adj00 * np.real(M.values[..., 0, 0])
            + self.adj11 * np.real(M.values[..., 1, 1])
            + 2.0 * np.real(self.adj01 * np.conj(M.values[..., 0, 1]))
        )
        return num / self.det

    def inverse_trace(self) -> np.ndarray:
        """trace(g^{-1}) pointwise."""
        if self.n == 1:
            return 1.0 / self.det
        return (self.adj00 + self.adj11) / self.det


def linearized_apply(a: HermitianFormField, phi: GridField, u: GridField) -> GridField:
    """Metric Laplacian ``trace((a + H(phi))^{-1} H(u))`` at the iterate ``phi``."""
    data = _MetricData.build(a, phi)
    if np.min(data.det) <= 0:
        raise PositivityError("metric is singular: determinant vanishes on the grid")
    return GridField(a.spec, data.contract(complex_hessian(u)))


@dataclass(frozen=True)
class SolveResult:
    phi: GridField
    newton_steps: int
    residual_sup: float
    residual_history: tuple[float, ...]


_MAX_NEWTON_STEPS = 200
_MIN_STEP_LENGTH = 2.0**-20


def _mean_zero(values: np.ndarray) -> np.ndarray:
    return values - values.mean()


def _newton_direction(
    spec: TorusSpec, data: _MetricData, r: np.ndarray, rtol: float
) -> np.ndarray:
    """Solve the linearized system for the Newton update.

    The metric Laplacian annihilates constants, so the operator is augmented
    with the grid mean, which shifts the nullspace away from the right-hand
    side; the constant component of the update is irrelevant (the determinant
    is invariant under ``phi -> phi + c``) and is projected out afterwards.
    The preconditioner is the flat spectral inverse composed with division by
    the pointwise inverse-metric trace — exact for ``n = 1``.
    """
    shape = spec.shape
    size = int(np.prod(shape))
    sigma = data.inverse_trace() / spec.n

    def matvec(x):
        u = GridField(spec, x.reshape(shape))
        return (data.contract(complex_hessian(u)) + x.mean()).ravel()

    def precond(x):
        w = x.reshape(shape)
        m = w.mean()
        u = invert_half_laplacian(GridField(spec, (w - m) / sigma))
        return (u.values + m).ravel()

    A = LinearOperator((size, size), matvec=matvec, dtype=float)
    M = LinearOperator((size, size), matvec=precond, dtype=float)
    b = (-r).ravel()
    x, info = gmres(A, b, M=M, rtol=rtol, atol=0.0, restart=60, maxiter=200)
    # info > 0 (slow inner convergence) still yields a usable descent direction;
    # the line search below guards the outer iteration either way.
    return _mean_zero(x.reshape(shape))


def solve_ma_detailed(
    a: HermitianFormField,
    F: GridField,
    phi0: GridField | None = None,
    tol: float = 1e-10,
) -> SolveResult:
    """Damped Newton solve of ``det(a + H(phi)) = F`` with diagnostics.

    Requires ``F > 0``, mass compatibility ``|int F - int det a| <= 1e-8 int det a``
    (no silent rescaling here — normalization constants belong to the caller),
    and an initial iterate keeping ``a + H(phi0)`` positive.  Returns the
    mean-zero solution with the accepted-step count and residual history.
    """
    spec = a.spec
    if float(np.min(F.values)) <= 0:
        raise ValueError("right-hand density must be positive everywhere")
    mass_a = integrate(ma_density(a, GridField(spec, spec.zeros())))
    mass_f = integrate(F)
    if abs(mass_f - mass_a) > 1e-8 * abs(mass_a):
        raise CompatibilityError(
            f"density mass {mass_f:.12g} differs from background mass {mass_a:.12g} "
            f"beyond 1e-8 relative"
        )

    phi = GridField(spec, _mean_zero(phi0.values if phi0 is not None else spec.zeros()))
    report = positivity_check(a, phi)
    if not report.ok:
        raise PositivityError(
            f"initial iterate leaves the form indefinite (min eig {report.min_eig:.3e})"
        )

    logF = np.log(F.values)
    data = _MetricData.build(a, phi)
    r = np.log(data.det) - logF
    r_sup = float(np.max(np.abs(r)))
    history = [r_sup]
    steps = 0

    while r_sup > tol:
        if steps >= _MAX_NEWTON_STEPS:
            raise IterationLimitError(
                f"no convergence in {_MAX_NEWTON_STEPS} Newton steps "
                f"(residual {r_sup:.3e})",
                steps=steps,
                residual=r_sup,
            )
        # Inexact-Newton forcing: crude inner solves far from the solution,
        # tightening proportionally to the residual near it.
        forcing = min(1e-2, max(0.05 * r_sup, 1e-12))
        direction = _newton_direction(spec, data, r, forcing)
        lam = 1.0
        while True:
            cand = GridField(spec, _mean_zero(phi.values + lam * direction))
            cand_form = HermitianFormField(
                spec, a.values + complex_hessian(cand).values
            )
            min_eig = float(np.min(min_eigenvalue_field(cand_form).values))
            if min_eig >= _POSITIVITY_MARGIN:
                cand_data = _MetricData.build(a, cand)
                cand_r = np.log(cand_data.det) - logF
                cand_sup = float(np.max(np.abs(cand_r)))
                if cand_sup < r_sup:
                    break
            lam *= 0.5
            if lam < _MIN_STEP_LENGTH:
                raise PositivityError(
                    f"no step length down to 2^-20 admits a positive form with "
                    f"residual decrease (residual {r_sup:.3e})"
                )
        phi, data, r, r_sup = cand, cand_data, cand_r, cand_sup
        history.append(r_sup)
        steps += 1

    return SolveResult(
        phi=phi, newton_steps=steps, residual_sup=r_sup, residual_history=tuple(history)
    )


def solve_ma(
    a: HermitianFormField,
    F: GridField,
    phi0: GridField | None = None,
    tol: float = 1e-10,
) -> GridField:
    """Mean-zero ``phi`` with ``||log det(a + H(phi)) - log F||_inf <= tol``."""
    return solve_ma_detailed(a, F, phi0, tol).phi


def poisson_oracle_n1(
    F: GridField, a: HermitianFormField | None = None
) -> GridField:
    """Exact one-dimensional solve by spectral inversion.

    For ``n = 1`` the determinant is affine — ``det(a + H(phi)) = a + tr H(phi)``
    — so the equation is a Poisson problem.  ``a`` defaults to the identity
    background; passing the actual background covers shifted rungs.
    """
    spec = F.spec
    if spec.n != 1:
        raise ValueError("the linear-reduction oracle only exists in dimension one")
    if a is None:
        background = np.ones(spec.shape)
    else:
        background = np.broadcast_to(np.real(a.values[..., 0, 0]), spec.shape)
    mass_f = float(F.values.mean())
    mass_a = float(background.mean())
    if abs(mass_f - mass_a) > 1e-10 * max(1.0, abs(mass_a)):
        raise CompatibilityError(
            f"density mass {mass_f:.12g} differs from background mass {mass_a:.12g}"
        )
    return invert_half_laplacian(GridField(spec, F.values - background))


def degeneracy_integrability(
    alpha: AlphaModel, eps0: float | None = None, refinements: tuple[int, ...] = (1, 2, 4)
) -> list[float]:
    """Quasi-norm ``(int (1/det a)^{eps0})^{1/eps0}`` under grid refinement.

    Uses midpoint sampling so the degenerate sheets ``{x_j = 0}`` at ``t = 1``
    are never hit exactly; a stabilizing sequence is evidence of integrability
    (true for this family whenever ``eps0 < 1/2``).
    """
    if eps0 is None:
        eps0 = alpha.eps0
    out = []
    n, N0 = alpha.spec.n, alpha.spec.N
    for scale in refinements:
        N = N0 * scale
        x = (np.arange(N) + 0.5) / N
        det = 1.0
        for j in range(n):
            shape = [1] * (2 * n)
            shape[2 * j] = N
            det = det * (1.0 - alpha.t * np.cos(2 * np.pi * x).reshape(shape))
        det = np.broadcast_to(det, (N,) * (2 * n))
        out.append(float(np.mean(det**-eps0) ** (1.0 / eps0)))
    return out
