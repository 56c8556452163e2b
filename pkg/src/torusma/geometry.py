"""Flat-torus grids and spectral calculus.

The computational domain is the flat complex torus ``C^n / Z^{2n}`` with
coordinates ``z_j = x_j + i y_j`` and fundamental domain ``[0,1)^{2n}``.
All fields live on a uniform vertex grid with ``N`` points per real axis,
axis order ``(x_1, y_1, ..., x_n, y_n)``, and all derivatives are taken
spectrally (trigonometric differentiation via the FFT), so band-limited
fields are differentiated exactly up to round-off.

Conventions
-----------
* ``d/dz_j = (d/dx_j - i d/dy_j) / 2`` and ``d/dzbar_j`` its conjugate.
* The complex Hessian is ``H(f)_{jk} = d^2 f / dz_j dzbar_k``; for a single
  mode ``f = cos(2 pi x_1)`` this gives ``H_{11} = -pi^2 cos(2 pi x_1)``.
* The half-Laplacian is ``trace H(f) = (1/4) * (ordinary Laplacian)``.
* The background form ``omega`` is the identity coefficient matrix and the
  volume normalisation is Lebesgue measure, so ``Vol = 1`` and the density
  of a Hermitian coefficient field is simply its pointwise determinant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "TorusSpec",
    "GridField",
    "HermitianFormField",
    "scaled_identity",
    "complex_hessian",
    "half_laplacian",
    "spectral_gradient",
    "invert_half_laplacian",
    "heat_smooth",
    "integrate",
    "min_eigenvalue_field",
    "lp_norm",
]


@dataclass(frozen=True)
class TorusSpec:
    """Discretisation of the flat torus.

    Parameters
    ----------
    n : int
        Complex dimension, 1 or 2 (real dimension ``2n``).
    N : int
        Grid points per real axis.  Must be even and at least 8; powers of
        two give the fastest transforms but any even size is accepted.
    """

    n: int
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"complex dimension must be 1 or 2, got {self.n}")
        if self.N < 8 or self.N % 2 != 0:
            raise ValueError(f"grid size must be even and >= 8, got {self.N}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * (2 * self.n)

    @property
    def h(self) -> float:
        """Grid spacing 1/N."""
        return 1.0 / self.N

    @property
    def volume(self) -> float:
        """Lebesgue volume of the fundamental domain."""
        return 1.0

    @property
    def num_axes(self) -> int:
        return 2 * self.n

    def axis_coordinate(self, axis: int) -> np.ndarray:
        """Grid coordinate along ``axis`` broadcast to the full grid shape."""
        c = np.arange(self.N) / self.N
        shape = [1] * self.num_axes
        shape[axis] = self.N
        return c.reshape(shape)

    def coordinates(self) -> list[np.ndarray]:
        """All ``2n`` broadcastable coordinate arrays."""
        return [self.axis_coordinate(a) for a in range(self.num_axes)]

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


@lru_cache(maxsize=32)
def _wavenumbers(n: int, N: int):
    """Integer frequency arrays, one per real axis, broadcastable."""
    k = np.fft.fftfreq(N, d=1.0 / N)  # integers -N/2 .. N/2-1
    ks = []
    for axis in range(2 * n):
        shape = [1] * (2 * n)
        shape[axis] = N
        ks.append(k.reshape(shape))
    return ks


@lru_cache(maxsize=32)
def _k_squared(n: int, N: int) -> np.ndarray:
    ks = _wavenumbers(n, N)
    out = np.zeros((N,) * (2 * n))
    for k in ks:
        out = out + k**2
    return out


@lru_cache(maxsize=32)
def _hessian_multipliers(n: int, N: int):
    """Fourier multipliers for the independent complex-Hessian entries.

    Returns a dict mapping ``(j, k)`` with ``j <= k`` to the multiplier of
    ``d^2/dz_j dzbar_k``.  Diagonal multipliers are real, off-diagonal ones
    complex:

        H_jk = (1/4) [ dx_j dx_k + dy_j dy_k + i (dx_j dy_k - dy_j dx_k) ]
    """
    ks = _wavenumbers(n, N)
    mult = {}
    for j in range(n):
        for k in range(j, n):
            kxj, kyj = ks[2 * j], ks[2 * j + 1]
            kxk, kyk = ks[2 * k], ks[2 * k + 1]
            real = kxj * kxk + kyj * kyk
            imag = kxj * kyk - kyj * kxk
            mult[(j, k)] = -np.pi**2 * (real + 1j * imag)
    return mult


def _as_spec(obj) -> TorusSpec:
    return obj.spec if hasattr(obj, "spec") else obj


@dataclass
class GridField:
    """A real scalar field sampled on the torus grid."""

    spec: TorusSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.spec.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def copy(self) -> "GridField":
        return GridField(self.spec, self.values.copy())


@dataclass
class HermitianFormField:
    """A pointwise Hermitian ``n x n`` coefficient field.

    The values array has shape ``grid + (n, n)`` and is Hermitian-symmetrised
    on construction, so numerical asymmetry from round-off never propagates.
    """

    spec: TorusSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        n = self.spec.n
        if v.shape != self.spec.shape + (n, n):
            raise ValueError(
                f"form shape {v.shape} does not match grid {self.spec.shape} + ({n},{n})"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("form contains non-finite values")
        v = np.asarray(v, dtype=complex)
        self.values = 0.5 * (v + np.conj(np.swapaxes(v, -1, -2)))

    def entry(self, j: int, k: int) -> np.ndarray:
        return self.values[..., j, k]

    def trace(self) -> np.ndarray:
        return np.real(np.trace(self.values, axis1=-2, axis2=-1))

    def det(self) -> np.ndarray:
        n = self.spec.n
        if n == 1:
            return np.real(self.values[..., 0, 0])
        a, d = np.real(self.values[..., 0, 0]), np.real(self.values[..., 1, 1])
        b = self.values[..., 0, 1]
        return a * d - np.abs(b) ** 2


def scaled_identity(spec: TorusSpec, scale: float = 1.0) -> HermitianFormField:
    """The constant coefficient field ``scale * I``."""
    n = spec.n
    out = np.zeros(spec.shape + (n, n), dtype=complex)
    for j in range(n):
        out[..., j, j] = scale
    return HermitianFormField(spec, out)


def _fftn(values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values)


def _ifftn_real(values_hat: np.ndarray) -> np.ndarray:
    return np.real(np.fft.ifftn(values_hat))


def complex_hessian(f: GridField) -> HermitianFormField:
    """Complex Hessian ``H(f)_{jk} = d^2 f / dz_j dzbar_k`` by spectral differentiation.

    One forward transform of ``f`` is shared by all entries.  For real input
    the diagonal entries are real and the matrix is Hermitian at every point.
    """
    spec = f.spec
    n, N = spec.n, spec.N
    fhat = _fftn(f.values)
    mult = _hessian_multipliers(n, N)
    out = np.zeros(spec.shape + (n, n), dtype=complex)
    for j in range(n):
        for k in range(j, n):
            ent = np.fft.ifftn(mult[(j, k)] * fhat)
            if j == k:
                ent = np.real(ent)
            out[..., j, k] = ent
            if j != k:
                out[..., k, j] = np.conj(ent)
    return HermitianFormField(spec, out)


def half_laplacian(f: GridField) -> GridField:
    """Trace of the complex Hessian, computed with a single multiplier.

    Equals one quarter of the ordinary flat Laplacian; the mean mode is
    annihilated exactly, so ``integrate(half_laplacian(f)) = 0``.
    """
    spec = f.spec
    mult = -np.pi**2 * _k_squared(spec.n, spec.N)
    return GridField(spec, _ifftn_real(mult * _fftn(f.values)))


def spectral_gradient(f: GridField) -> np.ndarray:
    """All ``2n`` first real derivatives, stacked along a leading axis."""
    spec = f.spec
    fhat = _fftn(f.values)
    ks = _wavenumbers(spec.n, spec.N)
    out = np.empty((spec.num_axes,) + spec.shape)
    for a in range(spec.num_axes):
        out[a] = _ifftn_real(2j * np.pi * ks[a] * fhat)
    return out


def invert_half_laplacian(f: GridField) -> GridField:
    """Solve ``trace H(u) = f`` for the mean-zero ``u``.

    The mean of ``f`` is projected out (the flat torus admits no solution
    otherwise), and the returned field has exactly zero grid mean.
    """
    spec = f.spec
    k2 = _k_squared(spec.n, spec.N)
    mult = np.zeros_like(k2)
    nz = k2 > 0
    mult[nz] = -1.0 / (np.pi**2 * k2[nz])
    fhat = _fftn(f.values)
    fhat.flat[0] = 0.0
    return GridField(spec, _ifftn_real(mult * fhat))


def heat_smooth(f: GridField, eps: float) -> GridField:
    """Heat-kernel smoothing: damp mode ``k`` by ``exp(-eps * 4 pi^2 |k|^2)``.

    Spectral multiplication by a positive-kernel convolution; commutes with
    every other spectral operator in this module.
    """
    if eps < 0:
        raise ValueError("smoothing time must be nonnegative")
    spec = f.spec
    mult = np.exp(-eps * 4.0 * np.pi**2 * _k_squared(spec.n, spec.N))
    return GridField(spec, _ifftn_real(mult * _fftn(f.values)))


def integrate(f: GridField) -> float:
    """Trapezoidal (= midpoint = spectral) quadrature on the periodic grid."""
    return float(f.values.mean() * f.spec.volume)


def min_eigenvalue_field(form: HermitianFormField) -> GridField:
    """Pointwise smallest eigenvalue of a Hermitian coefficient field.

    Closed-form for ``n <= 2``: the eigenvalues of a Hermitian 2x2 matrix are
    ``m -/+ sqrt(((a-d)/2)^2 + |b|^2)`` with ``m = (a+d)/2``.
    """
    spec = form.spec
    if spec.n == 1:
        return GridField(spec, np.real(form.values[..., 0, 0]))
    a = np.real(form.values[..., 0, 0])
    d = np.real(form.values[..., 1, 1])
    b = form.values[..., 0, 1]
    mid = 0.5 * (a + d)
    rad = np.sqrt((0.5 * (a - d)) ** 2 + np.abs(b) ** 2)
    return GridField(spec, mid - rad)


def lp_norm(f: GridField, p: float) -> float:
    """``L^p`` norm for ``1 <= p < inf``, or the sup-norm for ``p = inf``."""
    if p == np.inf:
        return float(np.max(np.abs(f.values)))
    if p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    return float((np.abs(f.values) ** p).mean() * f.spec.volume) ** (1.0 / p)
