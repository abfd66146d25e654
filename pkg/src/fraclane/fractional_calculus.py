"""Spectral fractional Laplacian, its inverse, and the Green-function family.

The operator acts by eigenvalue multipliers: (-Delta)^s sum a_k phi_k =
sum a_k lambda_k^s phi_k. The Dirichlet Green function of the box is the
eigen-sum G(x, y) = sum_k lambda_k^{-s} phi_k(x) phi_k(y), bounded above by
the free-space kernel g_{n,s} |x-y|^{2s-n}; its regular part is the
difference H = free - G. The iterated kernel solves
(-Delta_x)^s Gt(x, y) = G^p(x, y) and is computed as
Gt(x, y) = int_Omega G(x, z) G^p(z, y) dz with polar-corrected patches
around both integrable singularities.

Eigen-sum truncation is never silently dropped: every kernel sample carries
a tail estimate extrapolated from the decay of the outer mode shells
(a heuristic, flagged as such in reports; the convergence rate is not
quantified anywhere authoritative).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma as gamma_fn

from .spectral_domain import (
    Grid,
    GridFunction,
    SpectralBasis,
    SpectralField,
    analyze,
    build_grid,
    synthesize,
    synthesize_at,
)


class UnresolvedSingularityError(ValueError):
    """Kernel requested below the basis' resolvable separation."""


class RegimeError(ValueError):
    """Exponent outside the regime an operation is defined for."""


@dataclass(frozen=True)
class FreeKernelConstant:
    """g_{n,s} = Gamma((n-2s)/2) / (pi^{n/2} 2^{2s} Gamma(s)); finite for n > 2s."""

    n: int
    s: float
    value: float

    @classmethod
    def for_order(cls, n: int, s: float) -> "FreeKernelConstant":
        if not n > 2 * s:
            raise ValueError(f"free kernel constant needs n > 2s, got n={n}, s={s}")
        value = gamma_fn((n - 2 * s) / 2.0) / (
            math.pi ** (n / 2.0) * 2.0 ** (2 * s) * gamma_fn(s)
        )
        return cls(n=n, s=s, value=float(value))


def gns(n: int, s: float) -> float:
    return FreeKernelConstant.for_order(n, s).value


@dataclass(frozen=True)
class KernelSample:
    """Pointwise kernel value plus the estimated eigen-sum tail."""

    x: tuple[float, ...]
    y: tuple[float, ...]
    value: float
    truncation_bound: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("kernel sample is not finite")
        if self.truncation_bound < 0:
            raise ValueError("truncation bound must be nonnegative")


def free_kernel(x, y, n: int, s: float) -> float:
    """Free-space kernel g_{n,s} |x-y|^{2s-n}; coincident points rejected."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = float(np.linalg.norm(x - y))
    if d == 0.0:
        raise ValueError("free kernel is singular at coincident points")
    return gns(n, s) * d ** (2 * s - n)


def apply_fraclap(f: GridFunction, s: float, basis: SpectralBasis) -> GridFunction:
    """Multiplier action a_k -> lambda_k^s a_k, synthesized back to the grid."""
    if not 0.0 < s <= 1.0:
        raise ValueError(f"fractional order must lie in (0, 1], got {s}")
    field = analyze(f, basis)
    coeff = field.coefficients * basis.eigenvalue_grid**s
    return synthesize(SpectralField(basis, coeff), f.grid)


def apply_inverse(f: GridFunction, s: float, basis: SpectralBasis) -> GridFunction:
    """Multiplier action a_k -> lambda_k^{-s} a_k (the Green-kernel integral, spectrally).

    Linear by construction; positivity of the exact operator can surface as a
    small negative ringing on the truncation, which callers clamp via
    :func:`clamp_nonnegative` before taking fractional powers.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError(f"fractional order must lie in (0, 1], got {s}")
    field = analyze(f, basis)
    coeff = field.coefficients * basis.eigenvalue_grid ** (-s)
    return synthesize(SpectralField(basis, coeff), f.grid)


def clamp_nonnegative(
    f: GridFunction, warn_fraction: float = 1e-8, context: str = ""
) -> tuple[GridFunction, float]:
    """Zero out negative ringing; returns (clamped, removed L1 mass fraction).

    Warns when the clamped mass exceeds `warn_fraction` of the L1 norm: the
    exact inverse is positivity-preserving, so larger clamps indicate an
    under-resolved field.
    """
    values = f.values
    neg = values < 0.0
    if not np.any(neg):
        return f, 0.0
    total = float(np.sum(np.abs(values)))
    clipped = float(-np.sum(values[neg]))
    fraction = clipped / total if total > 0 else 0.0
    if fraction > warn_fraction:
        warnings.warn(
            f"clamped {fraction:.3e} of L1 mass to restore positivity"
            + (f" ({context})" if context else ""),
            stacklevel=2,
        )
    out = values.copy()
    out[neg] = 0.0
    return f.with_values(out), fraction


def resolvability_threshold(basis: SpectralBasis) -> float:
    """Shortest retained wavelength 2 pi / sqrt(lambda_max); kernels refuse below it."""
    return 2.0 * math.pi / math.sqrt(float(basis.eigenvalues[-1]))


_SHELL_EDGES = (0.5, 0.625, 0.75, 0.875)


class _KernelEvaluator:
    """Shared mode bookkeeping for pointwise eigen-sum kernels on one basis."""

    def __init__(self, basis: SpectralBasis, s: float):
        self.basis = basis
        self.s = s
        lam_flat = basis.eigenvalue_grid.ravel(order="C")
        self.mults = lam_flat ** (-s)
        cutoff = np.asarray(basis.cutoff, dtype=float)
        idx = np.indices(basis.cutoff).reshape(basis.domain.dim, -1) + 1
        frac = np.max(idx / cutoff[:, None], axis=0)
        self.shell_id = np.searchsorted(_SHELL_EDGES, frac, side="left")
        self.n_shells = len(_SHELL_EDGES) + 1

    def mode_values(self, x) -> np.ndarray:
        vals = None
        for axis in range(self.basis.domain.dim):
            s1d = self.basis.sine_samples(axis, [x[axis]])[0]
            vals = s1d if vals is None else np.multiply.outer(vals, s1d)
        return vals.ravel(order="C")

    def sum_with_tail(self, x, y) -> tuple[float, float]:
        # grouping (mx * my) first keeps the sum bitwise symmetric in x, y
        terms = self.mults * (self.mode_values(x) * self.mode_values(y))
        shell_sums = np.bincount(self.shell_id, weights=terms, minlength=self.n_shells)
        value = float(np.sum(shell_sums))
        return value, _tail_estimate(shell_sums, value)


def _tail_estimate(shell_sums: np.ndarray, value: float) -> float:
    """Eigen-sum tail estimate from the outer mode shells.

    The shell magnitudes of the oscillatory sum decay like a small power of
    the cutoff, so the continued tail is proportional to the outermost shell
    content; the max over the outer three shells guards against accidental
    cancellation in a single shell. The constant 8 was calibrated so the
    estimate dominated a 512-mode reference on 400 sampled interior pairs of
    the unit square with at least 2.5x margin. A heuristic, labeled as such
    wherever reported.
    """
    mags = np.abs(shell_sums[2:])
    tail = 8.0 * float(np.max(mags))
    return max(tail, abs(value) * 1e-15)


def _require_interior(basis: SpectralBasis, *points):
    for pt in points:
        if not basis.domain.contains(pt):
            raise ValueError(f"point {tuple(np.asarray(pt))} is not interior to the domain")


def green(x, y, basis: SpectralBasis, s: float | None = None) -> KernelSample:
    """Dirichlet Green function as the truncated eigen-sum, with tail estimate.

    Symmetric exactly (the summand is); refuses separations below the
    resolvability threshold, where the retained sum is meaningless.

    Pointwise convergence of the truncated sum needs 2s > (n-1)/2; at
    n = 3, s = 1/2 it is marginal and generic samples carry O(1) error bars
    (the reported bound covers them). Integrated quantities and the iterated
    kernel remain well convergent there.
    """
    s = basis.domain.s if s is None else s
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _require_interior(basis, x, y)
    d = float(np.linalg.norm(x - y))
    thr = resolvability_threshold(basis)
    if d < thr:
        raise UnresolvedSingularityError(
            f"separation {d:.3e} below resolvable spacing {thr:.3e}"
        )
    value, tail = _KernelEvaluator(basis, s).sum_with_tail(x, y)
    return KernelSample(tuple(x), tuple(y), value, tail)


def regular_part(x, y, basis: SpectralBasis, s: float | None = None) -> KernelSample:
    """Regular part H = free_kernel - green; smooth, symmetric, positive."""
    s = basis.domain.s if s is None else s
    g = green(x, y, basis, s)
    h = free_kernel(x, y, basis.domain.dim, s) - g.value
    return KernelSample(g.x, g.y, h, g.truncation_bound)


def rescaled_green(x, y, lam: float, center, basis: SpectralBasis, s: float | None = None) -> float:
    """lambda^{-(n-2s)} G(x/lambda + c, y/lambda + c); mapped points must be interior."""
    s = basis.domain.s if s is None else s
    if lam <= 0:
        raise ValueError("rescaling factor must be positive")
    center = np.asarray(center, dtype=float)
    xm = np.asarray(x, dtype=float) / lam + center
    ym = np.asarray(y, dtype=float) / lam + center
    if not (basis.domain.contains(xm) and basis.domain.contains(ym)):
        raise ValueError("rescaled points map outside the domain")
    n = basis.domain.dim
    return lam ** -(n - 2 * s) * green(xm, ym, basis, s).value


def _ray_exit_distance(center: np.ndarray, direction: np.ndarray, lo, hi) -> float:
    """Distance from center to the box boundary along direction."""
    t = math.inf
    for c, d, a, b in zip(center, direction, lo, hi, strict=True):
        if d > 1e-300:
            t = min(t, (b - c) / d)
        elif d < -1e-300:
            t = min(t, (a - c) / d)
    return t


def _unit_directions(n: int, n_ang: int) -> tuple[np.ndarray, np.ndarray]:
    """Angular nodes/weights for integrating over S^{n-1}, n <= 3."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        theta = (np.arange(n_ang) + 0.5) * (2.0 * math.pi / n_ang)
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return dirs, np.full(n_ang, 2.0 * math.pi / n_ang)
    mu, wmu = leggauss(max(n_ang // 2, 4))
    n_th = n_ang
    theta = (np.arange(n_th) + 0.5) * (2.0 * math.pi / n_th)
    wth = 2.0 * math.pi / n_th
    sin_phi = np.sqrt(1.0 - mu**2)
    dirs = np.stack(
        [
            np.outer(sin_phi, np.cos(theta)).ravel(),
            np.outer(sin_phi, np.sin(theta)).ravel(),
            np.repeat(mu, n_th),
        ],
        axis=1,
    )
    weights = np.repeat(wmu * wth, n_th)
    return dirs, weights


def _polar_box_integral(center, lo, hi, gamma: float, smooth, n_rad: int, n_ang: int) -> float:
    """int_box smooth(z) |z - center|^{-gamma} dz with the singularity absorbed.

    The radial substitution u = r^{n-gamma}/(n-gamma) is exact for the power
    factor, so plain Gauss-Legendre in u sees only the smooth remainder.
    """
    center = np.asarray(center, dtype=float)
    n = center.size
    m = n - gamma
    if m <= 0:
        raise RegimeError(f"singular exponent {gamma} is not integrable in {n}-d")
    dirs, wang = _unit_directions(n, n_ang)
    u_nodes, u_weights = leggauss(n_rad)
    total = 0.0
    pts = []
    scale = []
    for d, wa in zip(dirs, wang, strict=True):
        rmax = _ray_exit_distance(center, d, lo, hi)
        if not math.isfinite(rmax) or rmax <= 0:
            continue
        umax = rmax**m / m
        u = 0.5 * umax * (u_nodes + 1.0)
        r = (m * u) ** (1.0 / m)
        pts.append(center[None, :] + r[:, None] * d[None, :])
        scale.append(wa * 0.5 * umax * u_weights)
    if not pts:
        return 0.0
    pts = np.concatenate(pts, axis=0)
    scale = np.concatenate(scale)
    vals = smooth(pts)
    total = float(np.sum(scale * vals))
    return total


def _ring_regular_part(c, basis: SpectralBasis, s: float, radius: float) -> float:
    """Mean of H = free - G on a small resolvable ring around c (H is smooth there)."""
    c = np.asarray(c, dtype=float)
    n = basis.domain.dim
    dirs, _ = _unit_directions(n, 8)
    vals = []
    for d in dirs:
        z = c + radius * d
        if basis.domain.contains(z):
            try:
                vals.append(
                    free_kernel(z, c, n, s) - green(z, c, basis, s).value
                )
            except UnresolvedSingularityError:
                continue
    return float(np.mean(vals)) if vals else 0.0


def _sublattice_spread(weighted_cells: np.ndarray) -> float:
    """Error scale of a midpoint sum from the spread of its 2^n shifted sublattices."""
    n = weighted_cells.ndim
    subs = []
    for mask in range(2**n):
        sl = tuple(
            slice((mask >> axis) & 1, None, 2) for axis in range(n)
        )
        subs.append(float(np.sum(weighted_cells[sl])) * 2**n)
    return 0.5 * (max(subs) - min(subs))


def g_tilde(
    x,
    y,
    p: float,
    basis: SpectralBasis,
    s: float | None = None,
    grid: Grid | None = None,
    n_rad: int = 8,
    n_ang: int = 32,
) -> KernelSample:
    """Iterated kernel Gt(x, y) = int_Omega G(x, z) G^p(z, y) dz.

    Defined in the sub-Serrin regime (n - 2s) p < n with p >= 1, where G^p is
    integrable. Tensor midpoint rule globally, with polar-corrected patches of
    3^n cells around both singular points; the reported bound is the quadrature
    error estimate (sublattice spread plus patch refinement difference).
    """
    s = basis.domain.s if s is None else s
    n = basis.domain.dim
    if p < 1.0:
        raise RegimeError(f"iterated kernel requires p >= 1, got p={p}")
    if (n - 2 * s) * p >= n:
        raise RegimeError(
            f"integrability of G^p requires (n - 2s) p < n (sub-Serrin); "
            f"got p={p} >= {n / (n - 2 * s)}"
        )
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _require_interior(basis, x, y)
    if grid is None:
        grid = build_grid(basis.domain, tuple(2 * K for K in basis.cutoff))
    h = np.asarray(grid.spacing)
    thr = resolvability_threshold(basis)
    min_sep = max(thr, 4.0 * float(np.max(h)))
    if float(np.linalg.norm(x - y)) < min_sep:
        raise UnresolvedSingularityError(
            f"g_tilde needs separation >= {min_sep:.3e} between x and y"
        )

    g_const = gns(n, s)
    lam_pow = n - 2 * s

    def kernel_field(point) -> np.ndarray:
        ev = _KernelEvaluator(basis, s)
        coeff = (ev.mults * ev.mode_values(point)).reshape(basis.cutoff)
        vals = synthesize(SpectralField(basis, coeff), grid).values
        return np.maximum(vals, 0.0)

    gx_vals = kernel_field(x)
    gy_vals = kernel_field(y)

    def patch_box(c):
        idx = grid.nearest_node(c)
        lo = [max((j - 1) * hh, 0.0) for j, hh in zip(idx, grid.spacing, strict=True)]
        hi = [
            min((j + 2) * hh, L)
            for j, hh, L in zip(idx, grid.spacing, basis.domain.lengths, strict=True)
        ]
        mask = np.zeros(grid.shape, dtype=bool)
        sl = tuple(
            slice(max(j - 1, 0), min(j + 2, m))
            for j, m in zip(idx, grid.shape, strict=True)
        )
        mask[sl] = True
        return np.asarray(lo), np.asarray(hi), mask

    lo_y, hi_y, mask_y = patch_box(y)
    lo_x, hi_x, mask_x = patch_box(x)
    if np.any(mask_x & mask_y):
        raise UnresolvedSingularityError("singular patches of x and y overlap")

    cell = grid.cell_volume
    weighted = cell * gx_vals * gy_vals**p
    weighted[mask_y] = 0.0
    weighted[mask_x] = 0.0
    bulk = float(np.sum(weighted))
    bulk_err = _sublattice_spread(weighted)

    ring = max(thr * 1.1, 2.0 * float(np.max(h)))
    h_y = _ring_regular_part(y, basis, s, ring)
    h_x = _ring_regular_part(x, basis, s, ring)

    ev = _KernelEvaluator(basis, s)
    coeff_x = SpectralField(basis, (ev.mults * ev.mode_values(x)).reshape(basis.cutoff))
    coeff_y = SpectralField(basis, (ev.mults * ev.mode_values(y)).reshape(basis.cutoff))

    def smooth_near_y(pts):
        r = np.linalg.norm(pts - y[None, :], axis=1)
        local = np.maximum(g_const - h_y * r**lam_pow, 0.0) ** p
        gx_here = np.maximum(synthesize_at(coeff_x, pts), 0.0)
        return gx_here * local

    def smooth_near_x(pts):
        r = np.linalg.norm(pts - x[None, :], axis=1)
        local = np.maximum(g_const - h_x * r**lam_pow, 0.0)
        gy_here = np.maximum(synthesize_at(coeff_y, pts), 0.0)
        return local * gy_here**p

    def patches(nr, na):
        py = _polar_box_integral(y, lo_y, hi_y, lam_pow * p, smooth_near_y, nr, na)
        px = _polar_box_integral(x, lo_x, hi_x, lam_pow, smooth_near_x, nr, na)
        return py + px

    patch_fine = patches(n_rad, n_ang)
    patch_coarse = patches(max(n_rad // 2, 2), max(n_ang // 2, 4))
    value = bulk + patch_fine
    err = bulk_err + abs(patch_fine - patch_coarse)
    return KernelSample(tuple(x), tuple(y), value, err)
