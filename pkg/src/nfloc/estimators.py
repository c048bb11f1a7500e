"""Grid-search estimators: known-coupling MUSIC, 2D rank reduction and the
alternating 1D rank-reduction search.

Every spectrum here is a reciprocal quadratic form in the noise subspace, so
the kernels share one layout: steering vectors on the grid are mapped through
``U_w^H`` first and only the small ``(M - N)``-row projections are kept.
"""
from __future__ import annotations

import functools
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .array_model import (
    ArrayConfig,
    exact_steering,
    farfield_steering,
    selection_matrices,
)

#: relative ridge added to Omega before inversion
RIDGE = 1e-12
#: spectrum value reported when a denominator vanishes
CLAMP_VALUE = 1e18
_CHUNK_NODES = 1 << 15


class PeakSearchError(RuntimeError):
    """Fewer local maxima than requested sources."""

    def __init__(self, msg, found=()):
        super().__init__(msg)
        self.found = list(found)


def _axis(start: float, stop: float, step: float) -> np.ndarray:
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 10)


@dataclass(frozen=True)
class SearchGrid:
    """Rectangular DOA (degrees) x range (wavelengths) grid."""

    doa_start: float = 0.0
    doa_stop: float = 90.0
    doa_step: float = 0.1
    range_start: float = 1.76
    range_stop: float = 7.99
    range_step: float = 0.01
    # two-stage 2D search: coarse steps, or None for an exhaustive fine search
    coarse_doa_step: float | None = None
    coarse_range_step: float | None = None
    # fine refinement covers this many coarse steps either side of a coarse peak
    refine_span: int = 3

    def __post_init__(self):
        if self.doa_step <= 0 or self.range_step <= 0:
            raise ValueError("grid steps must be positive")
        if len(self.doas) < 2 or len(self.ranges) < 2:
            raise ValueError("grid needs at least two points per axis")

    @classmethod
    def for_array(cls, cfg: ArrayConfig, doa_step=0.1, range_step=0.01,
                  doa_range=(0.0, 90.0), **kw) -> "SearchGrid":
        """Grid aligned to multiples of ``range_step`` strictly inside the Fresnel interval."""
        lo, hi = cfg.fresnel_interval
        r_start = np.floor(lo / range_step + 1e-9) * range_step + range_step
        r_stop = np.ceil(hi / range_step - 1e-9) * range_step - range_step
        return cls(doa_range[0], doa_range[1], doa_step,
                   round(float(r_start), 10), round(float(r_stop), 10), range_step, **kw)

    @functools.cached_property
    def doas(self) -> np.ndarray:
        return _axis(self.doa_start, self.doa_stop, self.doa_step)

    @functools.cached_property
    def ranges(self) -> np.ndarray:
        return _axis(self.range_start, self.range_stop, self.range_step)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.doas), len(self.ranges)

    @property
    def two_stage(self) -> bool:
        return self.coarse_doa_step is not None and self.coarse_range_step is not None

    def coarse(self) -> "SearchGrid":
        return replace(self, doa_step=self.coarse_doa_step, range_step=self.coarse_range_step,
                       coarse_doa_step=None, coarse_range_step=None)

    def exhaustive(self) -> "SearchGrid":
        return replace(self, coarse_doa_step=None, coarse_range_step=None)

    def validate(self, cfg: ArrayConfig, doa_domain=(-90.0, 90.0)) -> None:
        if self.doas[0] < doa_domain[0] or self.doas[-1] > doa_domain[1]:
            raise ValueError("DOA grid outside the configured domain")
        if not cfg.in_fresnel_region(self.ranges):
            raise ValueError("range grid leaves the Fresnel interval")


@dataclass
class EstimateRecord:
    estimates: list[tuple[float, float]]
    peak_values: list[float]
    iterations: int = 0
    converged: bool = True
    wall_time: float = 0.0
    clamped: bool = False
    method: str = ""
    grid_points: tuple[int, int] = (0, 0)
    history: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# spectrum kernels


def _hermitian_det(A: np.ndarray) -> np.ndarray:
    n = A.shape[-1]
    if n == 1:
        return A[..., 0, 0].real
    if n == 2:
        return (A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]).real
    if n == 3:
        a, b, c = A[..., 0, 0], A[..., 0, 1], A[..., 0, 2]
        d, e, f = A[..., 1, 0], A[..., 1, 1], A[..., 1, 2]
        g, h, i = A[..., 2, 0], A[..., 2, 1], A[..., 2, 2]
        return (a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)).real
    return np.linalg.det(A).real


def first_diag_of_inverse(omega: np.ndarray, ridge: float = RIDGE):
    """``e1^H inv(Omega) e1`` for a stack of Hermitian PSD matrices.

    For ``P > 1`` a ridge ``ridge * trace(Omega) / P`` is added first.  Returns
    ``(values, clamped)`` where clamped entries were numerically singular.
    """
    P = omega.shape[-1]
    if P == 1:
        # scalar case needs no ridge; 1 / Omega is exact
        den = omega[..., 0, 0].real
        num = np.ones_like(den)
    else:
        tr = np.trace(omega, axis1=-2, axis2=-1).real
        reg = omega + (ridge * tr / P)[..., None, None] * np.eye(P)
        den, num = _hermitian_det(reg), _hermitian_det(reg[..., 1:, 1:])
    bad = ~(den > np.finfo(float).tiny * np.maximum(num, 1.0)) | ~np.isfinite(den)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(bad, CLAMP_VALUE, num / den)
    vals = np.minimum(vals, CLAMP_VALUE)
    return vals, bad | (vals >= CLAMP_VALUE)


def _noise_weights(Uw: np.ndarray, selections: np.ndarray) -> np.ndarray:
    """``U_w^H E_p`` stacked over p: shape (P, M - N, M)."""
    return np.einsum("mk,pmj->pkj", Uw.conj(), selections)


def rank_reduced_from_steering(Uw: np.ndarray, steering: np.ndarray, selections: np.ndarray):
    """Rank-reduced spectrum for an arbitrary stack of steering vectors."""
    W = _noise_weights(Uw, selections)
    flat = steering.reshape(-1, steering.shape[-1])
    vals = np.empty(flat.shape[0])
    clamped = np.zeros(flat.shape[0], dtype=bool)
    for s in range(0, flat.shape[0], _CHUNK_NODES):
        Z = np.einsum("pkj,nj->nkp", W, flat[s:s + _CHUNK_NODES])
        omega = np.einsum("nkp,nkq->npq", Z.conj(), Z)
        vals[s:s + _CHUNK_NODES], clamped[s:s + _CHUNK_NODES] = first_diag_of_inverse(omega)
    return vals.reshape(steering.shape[:-1]), clamped.reshape(steering.shape[:-1])


def music_from_steering(Uw: np.ndarray, steering: np.ndarray, C: np.ndarray):
    V = Uw.conj().T @ C
    flat = steering.reshape(-1, steering.shape[-1])
    den = np.empty(flat.shape[0])
    for s in range(0, flat.shape[0], _CHUNK_NODES):
        z = flat[s:s + _CHUNK_NODES] @ V.T
        den[s:s + _CHUNK_NODES] = np.einsum("nk,nk->n", z.conj(), z).real
    bad = den < 1e-18
    vals = np.where(bad, CLAMP_VALUE, 1.0 / np.maximum(den, 1e-18))
    return vals.reshape(steering.shape[:-1]), bad.reshape(steering.shape[:-1])


def grid_steering(cfg: ArrayConfig, doas, ranges) -> np.ndarray:
    """Exact steering vectors on the ``doas x ranges`` mesh, shape (nd, nr, M)."""
    return exact_steering(cfg, np.asarray(doas)[:, None], np.asarray(ranges)[None, :])


@functools.lru_cache(maxsize=4)
def _cached_steering(cfg: ArrayConfig, doas: tuple, ranges: tuple) -> np.ndarray:
    out = grid_steering(cfg, np.array(doas), np.array(ranges))
    out.setflags(write=False)
    return out


def _steering(cfg, doas, ranges, cache):
    if cache:
        return _cached_steering(cfg, tuple(doas), tuple(ranges))
    return grid_steering(cfg, doas, ranges)


def rank_reduced_value(cfg: ArrayConfig, Uw: np.ndarray, doa, r0) -> np.ndarray:
    """``e1^H inv(Omega(doa, r0)) e1`` with Omega built from the exact model."""
    a = exact_steering(cfg, doa, r0)
    vals, _ = rank_reduced_from_steering(Uw, a, selection_matrices(cfg))
    return vals


def rank_reduced_spectrum(cfg, Uw, doas, ranges, cache=False):
    A = _steering(cfg, doas, ranges, cache)
    return rank_reduced_from_steering(Uw, A, selection_matrices(cfg))


def music_spectrum_known_coupling(cfg, Uw, C, doas, ranges, cache=False):
    """Near-field MUSIC spectrum ``1 / (a^H C^H U_w U_w^H C a)`` on a mesh."""
    A = _steering(cfg, doas, ranges, cache)
    return music_from_steering(Uw, A, np.asarray(C))


def initial_doa_spectrum(cfg: ArrayConfig, Uw: np.ndarray, doas) -> np.ndarray:
    """Rank-reduced spectrum over DOA using the plane-wave model."""
    g = farfield_steering(cfg, np.asarray(doas))
    vals, _ = rank_reduced_from_steering(Uw, g, selection_matrices(cfg))
    return vals


def initial_doa(cfg: ArrayConfig, Uw: np.ndarray, doas, n_sources: int = 1) -> list[float]:
    doas = np.asarray(doas)
    spec = initial_doa_spectrum(cfg, Uw, doas)
    return [float(doas[i]) for i in find_peaks(spec, n_sources)]


# ---------------------------------------------------------------------------
# peak picking


def find_peaks(spectrum: np.ndarray, n: int) -> list:
    """Indices of the ``n`` largest local maxima of a 1D or 2D array.

    A node is a local maximum when it is strictly larger than its neighbours
    with lower index along each axis and no smaller than those with higher
    index, so on a plateau the first node wins.  Neighbourhoods are the 2
    (1D) or 4 (2D) axis-adjacent nodes; boundary nodes use only the ones
    that exist.  Results are ordered by descending value, ties by lower
    (flat) index.  1D results are ints, 2D results are ``(i, j)`` tuples.
    """
    S = np.asarray(spectrum, dtype=float)
    if S.size == 0:
        raise PeakSearchError("empty spectrum")
    if S.ndim not in (1, 2):
        raise ValueError("spectrum must be 1D or 2D")
    mask = np.ones(S.shape, dtype=bool)
    for ax in range(S.ndim):
        n_ax = S.shape[ax]
        if n_ax < 2:
            continue
        lo = [slice(None)] * S.ndim
        hi = [slice(None)] * S.ndim
        lo[ax], hi[ax] = slice(1, None), slice(None, -1)
        # compare with predecessor (strict) and successor (non-strict)
        mask[tuple(lo)] &= S[tuple(lo)] > S[tuple(hi)]
        mask[tuple(hi)] &= S[tuple(hi)] >= S[tuple(lo)]
    flat = np.flatnonzero(mask.ravel())
    order = flat[np.lexsort((flat, -S.ravel()[flat]))]
    found = [np.unravel_index(i, S.shape) for i in order]
    found = [int(f[0]) if S.ndim == 1 else (int(f[0]), int(f[1])) for f in found]
    if len(found) < n:
        raise PeakSearchError(f"found {len(found)} local maxima, need {n}: {found}", found)
    return found[:n]


# ---------------------------------------------------------------------------
# estimators


def _window(axis: np.ndarray, centre: float, half_width: float) -> np.ndarray:
    sel = np.abs(axis - centre) <= half_width + 1e-9
    return axis[sel]


def _grid_search_2d(spectrum_fn, grid: SearchGrid, n_sources: int):
    """Exhaustive or coarse-to-fine 2D peak search.

    ``spectrum_fn(doas, ranges)`` must return ``(values, clamped)``.
    """
    if not grid.two_stage:
        S, clamped = spectrum_fn(grid.doas, grid.ranges)
        peaks = find_peaks(S, n_sources)
        est = [(float(grid.doas[i]), float(grid.ranges[j])) for i, j in peaks]
        return est, [float(S[p]) for p in peaks], bool(clamped[tuple(np.array(peaks).T)].any())

    coarse = grid.coarse()
    S, _ = spectrum_fn(coarse.doas, coarse.ranges)
    est, vals, any_clamped = [], [], False
    for i, j in find_peaks(S, n_sources):
        doas = _window(grid.doas, coarse.doas[i], grid.refine_span * coarse.doa_step)
        ranges = _window(grid.ranges, coarse.ranges[j], grid.refine_span * coarse.range_step)
        F, clamped = spectrum_fn(doas, ranges)
        k, l = np.unravel_index(np.argmax(F), F.shape)
        est.append((float(doas[k]), float(ranges[l])))
        vals.append(float(F[k, l]))
        any_clamped |= bool(clamped[k, l])
    return est, vals, any_clamped


def music_known_coupling(cfg: ArrayConfig, Uw: np.ndarray, C: np.ndarray, grid: SearchGrid,
                         n_sources: int = 1, cache: bool = False) -> EstimateRecord:
    """Baseline: MUSIC with the true coupling matrix supplied."""
    t0 = time.perf_counter()
    est, vals, clamped = _grid_search_2d(
        lambda d, r: music_spectrum_known_coupling(cfg, Uw, C, d, r, cache), grid, n_sources)
    return EstimateRecord(est, vals, 0, True, time.perf_counter() - t0, clamped,
                          "music", grid.shape)


def algorithm1(cfg: ArrayConfig, Uw: np.ndarray, grid: SearchGrid, n_sources: int = 1,
               cache: bool = False) -> EstimateRecord:
    """Joint 2D search of the rank-reduced spectrum; coupling never estimated."""
    t0 = time.perf_counter()
    est, vals, clamped = _grid_search_2d(
        lambda d, r: rank_reduced_spectrum(cfg, Uw, d, r, cache), grid, n_sources)
    return EstimateRecord(est, vals, 0, True, time.perf_counter() - t0, clamped,
                          "alg1", grid.shape)


def _doa_cells(doas: np.ndarray, centres: list[float], n: int) -> np.ndarray:
    """Boolean mask of DOA nodes closer to ``centres[n]`` than to any other centre."""
    if len(centres) == 1:
        return np.ones(len(doas), dtype=bool)
    dist = np.abs(doas[:, None] - np.asarray(centres)[None, :])
    return np.argmin(dist, axis=1) == n


def _alternate(cfg, Uw, E, theta, doas, ranges, q, max_iter):
    """Alternating range/DOA refinement from ``theta``; DOA restricted to ``doas``."""
    path = [theta]
    converged = False
    for it in range(1, max_iter + 1):
        rv, _ = rank_reduced_from_steering(Uw, exact_steering(cfg, theta, ranges), E)
        r_hat = float(ranges[np.argmax(rv)])
        dv, dc = rank_reduced_from_steering(Uw, exact_steering(cfg, doas, r_hat), E)
        k = int(np.argmax(dv))
        new_theta = float(doas[k])
        path.append(new_theta)
        # margin keeps a full grid step equal to q from counting as converged
        converged = abs(new_theta - theta) < q * (1 - 1e-9)
        theta = new_theta
        if converged:
            break
    return theta, r_hat, float(dv[k]), bool(dc[k]), it, converged, path


def algorithm2(cfg: ArrayConfig, Uw: np.ndarray, grid: SearchGrid, n_sources: int = 1,
               q: float = 0.1, max_iter: int = 30, n_starts: int = 1) -> EstimateRecord:
    """Plane-wave DOA initialisation followed by alternating 1D range/DOA searches.

    Iteration stops once successive DOA estimates differ by less than ``q``
    degrees or after ``max_iter`` range+DOA passes.  With several sources
    each one is refined on its own share of the DOA axis.

    ``n_starts > 1`` (single source only) restarts the refinement from the
    next-highest peaks of the initial DOA spectrum and keeps the result with
    the largest spectrum value.  The default of 1 is the plain algorithm.
    """
    if q <= 0 or max_iter < 1:
        raise ValueError("need q > 0 and max_iter >= 1")
    if n_starts < 1 or (n_starts > 1 and n_sources != 1):
        raise ValueError("n_starts > 1 is only supported for a single source")
    t0 = time.perf_counter()
    E = selection_matrices(cfg)
    doas, ranges = grid.doas, grid.ranges

    if n_starts > 1:
        spec = initial_doa_spectrum(cfg, Uw, doas)
        try:
            peaks = find_peaks(spec, n_starts)
        except PeakSearchError as err:
            if not err.found:
                raise
            peaks = err.found
        runs = [_alternate(cfg, Uw, E, float(doas[i]), doas, ranges, q, max_iter) for i in peaks]
        best = max(runs, key=lambda run: run[2])
        theta, r_hat, val, clamped, _, converged, _ = best
        return EstimateRecord([(theta, r_hat)], [val], sum(run[4] for run in runs), converged,
                              time.perf_counter() - t0, clamped, "alg2", grid.shape,
                              [run[6] for run in runs])

    init = initial_doa(cfg, Uw, doas, n_sources)
    estimates, values, history = [], [], []
    total_iters, all_converged, any_clamped = 0, True, False
    for n, theta in enumerate(init):
        cand = doas[_doa_cells(doas, init, n)]
        theta, r_hat, val, clamped, it, converged, path = _alternate(
            cfg, Uw, E, theta, cand, ranges, q, max_iter)
        estimates.append((theta, r_hat))
        values.append(val)
        any_clamped |= clamped
        total_iters = max(total_iters, it)
        all_converged &= converged
        history.append(path)
    return EstimateRecord(estimates, values, total_iters, all_converged,
                          time.perf_counter() - t0, any_clamped, "alg2", grid.shape, history)
