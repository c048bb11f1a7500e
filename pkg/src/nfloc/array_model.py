"""Uniform linear array geometry, steering vectors and coupling structure.

All lengths are expressed in wavelengths (lambda == 1 internally).  Element
indices ``m`` are signed and stored in ascending order, so the reference
element ``m = 0`` sits in the centre row of every vector and matrix.

Steering functions accept scalar or array-valued angles/ranges and broadcast,
returning arrays of shape ``broadcast(theta, r).shape + (M,)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class FresnelRegionError(ValueError):
    """Raised when a source position is outside the valid near-field region."""


@dataclass(frozen=True)
class ArrayConfig:
    """ULA with ``num_elements`` sensors and banded coupling of width ``coupling_support``."""

    num_elements: int = 5
    element_spacing: float = 0.5
    wavelength: float = 1.0
    coupling_support: int = 3

    def __post_init__(self):
        M, P = self.num_elements, self.coupling_support
        if int(M) != M or M < 3 or M % 2 == 0:
            raise ValueError(f"num_elements must be an odd integer >= 3, got {M}")
        if int(P) != P or not 1 <= P < M:
            raise ValueError(f"coupling_support must satisfy 1 <= P < M, got P={P}, M={M}")
        if self.element_spacing <= 0 or self.wavelength <= 0:
            raise ValueError("element_spacing and wavelength must be positive")

    @property
    def indices(self) -> np.ndarray:
        half = (self.num_elements - 1) // 2
        return np.arange(-half, half + 1)

    @property
    def aperture(self) -> float:
        return (self.num_elements - 1) * self.element_spacing

    @property
    def fresnel_interval(self) -> tuple[float, float]:
        D, lam = self.aperture, self.wavelength
        return 0.62 * np.sqrt(D**3 / lam), 2 * D**2 / lam

    def in_fresnel_region(self, r0) -> bool:
        lo, hi = self.fresnel_interval
        return bool(np.all((np.asarray(r0) > lo) & (np.asarray(r0) < hi)))


@dataclass(frozen=True)
class SourcePosition:
    doa: float  # degrees
    range: float  # wavelengths

    def validate(self, cfg: ArrayConfig) -> None:
        if self.range <= cfg.aperture / 2:
            raise FresnelRegionError(
                f"range {self.range} is inside the aperture radius {cfg.aperture / 2}")
        if not cfg.in_fresnel_region(self.range):
            lo, hi = cfg.fresnel_interval
            raise FresnelRegionError(
                f"range {self.range} outside Fresnel interval ({lo:.4f}, {hi:.4f})")


def element_distance(cfg: ArrayConfig, doa, r0, m=None):
    """Distance from a source at ``(doa, r0)`` to element(s) ``m``.

    With ``m=None`` the distances to all elements are returned along a new
    trailing axis.
    """
    m = cfg.indices if m is None else np.asarray(m)
    theta = np.deg2rad(np.asarray(doa, dtype=float))
    r0 = np.asarray(r0, dtype=float)
    if np.ndim(m):
        theta, r0 = theta[..., None], r0[..., None]
    md = np.asarray(m) * cfg.element_spacing
    radicand = r0**2 + md**2 - 2 * md * r0 * np.cos(theta)
    if np.any(radicand <= 0):
        raise FresnelRegionError("non-positive squared distance; source coincides with an element")
    return np.sqrt(radicand)


def exact_steering(cfg: ArrayConfig, doa, r0) -> np.ndarray:
    """Spherical-wave steering vector with amplitude ratio and exact phase."""
    rm = element_distance(cfg, doa, r0)
    r0 = np.asarray(r0, dtype=float)[..., None]
    a = (r0 / rm) * np.exp(-2j * np.pi / cfg.wavelength * (rm - r0))
    # Reference element is exactly 1 regardless of rounding in the sqrt.
    a[..., (cfg.num_elements - 1) // 2] = 1.0
    return a


def phase_coefficients(cfg: ArrayConfig, doa, r0=np.inf):
    """Linear and quadratic phase coefficients of the second-order expansion.

    Returns ``(lin, quad)`` such that the approximated entry is
    ``exp(1j * (lin * m + quad * m**2))`` and agrees in phase with
    :func:`exact_steering` to second order in ``m``.
    """
    theta = np.deg2rad(np.asarray(doa, dtype=float))
    k = 2 * np.pi / cfg.wavelength
    d = cfg.element_spacing
    lin = k * d * np.cos(theta)
    quad = -np.pi * d**2 / (cfg.wavelength * np.asarray(r0, dtype=float)) * np.sin(theta) ** 2
    return lin, quad


def fresnel_steering(cfg: ArrayConfig, doa, r0) -> np.ndarray:
    lin, quad = phase_coefficients(cfg, doa, r0)
    m = cfg.indices
    lin, quad = np.broadcast_arrays(lin, quad)
    return np.exp(1j * (lin[..., None] * m + quad[..., None] * m**2))


def farfield_steering(cfg: ArrayConfig, doa) -> np.ndarray:
    lin, _ = phase_coefficients(cfg, doa)
    return np.exp(1j * np.asarray(lin)[..., None] * cfg.indices)


def selection_matrices(cfg: ArrayConfig) -> np.ndarray:
    """Stack of ``P`` binary ``M x M`` matrices; ``E[p]`` marks ``|i - j| == p``."""
    m = cfg.indices
    sep = np.abs(m[:, None] - m[None, :])
    return np.stack([(sep == p).astype(float) for p in range(cfg.coupling_support)])


def coupling_matrix(cfg: ArrayConfig, c) -> np.ndarray:
    """Symmetric banded Toeplitz matrix with first column ``[c, 0, ..., 0]``."""
    c = np.asarray(c, dtype=complex)
    if c.ndim != 1 or len(c) != cfg.coupling_support:
        raise ValueError(f"expected coupling vector of length {cfg.coupling_support}, got shape {c.shape}")
    M = cfg.num_elements
    sep = np.abs(np.arange(M)[:, None] - np.arange(M)[None, :])
    C = np.zeros((M, M), dtype=complex)
    band = sep < len(c)
    C[band] = c[sep[band]]
    return C


def transform_matrix(steering: np.ndarray, selections: np.ndarray) -> np.ndarray:
    """Columns ``E_p @ a``; broadcasts over leading axes of ``steering``.

    Returns shape ``steering.shape[:-1] + (M, P)`` so that ``X @ c == C(c) @ a``.
    """
    steering = np.asarray(steering)
    if steering.shape[-1] != selections.shape[-1]:
        raise ValueError("steering length does not match selection matrices")
    return np.einsum("pij,...j->...ip", selections, steering)
