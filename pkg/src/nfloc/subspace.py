"""Sample covariance and signal/noise subspace split."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SubspaceDecomposition:
    signal_basis: np.ndarray
    noise_basis: np.ndarray
    eigenvalues: np.ndarray  # descending
    degenerate: bool = False  # eigenvalues N and N+1 (nearly) coincide

    @property
    def projector(self) -> np.ndarray:
        Uw = self.noise_basis
        return Uw @ Uw.conj().T


def sample_covariance(Y: np.ndarray) -> np.ndarray:
    Y = np.asarray(Y)
    if Y.ndim != 2 or Y.shape[1] == 0:
        raise ValueError("snapshot matrix must be M x L with L >= 1")
    R = Y @ Y.conj().T / Y.shape[1]
    return (R + R.conj().T) / 2


def noise_subspace(R: np.ndarray, n_sources: int, herm_tol: float = 1e-10) -> SubspaceDecomposition:
    R = np.asarray(R)
    M = R.shape[0]
    if R.shape != (M, M):
        raise ValueError("covariance must be square")
    if not 1 <= n_sources < M:
        raise ValueError(f"need 1 <= n_sources < M, got n_sources={n_sources}, M={M}")
    scale = max(np.abs(R).max(), 1.0)
    if np.abs(R - R.conj().T).max() > herm_tol * scale:
        raise ValueError("covariance is not Hermitian")
    w, U = np.linalg.eigh((R + R.conj().T) / 2)
    # eigh is ascending; stable reversal keeps original index order on ties
    order = np.argsort(-w, kind="stable")
    w, U = np.clip(w[order], 0.0, None), U[:, order]
    N = n_sources
    gap = w[N - 1] - w[N]
    degenerate = bool(gap < 1e-12 * max(np.trace(R).real, np.finfo(float).tiny))
    return SubspaceDecomposition(U[:, :N], U[:, N:], w, degenerate)
