"""Snapshot simulation: random coupling, Gaussian sources and white noise."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .array_model import ArrayConfig, SourcePosition, coupling_matrix, exact_steering


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def trial_seed(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Seed for one trial, derived from the master seed and a tuple of integer keys.

    Independent of the order in which trials are executed.
    """
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))


def generate_coupling(P: int, seed=None, decay=(0.3, 0.7)) -> np.ndarray:
    """Random normalized coupling vector of length ``P``.

    ``c[0] = 1``; each further magnitude is the previous one times a factor
    drawn uniformly from ``decay``, with a uniform random phase.
    """
    if P < 1:
        raise ValueError("P must be >= 1")
    rng = make_rng(seed)
    c = np.ones(P, dtype=complex)
    mag = 1.0
    for p in range(1, P):
        mag *= rng.uniform(*decay)
        c[p] = mag * np.exp(2j * np.pi * rng.uniform())
    return c


@dataclass(frozen=True)
class SourceTruth:
    position: SourcePosition
    coupling: np.ndarray
    power: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.coupling, dtype=complex)
        if c.ndim != 1 or c.size == 0 or c[0] != 1:
            raise ValueError("coupling must be a normalized vector with first entry 1")
        object.__setattr__(self, "coupling", c)

    @property
    def doa(self) -> float:
        return self.position.doa

    @property
    def range(self) -> float:
        return self.position.range


@dataclass
class SimulationConfig:
    array: ArrayConfig
    sources: list[SourceTruth]
    snapshots: int = 200
    snr_db: float = 10.0
    seed: int | np.random.SeedSequence | None = 0
    noise_var: float | None = field(default=None)

    def __post_init__(self):
        if self.snapshots < 1:
            raise ValueError("snapshots must be >= 1")

    @property
    def sigma2(self) -> float:
        """Noise variance; SNR is referenced to unit source power per element."""
        if self.noise_var is not None:
            return float(self.noise_var)
        return float(10.0 ** (-self.snr_db / 10.0))


def coupled_steering(cfg: ArrayConfig, src: SourceTruth) -> np.ndarray:
    return coupling_matrix(cfg, src.coupling) @ exact_steering(cfg, src.doa, src.range)


def simulate_snapshots(cfg: SimulationConfig) -> np.ndarray:
    """Return the ``M x L`` snapshot matrix ``Y = sum_n C_n a_n s_n + W``."""
    arr = cfg.array
    for src in cfg.sources:
        src.position.validate(arr)
        if len(src.coupling) != arr.coupling_support:
            raise ValueError("coupling length does not match array coupling_support")
    rng = make_rng(cfg.seed)
    M, L = arr.num_elements, cfg.snapshots
    Y = np.zeros((M, L), dtype=complex)
    for src in cfg.sources:
        s = np.sqrt(src.power / 2) * (rng.standard_normal(L) + 1j * rng.standard_normal(L))
        Y += np.outer(coupled_steering(arr, src), s)
    sigma2 = cfg.sigma2
    noise = rng.standard_normal((M, L)) + 1j * rng.standard_normal((M, L))
    if sigma2 > 0:
        Y += np.sqrt(sigma2 / 2) * noise
    return Y


def write_snapshots_csv(dest, Y: np.ndarray) -> None:
    """One row per element, no header; snapshot ``t`` fills cells ``2t, 2t+1`` as ``re,im``.

    ``dest`` is a path or an open text file.
    """
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            return write_snapshots_csv(fh, Y)
    w = csv.writer(dest, lineterminator="\n")
    for row in np.asarray(Y):
        w.writerow([repr(float(v)) for z in row for v in (z.real, z.imag)])


def read_snapshots_csv(path) -> np.ndarray:
    rows = []
    with open(Path(path), newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            vals = np.array([float(v) for v in row])
            if vals.size % 2:
                raise ValueError("snapshot CSV rows must contain re,im pairs")
            rows.append(vals[0::2] + 1j * vals[1::2])
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"malformed snapshot CSV: {path}")
    return np.array(rows)
