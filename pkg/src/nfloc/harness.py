"""Monte-Carlo RMSE sweeps, timing benchmark and experiment configuration."""
from __future__ import annotations

import csv
import json
import logging
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .array_model import ArrayConfig, SourcePosition, coupling_matrix
from .estimators import (
    PeakSearchError,
    SearchGrid,
    algorithm1,
    algorithm2,
    music_known_coupling,
)
from .signal_sim import (
    SimulationConfig,
    SourceTruth,
    generate_coupling,
    simulate_snapshots,
    trial_seed,
)
from .subspace import noise_subspace, sample_covariance

log = logging.getLogger(__name__)

METHODS = ("music", "alg1", "alg2")
MC_COLUMNS = ["method", "snr_db", "doa_true_deg", "range_true_wl", "rmse_doa_deg",
              "rmse_range_wl", "mean_iters", "trials_used"]
BENCH_COLUMNS = ["method", "doa_grid_points", "range_grid_points", "median_time_s",
                 "ratio_vs_music"]
#: abort a Monte-Carlo cell when more than this fraction of trials fail
MAX_FAILURE_FRACTION = 0.10
SPEED_OF_LIGHT = 299_792_458.0


class MonteCarloAbort(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    doas_deg: list[float] = field(default_factory=lambda: [30.0, 40.0, 50.0, 60.0])
    range_wl: float = 3.3
    snr_db: list[float] = field(default_factory=lambda: [0.0, 10.0, 20.0, 30.0])
    trials: int = 200
    snapshots: int = 200
    grid: SearchGrid | None = None
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    q_deg: float = 0.1
    max_iter: int = 30
    n_starts: int = 1
    master_seed: int = 0
    coupling_decay: tuple[float, float] = (0.3, 0.7)
    carrier_hz: float = 5e9
    # noise variance override; 0 emulates infinite SNR
    noise_var: float | None = None

    def __post_init__(self):
        if self.grid is None:
            self.grid = SearchGrid.for_array(self.array)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_db:
            raise ValueError("snr_db must be non-empty")
        if not self.methods:
            raise ValueError("methods must be non-empty")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods: {sorted(bad)}")
        if self.q_deg <= 0:
            raise ValueError("q_deg must be positive")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)} | {"seed"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        arr = ArrayConfig(**d.pop("array", {}))
        grid_d = dict(d.pop("grid", {}) or {})
        doa_range = (grid_d.pop("doa_start", 0.0), grid_d.pop("doa_stop", 90.0))
        grid = SearchGrid.for_array(
            arr, doa_step=grid_d.pop("doa_step", 0.1), range_step=grid_d.pop("range_step", 0.01),
            doa_range=doa_range)
        grid = replace(grid, **grid_d)
        if "seed" in d:
            d["master_seed"] = d.pop("seed")
        if "coupling_decay" in d:
            d["coupling_decay"] = tuple(d["coupling_decay"])
        return cls(array=arr, grid=grid, **d)

    def to_dict(self) -> dict:
        d = asdict(self)
        g = self.grid
        d["grid"] = {k: getattr(g, k) for k in (
            "doa_start", "doa_stop", "doa_step", "range_start", "range_stop", "range_step",
            "coarse_doa_step", "coarse_range_step", "refine_span")}
        d["coupling_decay"] = list(self.coupling_decay)
        return d


def load_config(path_or_profile: str | os.PathLike) -> ExperimentConfig:
    """Load a JSON config file, or a bundled profile by name (``example1``, ``example2``)."""
    p = Path(path_or_profile)
    if p.is_file():
        text = p.read_text()
    else:
        name = str(path_or_profile)
        res = resources.files("nfloc.profiles") / f"{name}.json"
        if os.sep in name or not res.is_file():
            raise FileNotFoundError(f"config file not found: {path_or_profile}")
        text = res.read_text()
    return ExperimentConfig.from_dict(json.loads(text))


@dataclass
class McResultRow:
    method: str
    snr_db: float
    doa_true: float
    range_true: float
    rmse_doa: float
    rmse_range: float
    mean_iterations: float
    mean_wall_time: float
    trials_used: int

    def csv_row(self) -> list[str]:
        return [self.method, repr(float(self.snr_db)), repr(float(self.doa_true)),
                repr(float(self.range_true)), repr(float(self.rmse_doa)),
                repr(float(self.rmse_range)), repr(float(self.mean_iterations)),
                str(self.trials_used)]


def rmse(estimates, truth) -> float:
    """Root mean square error over trials (rows) and sources (columns).

    ``estimates`` has shape (K, N) or (K,); ``truth`` broadcasts against it
    (length-N vector of true values, or a scalar).
    """
    est = np.asarray(estimates, dtype=float)
    if est.size == 0:
        raise ValueError("rmse of an empty estimate set")
    if est.ndim == 1:
        est = est[:, None]
    err = est - np.asarray(truth, dtype=float)
    return float(np.sqrt(np.mean(err**2)))


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("NFLOC_THREADS", "1") or 1)
    return max(1, int(threads))


def run_trial(cfg: ExperimentConfig, snr_idx: int, doa_idx: int, k: int,
              methods=None, cache: bool = True) -> dict:
    """One simulated dataset, estimated by every requested method.

    All methods see the same snapshots.  Returns ``{method: (doa, range,
    iterations, wall_time)}`` with ``None`` for a failed estimate.
    """
    methods = methods or cfg.methods
    rng = np.random.default_rng(trial_seed(cfg.master_seed, snr_idx, doa_idx, k))
    c = generate_coupling(cfg.array.coupling_support, rng, cfg.coupling_decay)
    src = SourceTruth(SourcePosition(cfg.doas_deg[doa_idx], cfg.range_wl), c)
    sim = SimulationConfig(cfg.array, [src], cfg.snapshots, cfg.snr_db[snr_idx], rng,
                           noise_var=cfg.noise_var)
    Y = simulate_snapshots(sim)
    Uw = noise_subspace(sample_covariance(Y), 1).noise_basis
    out = {}
    for m in methods:
        try:
            if m == "music":
                rec = music_known_coupling(cfg.array, Uw, coupling_matrix(cfg.array, c), cfg.grid,
                                           1, cache=cache)
            elif m == "alg1":
                rec = algorithm1(cfg.array, Uw, cfg.grid, 1, cache=cache)
            else:
                rec = algorithm2(cfg.array, Uw, cfg.grid, 1, cfg.q_deg, cfg.max_iter,
                                 n_starts=cfg.n_starts)
        except PeakSearchError as err:
            log.debug("trial %s failed for %s: %s", (snr_idx, doa_idx, k), m, err)
            out[m] = None
            continue
        (th, r), = rec.estimates
        out[m] = (th, r, rec.iterations, rec.wall_time)
    return out


def run_monte_carlo(cfg: ExperimentConfig, threads: int | None = None,
                    progress=None) -> list[McResultRow]:
    """RMSE of DOA and range for every (method, SNR, DOA) cell.

    Trial ``k`` of cell (snr, doa) is seeded from ``(master_seed, snr_idx,
    doa_idx, k)``, so the output does not depend on ``threads``.
    """
    threads = resolve_threads(threads)
    keys = [(si, di, k) for si in range(len(cfg.snr_db)) for di in range(len(cfg.doas_deg))
            for k in range(cfg.trials)]
    if threads == 1:
        results = [run_trial(cfg, *key) for key in keys]
    else:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda key: run_trial(cfg, *key), keys))
    by_key = dict(zip(keys, results))

    rows = []
    for m in cfg.methods:
        for si, snr in enumerate(cfg.snr_db):
            for di, doa in enumerate(cfg.doas_deg):
                trials = [by_key[(si, di, k)][m] for k in range(cfg.trials)]
                ok = [t for t in trials if t is not None]
                failed = len(trials) - len(ok)
                if failed > MAX_FAILURE_FRACTION * len(trials):
                    raise MonteCarloAbort(
                        f"{m} failed in {failed}/{len(trials)} trials at snr={snr} dB, doa={doa}")
                arr = np.array(ok, dtype=float)
                rows.append(McResultRow(
                    m, snr, doa, cfg.range_wl, rmse(arr[:, 0], doa), rmse(arr[:, 1], cfg.range_wl),
                    float(arr[:, 2].mean()), float(arr[:, 3].mean()), len(ok)))
                if progress:
                    progress(rows[-1])
    return rows


def write_mc_csv(rows: list[McResultRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(MC_COLUMNS)
    for row in rows:
        w.writerow(row.csv_row())


@dataclass
class TimingRow:
    method: str
    doa_grid_points: int
    range_grid_points: int
    median_time_s: float
    ratio_vs_music: float
    times: list[float] = field(default_factory=list, repr=False)


def run_timing(cfg: ExperimentConfig, repeats: int = 5, grid: SearchGrid | None = None
               ) -> list[TimingRow]:
    """Median single-trial wall time per method on one shared exhaustive grid.

    No steering vectors are cached between calls, so each run pays for its
    own grid evaluation.
    """
    grid = (grid or cfg.grid).exhaustive()
    cfg = replace(cfg, grid=grid)
    rng = np.random.default_rng(trial_seed(cfg.master_seed, 0, 0, 0))
    c = generate_coupling(cfg.array.coupling_support, rng, cfg.coupling_decay)
    src = SourceTruth(SourcePosition(cfg.doas_deg[0], cfg.range_wl), c)
    Y = simulate_snapshots(SimulationConfig(cfg.array, [src], cfg.snapshots, cfg.snr_db[0], rng,
                                            noise_var=cfg.noise_var))
    C = coupling_matrix(cfg.array, c)

    def once(method):
        t0 = time.perf_counter()
        Uw = noise_subspace(sample_covariance(Y), 1).noise_basis
        if method == "music":
            music_known_coupling(cfg.array, Uw, C, grid)
        elif method == "alg1":
            algorithm1(cfg.array, Uw, grid)
        else:
            algorithm2(cfg.array, Uw, grid, 1, cfg.q_deg, cfg.max_iter, n_starts=cfg.n_starts)
        return time.perf_counter() - t0

    times = {}
    for m in cfg.methods:
        once(m)  # warm-up
        times[m] = [once(m) for _ in range(max(repeats, 1))]
    medians = {m: statistics.median(t) for m, t in times.items()}
    ref = medians.get("music")
    nd, nr = grid.shape
    return [TimingRow(m, nd, nr, medians[m], medians[m] / ref if ref else float("nan"), times[m])
            for m in cfg.methods]


def write_bench_csv(rows: list[TimingRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([r.method, r.doa_grid_points, r.range_grid_points, repr(r.median_time_s),
                    repr(r.ratio_vs_music)])
