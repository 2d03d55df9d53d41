"""Forward and backward diffusion path ensembles.

Paths follow Euler-Maruyama steps driven by the drift fields of a
:class:`~stochmech.schrodinger.DriftHistory`. Every Gaussian increment is a
pure function of ``(seed, direction, step, path index)``: it is read from a
Philox counter stream whose key encodes the step and whose counter encodes
the path block. Splitting the paths across threads therefore cannot change a
single bit of the result.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .fields import (
    FieldHistory,
    InvalidInputError,
    PhysicsParams,
    ScalarField,
    SpatialGrid,
    TimeGrid,
    integrate,
)
from .schrodinger import DriftHistory

log = logging.getLogger(__name__)

MIN_PATHS = 100
MAX_ESCAPED_FRACTION = 0.01
MIN_BIN_OCCUPANCY = 30
PATH_CHUNK = 8192
_BLOCK = 4  # Philox4x64 emits four words per counter value
_MASK64 = (1 << 64) - 1

Direction = Literal["forward", "backward"]


class EscapedPathsError(RuntimeError):
    """Too many paths left the spatial domain."""


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling parameters.

    ``threads`` only controls execution; it is deliberately excluded from
    equality and from exported metadata.
    """

    n_paths: int
    seed: int
    step_rule: str = "euler_maruyama"
    interpolation: str = "linear_in_x"
    threads: int = 1

    def __post_init__(self):
        if self.n_paths < MIN_PATHS:
            raise InvalidInputError(f"n_paths must be >= {MIN_PATHS}")
        if self.step_rule != "euler_maruyama":
            raise InvalidInputError(f"unsupported step rule {self.step_rule!r}")
        if self.interpolation != "linear_in_x":
            raise InvalidInputError(f"unsupported interpolation {self.interpolation!r}")
        if not 0 <= self.seed <= _MASK64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise InvalidInputError("threads must be positive")

    def __eq__(self, other):
        if not isinstance(other, SamplerConfig):
            return NotImplemented
        return (self.n_paths, self.seed, self.step_rule, self.interpolation) == (
            other.n_paths, other.seed, other.step_rule, other.interpolation)

    def __hash__(self):
        return hash((self.n_paths, self.seed, self.step_rule, self.interpolation))


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    grid: SpatialGrid
    tgrid: TimeGrid
    positions: np.ndarray  # (n_paths, n_nodes), forward time order
    direction: Direction
    config: SamplerConfig
    escaped: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.positions.shape[0]

    def marginal(self, k: int) -> np.ndarray:
        return self.positions[:, k]


# ---------------------------------------------------------------------------
# keyed random numbers
# ---------------------------------------------------------------------------

def _stream_key(seed: int, direction: Direction, step: int) -> int:
    # step -1 is the initial-position draw
    tag = 2 * (step + 1) + (1 if direction == "backward" else 0)
    return (seed & _MASK64) | (tag << 64)


def keyed_uniforms(seed: int, direction: Direction, step: int,
                   start: int, stop: int) -> np.ndarray:
    """Uniforms in (0, 1) for paths ``start <= i < stop`` at one step."""
    block0 = start // _BLOCK
    gen = np.random.Philox(counter=block0, key=_stream_key(seed, direction, step))
    raw = gen.random_raw(stop - block0 * _BLOCK)[start - block0 * _BLOCK:]
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def keyed_normals(seed: int, direction: Direction, step: int,
                  start: int, stop: int) -> np.ndarray:
    return ndtri(keyed_uniforms(seed, direction, step, start, stop))


def _chunks(n: int, threads: int) -> list[tuple[int, int]]:
    size = -(-n // threads)
    size = -(-size // _BLOCK) * _BLOCK
    return [(a, min(a + size, n)) for a in range(0, n, size)]


def _inverse_cdf(rho: ScalarField, u: np.ndarray) -> np.ndarray:
    x = rho.grid.x
    dens = np.maximum(rho.values, 0.0)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * rho.grid.dx)])
    cdf /= cdf[-1]
    return np.interp(u, cdf, x)


def _check_density(rho: ScalarField, grid: SpatialGrid, what: str) -> None:
    if rho.grid != grid:
        raise InvalidInputError(f"{what} lives on a different grid than the drifts")
    mass = integrate(rho)
    if abs(mass - 1.0) > 1e-6:
        raise InvalidInputError(f"{what} not normalized: mass defect {mass - 1.0:.3e}")


def interp_uniform(x: np.ndarray, x_min: float, dx: float, values: np.ndarray) -> np.ndarray:
    """Linear interpolation on a uniform grid, clamped to the end values."""
    n = values.shape[-1]
    s = (x - x_min) / dx
    i = np.clip(np.floor(s), 0, n - 2).astype(np.intp)
    w = np.clip(s - i, 0.0, 1.0)
    lo = values[i]
    return lo + w * (values[i + 1] - lo)


def _simulate(drift: np.ndarray, grid: SpatialGrid, init: np.ndarray, seed: int,
              direction: Direction, start: int, dt: float, noise: float,
              out: np.ndarray) -> None:
    """Fill ``out`` (paths start..start+len(init), every node) in place."""
    n_nodes = drift.shape[0]
    x_min, dx = grid.x_min, grid.dx
    stop = start + init.size
    if direction == "forward":
        out[:, 0] = init
        for k in range(n_nodes - 1):
            x = out[:, k]
            g = keyed_normals(seed, direction, k, start, stop)
            out[:, k + 1] = x + interp_uniform(x, x_min, dx, drift[k]) * dt + noise * g
    else:
        out[:, -1] = init
        for k in range(n_nodes - 1, 0, -1):
            x = out[:, k]
            g = keyed_normals(seed, direction, k, start, stop)
            out[:, k - 1] = x - interp_uniform(x, x_min, dx, drift[k]) * dt + noise * g


def _sample(drifts: DriftHistory, rho_init: ScalarField, params: PhysicsParams,
            cfg: SamplerConfig, direction: Direction) -> PathEnsemble:
    grid, tgrid = drifts.grid, drifts.tgrid
    _check_density(rho_init, grid, "initial density")
    field = drifts.b_plus if direction == "forward" else drifts.b_minus
    dt = tgrid.dt
    noise = np.sqrt(2.0 * params.nu * dt)

    # column-major so that each time slice is contiguous
    positions = np.empty((cfg.n_paths, tgrid.n_nodes), order="F")

    def work(bounds):
        a, b = bounds
        init = _inverse_cdf(rho_init, keyed_uniforms(cfg.seed, direction, -1, a, b))
        _simulate(field, grid, init, cfg.seed, direction, a, dt, noise, positions[a:b])

    chunks = _chunks(cfg.n_paths, cfg.threads)
    if cfg.threads == 1:
        for c in chunks:
            work(c)
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            list(pool.map(work, chunks))

    escaped = (positions.min(axis=1) < grid.x_min) | (positions.max(axis=1) > grid.x_max)
    frac = float(escaped.mean())
    if frac > MAX_ESCAPED_FRACTION:
        raise EscapedPathsError(f"{frac:.2%} of {direction} paths left the domain")
    if frac:
        log.info("%d %s paths escaped the domain", int(escaped.sum()), direction)
    positions.setflags(write=False)
    return PathEnsemble(grid, tgrid, positions, direction, cfg, escaped)


def sample_forward(drifts: DriftHistory, rho0: ScalarField, params: PhysicsParams,
                   cfg: SamplerConfig) -> PathEnsemble:
    """Draw x(t_0) from ``rho0`` and step x += b_plus dt + sqrt(2 nu dt) g."""
    return _sample(drifts, rho0, params, cfg, "forward")


def sample_backward(drifts: DriftHistory, rhoT: ScalarField, params: PhysicsParams,
                    cfg: SamplerConfig) -> PathEnsemble:
    """Draw x(t_end) from ``rhoT`` and step back x -= b_minus dt - sqrt(2 nu dt) g."""
    return _sample(drifts, rhoT, params, cfg, "backward")


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

FieldLike = FieldHistory | np.ndarray | Callable[[np.ndarray, float], np.ndarray]


def _along_paths(ens: PathEnsemble, f: FieldLike, k: int) -> np.ndarray:
    x = ens.positions[:, k]
    if callable(f) and not isinstance(f, (FieldHistory, np.ndarray)):
        return np.asarray(f(x, ens.tgrid.t[k]), dtype=float) * np.ones_like(x)
    values = f.values if isinstance(f, FieldHistory) else np.asarray(f)
    return interp_uniform(x, ens.grid.x_min, ens.grid.dx, values[k])


@dataclass(frozen=True, eq=False)
class BinnedEstimate:
    edges: np.ndarray
    centers: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    low_statistics: np.ndarray
    bin_index: np.ndarray  # bin of every path, -1 outside the binned range


def conditional_derivative_estimate(ens: PathEnsemble, f: FieldLike,
                                    sign: Literal["plus", "minus"], t_index: int,
                                    n_bins: int = 64, mass: float = 0.999) -> BinnedEstimate:
    """Binned Monte-Carlo estimate of the forward or backward derivative of f.

    Paths are binned by position at ``t_index`` into ``n_bins`` equal-width
    bins spanning the central ``mass`` fraction of the ensemble.
    """
    if ens.n_paths < 10_000:
        raise InvalidInputError("conditional estimates need at least 1e4 paths")
    if not 0 < t_index < ens.tgrid.n_steps:
        raise InvalidInputError("t_index must be an interior time node")
    dt = ens.tgrid.dt
    here = _along_paths(ens, f, t_index)
    if sign == "plus":
        incr = (_along_paths(ens, f, t_index + 1) - here) / dt
    elif sign == "minus":
        incr = (here - _along_paths(ens, f, t_index - 1)) / dt
    else:
        raise InvalidInputError(f"unknown sign {sign!r}")

    x = ens.positions[:, t_index]
    tail = 0.5 * (1.0 - mass)
    lo, hi = np.quantile(x, [tail, 1.0 - tail])
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
    idx = np.where((x < lo) | (x > hi), -1, idx)
    inside = idx >= 0
    counts = np.bincount(idx[inside], minlength=n_bins)
    sums = np.bincount(idx[inside], weights=incr[inside], minlength=n_bins)
    sq = np.bincount(idx[inside], weights=incr[inside] ** 2, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = sums / counts
        var = (sq - counts * mean**2) / (counts - 1)
        se = np.sqrt(np.maximum(var, 0.0) / counts)
    return BinnedEstimate(edges, 0.5 * (edges[1:] + edges[:-1]), mean, se, counts,
                          counts < MIN_BIN_OCCUPANCY, idx)


def ensemble_expectation(ens: PathEnsemble, f: FieldLike) -> tuple[np.ndarray, np.ndarray]:
    """Per-time-node sample mean of f along the paths, with standard errors."""
    mean = np.empty(ens.tgrid.n_nodes)
    se = np.empty(ens.tgrid.n_nodes)
    for k in range(ens.tgrid.n_nodes):
        vals = _along_paths(ens, f, k)
        mean[k] = vals.mean()
        se[k] = vals.std(ddof=1) / np.sqrt(ens.n_paths)
    return mean, se


def path_values(ens: PathEnsemble, f: FieldLike, start: int = 0,
                stop: int | None = None) -> np.ndarray:
    """f evaluated along paths ``start:stop``, shape (n, n_nodes)."""
    sub = ens if start == 0 and stop is None else PathEnsemble(
        ens.grid, ens.tgrid, ens.positions[start:stop], ens.direction, ens.config,
        ens.escaped[start:stop])
    return np.stack([_along_paths(sub, f, k) for k in range(ens.tgrid.n_nodes)], axis=1)


def path_chunks(n_paths: int, size: int = PATH_CHUNK):
    """Contiguous (start, stop) path ranges, so full path matrices never need copying."""
    return [(a, min(a + size, n_paths)) for a in range(0, n_paths, size)]


def grid_cdf(rho: ScalarField) -> Callable[[np.ndarray], np.ndarray]:
    """Piecewise-linear CDF of a grid density (trapezoidal cumulative mass)."""
    x = rho.grid.x
    dens = np.maximum(rho.values, 0.0)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * rho.grid.dx)])
    cdf /= cdf[-1]
    return lambda s: np.interp(s, x, cdf, left=0.0, right=1.0)


def ks_distance(samples: np.ndarray, rho: ScalarField) -> float:
    """Kolmogorov-Smirnov statistic of samples against a grid density."""
    return float(stats.kstest(samples, grid_cdf(rho)).statistic)


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    return float(stats.ks_2samp(a, b).statistic)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def write_ensemble(ens: PathEnsemble, stem: str | Path, scenario: str = "") -> tuple[Path, Path]:
    """Write ``<stem>.bin`` (little-endian float64, row=path) and ``<stem>.meta``."""
    stem = Path(stem)
    bin_path, meta_path = stem.with_suffix(".bin"), stem.with_suffix(".meta")
    np.ascontiguousarray(ens.positions, dtype="<f8").tofile(bin_path)
    meta = {
        "scenario": scenario,
        "direction": ens.direction,
        "seed": ens.config.seed,
        "n_paths": ens.n_paths,
        "n_nodes": ens.tgrid.n_nodes,
        "step_rule": ens.config.step_rule,
        "interpolation": ens.config.interpolation,
        "t_start": repr(ens.tgrid.t_start),
        "t_end": repr(ens.tgrid.t_end),
        "n_steps": ens.tgrid.n_steps,
        "x_min": repr(ens.grid.x_min),
        "x_max": repr(ens.grid.x_max),
        "n_points": ens.grid.n_points,
        "escaped": int(ens.escaped.sum()),
        "dtype": "float64-le",
        "layout": "row=path,column=time_node",
    }
    meta_path.write_text("".join(f"{k} = {v}\n" for k, v in meta.items()), encoding="utf-8")
    return bin_path, meta_path


def read_ensemble(stem: str | Path) -> tuple[np.ndarray, dict[str, str]]:
    stem = Path(stem)
    meta = {}
    for line in stem.with_suffix(".meta").read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    data = np.fromfile(stem.with_suffix(".bin"), dtype="<f8")
    return data.reshape(int(meta["n_paths"]), int(meta["n_nodes"])), meta
