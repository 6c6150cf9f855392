"""Exact fractional Brownian motion samplers on uniform grids.

Two samplers are provided. ``sample_cholesky`` factors the full covariance
matrix and is kept as a reference oracle for small grids. ``sample_circulant``
embeds the stationary increment covariance in a circulant matrix and uses the
FFT; it is the production path.

Gaussian variates for path ``i`` come from a Philox stream keyed by
``(seed, i)``, so a batch is bit-identical whatever the number of worker
threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from ._config import n_threads
from .exceptions import DomainError, FactorizationError, EmbeddingError

CHOLESKY_MAX_STEPS = 4096
EIGEN_TOL = -1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * t_end / n_steps`` on ``[0, t_end]``."""

    t_end: float
    n_steps: int

    def __post_init__(self):
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise DomainError(f"t_end must be positive and finite, got {self.t_end}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise DomainError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "t_end", float(self.t_end))

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def __len__(self):
        return self.n_steps + 1


@dataclass(frozen=True)
class FbmBatch:
    """A set of fBm paths sharing one grid and one Hurst parameter.

    ``paths`` has shape ``(n_paths, n_steps + 1)`` and every row starts at 0.
    """

    grid: TimeGrid
    hurst: float
    paths: np.ndarray = field(repr=False)
    method: str
    seed: int

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    def increments(self) -> np.ndarray:
        return np.diff(self.paths, axis=1)


def check_hurst(h, *, strict=False):
    """Validate a Hurst parameter. ``strict`` additionally requires ``h > 1/2``."""
    h = float(h)
    if not 0.0 < h < 1.0:
        raise DomainError(f"Hurst parameter must lie in (0, 1), got {h}")
    if strict and h <= 0.5:
        raise DomainError(
            f"Hurst parameter must satisfy H > 1/2 for Young integration, got {h}"
        )
    return h


def _check_seed(seed):
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def covariance(s, t, h):
    """fBm covariance ``0.5 * (t^2H + s^2H - |t - s|^2H)``; vectorised."""
    h = check_hurst(h)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("covariance is defined for nonnegative times only")
    two_h = 2.0 * h
    out = 0.5 * (t**two_h + s**two_h - np.abs(t - s) ** two_h)
    return float(out) if out.ndim == 0 else out


def increment_autocovariance(k, h, dt=1.0):
    """Autocovariance of fBm increments at integer lag ``k`` for spacing ``dt``."""
    k = np.abs(np.asarray(k, dtype=float))
    two_h = 2.0 * h
    gamma = 0.5 * ((k + 1) ** two_h + np.abs(k - 1) ** two_h - 2.0 * k**two_h)
    return gamma * dt**two_h


def path_generator(seed, index):
    """Counter-based generator for path ``index`` of a batch seeded by ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def _standard_normals(seed, n_paths, width):
    """Row ``i`` holds ``width`` N(0, 1) draws from ``path_generator(seed, i)``."""
    out = np.empty((n_paths, width))

    def fill(rows):
        for i in rows:
            out[i] = path_generator(seed, i).standard_normal(width)

    workers = min(n_threads(), n_paths)
    if workers <= 1:
        fill(range(n_paths))
    else:
        chunks = np.array_split(np.arange(n_paths), workers)
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(fill, chunks))
    return out


def _validate_request(grid, h, n_paths, seed):
    if not isinstance(grid, TimeGrid):
        raise TypeError("grid must be a TimeGrid")
    h = check_hurst(h)
    if int(n_paths) < 1:
        raise DomainError(f"n_paths must be >= 1, got {n_paths}")
    return h, int(n_paths), _check_seed(seed)


def covariance_matrix(grid, h):
    """Covariance of ``(B_{t_1}, ..., B_{t_n})``, the origin excluded."""
    t = grid.nodes[1:]
    return covariance(t[:, None], t[None, :], h)


def sample_cholesky(grid, h, n_paths, seed):
    """Sample fBm by Cholesky factorisation of the full covariance matrix.

    Cost is cubic in ``grid.n_steps`` which is capped at 4096.
    """
    h, n_paths, seed = _validate_request(grid, h, n_paths, seed)
    if grid.n_steps > CHOLESKY_MAX_STEPS:
        raise DomainError(
            f"cholesky sampler is limited to n_steps <= {CHOLESKY_MAX_STEPS}; "
            "use the circulant sampler for larger grids"
        )
    cov = covariance_matrix(grid, h)
    lower, info = lapack.dpotrf(cov, lower=1, clean=1)
    if info > 0:
        raise FactorizationError(
            f"covariance matrix is not positive definite: leading minor of order "
            f"{info} failed (pivot at t={grid.nodes[info]:.6g})",
            pivot=int(info),
        )
    z = _standard_normals(seed, n_paths, grid.n_steps)
    paths = np.zeros((n_paths, grid.n_steps + 1))
    paths[:, 1:] = z @ lower.T
    return FbmBatch(grid, h, paths, "cholesky", seed)


def circulant_eigenvalues(n, h):
    """Eigenvalues of the circulant embedding of unit-spacing fGn of length ``n``.

    The first row is ``[g(0), ..., g(n), g(n-1), ..., g(1)]`` (size ``2n``).
    """
    lags = np.arange(n + 1)
    g = increment_autocovariance(lags, h)
    row = np.concatenate([g, g[-2:0:-1]])
    return np.fft.fft(row).real


def sample_circulant(grid, h, n_paths, seed):
    """Sample fBm exactly via circulant embedding of the increment covariance.

    Raises ``EmbeddingError`` if an embedding eigenvalue is below ``-1e-12``;
    the remedy is to double the grid, never to truncate.
    """
    h, n_paths, seed = _validate_request(grid, h, n_paths, seed)
    n = grid.n_steps
    m = 2 * n
    lam = circulant_eigenvalues(n, h)
    if lam.min() < EIGEN_TOL:
        raise EmbeddingError(
            f"circulant embedding has negative eigenvalue {lam.min():.3e}; "
            "double the number of grid steps and retry"
        )
    scale = np.sqrt(np.clip(lam, 0.0, None) / m)
    z = _standard_normals(seed, n_paths, 2 * m)
    w = z[:, :m] + 1j * z[:, m:]
    # Re(F diag(sqrt(lam/m)) w) has covariance equal to the circulant matrix.
    fgn = np.fft.fft(scale * w, axis=1).real[:, :n]
    fgn *= grid.dt**h
    paths = np.zeros((n_paths, n + 1))
    np.cumsum(fgn, axis=1, out=paths[:, 1:])
    return FbmBatch(grid, h, paths, "circulant", seed)


SAMPLERS = {"cholesky": sample_cholesky, "circulant": sample_circulant}


def sample_fbm(grid, h, n_paths, seed, method="circulant"):
    try:
        sampler = SAMPLERS[method]
    except KeyError:
        raise DomainError(
            f"unknown fBm method {method!r}; choose from {sorted(SAMPLERS)}"
        ) from None
    return sampler(grid, h, n_paths, seed)


def self_similar_rescale(batch, eps):
    """Return ``t -> eps^H B_{t/eps}`` on the grid compressed by ``eps``.

    Node ``k`` of the output sits at ``eps * t_k`` and carries
    ``eps^H * B_{t_k}``, so the output has the law of fBm on
    ``[0, eps * t_end]``.
    """
    eps = float(eps)
    if not eps > 0:
        raise DomainError(f"rescaling factor must be positive, got {eps}")
    if eps == 1.0:
        return batch
    grid = TimeGrid(batch.grid.t_end * eps, batch.grid.n_steps)
    return FbmBatch(grid, batch.hurst, batch.paths * eps**batch.hurst,
                    batch.method, batch.seed)
