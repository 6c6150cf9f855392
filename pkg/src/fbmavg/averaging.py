"""Averaged drifts, averaging-rate audits and the epsilon -> 0 convergence study."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from ._config import n_threads
from .exceptions import DomainError
from .fbm import sample_fbm
from .metrics import EmpiricalMeasure, HolderNormTransformer, wasserstein2
from .solver import SolverConfig, solve_averaged, solve_oscillatory


def _midpoints(t0, T, m):
    return t0 + (np.arange(m) + 0.5) * (T / m)


def numeric_average_drift(b, T_avg=1000.0, m_nodes=None):
    """Return ``b`` with ``averaged`` set to its time average over ``[0, T_avg]``.

    The average is a midpoint rule with ``m_nodes`` nodes (default: 16 per
    unit of time). A drift flagged time-independent is returned with
    ``averaged(x, mu) = b(0, x, mu)`` exactly.
    """
    T_avg = float(T_avg)
    if not T_avg > 0:
        raise DomainError(f"T_avg must be positive, got {T_avg}")
    if m_nodes is None:
        m_nodes = max(16, math.ceil(16 * T_avg))
    if m_nodes < 16:
        raise DomainError(f"m_nodes must be at least 16, got {m_nodes}")
    if not b.time_dependent:
        def averaged(x, mu):
            return np.broadcast_to(b(0.0, x, mu), np.shape(x))
        return b.with_averaged(averaged, b.L_b)

    nodes = _midpoints(0.0, T_avg, int(m_nodes))

    def averaged(x, mu):
        x = np.asarray(x, dtype=float)
        acc = np.zeros(x.shape)
        for chunk in np.array_split(nodes, max(1, nodes.size * max(x.size, 1) // 2_000_000)):
            vals = b(chunk.reshape((-1,) + (1,) * x.ndim), x[None, ...], mu)
            acc += np.broadcast_to(vals, (chunk.size,) + x.shape).sum(axis=0)
        return acc / nodes.size

    return b.with_averaged(averaged, b.L_b)


@dataclass(frozen=True)
class PhiProbes:
    """Window start times, states and measures probed by ``phi_estimate``."""

    starts: tuple = tuple(np.linspace(0.0, 2 * np.pi, 16, endpoint=False))
    xs: tuple = tuple(np.linspace(-3.0, 3.0, 13))
    n_measures: int = 5
    measure_size: int = 16
    nodes_per_unit: int = 32
    seed: int = 0

    def measures(self):
        rng = np.random.default_rng(self.seed)
        out = [EmpiricalMeasure(np.zeros(self.measure_size))]
        for _ in range(self.n_measures - 1):
            out.append(EmpiricalMeasure(rng.uniform(-3, 3) + rng.standard_normal(self.measure_size)))
        return out

    def describe(self):
        return {
            "starts": [float(v) for v in self.starts],
            "xs": [float(v) for v in self.xs],
            "n_measures": self.n_measures,
            "measure_size": self.measure_size,
            "nodes_per_unit": self.nodes_per_unit,
            "seed": self.seed,
        }


@dataclass
class AveragingRateCurve:
    """Empirical lower bounds for the averaging rate at each window length.

    ``phi_estimates[i]`` is the largest normalised window average of
    ``b - bbar`` over the probes for window ``T_values[i]``; it lower-bounds
    any admissible rate function there (finitely many probes only).
    ``phi_envelope`` is its running maximum from the right, the least
    nonincreasing curve above it. ``abs_estimates`` uses the absolute value
    inside the window average.
    """

    T_values: np.ndarray
    phi_estimates: np.ndarray
    phi_envelope: np.ndarray
    abs_estimates: np.ndarray
    ordering_holds: bool
    ordering_checks: int
    probes: dict = field(default_factory=dict)
    note: str = "lower-bound audit over a finite probe set"

    def slope(self, envelope=False):
        y = self.phi_envelope if envelope else self.phi_estimates
        return float(np.polyfit(np.log(self.T_values), np.log(y), 1)[0])


def phi_estimate(b, bbar, T_values, probes=None):
    """Audit the averaging condition on a finite probe set.

    For each window length ``T`` the window average of ``b - bbar`` over
    ``[t0, t0 + T]`` (midpoint rule on the same nodes for the signed and
    absolute versions) is divided by ``1 + |x| + mu(|.|^2)`` and maximised
    over the probes.
    """
    probes = probes or PhiProbes()
    T_values = np.asarray(T_values, dtype=float)
    if np.any(T_values <= 0):
        raise DomainError("window lengths must be positive")
    xs = np.asarray(probes.xs, dtype=float)
    mus = probes.measures()
    signed = np.zeros(T_values.size)
    absolute = np.zeros(T_values.size)
    ordering_ok = True
    checks = 0
    for k, T in enumerate(T_values):
        m = max(64, math.ceil(probes.nodes_per_unit * T))
        for mu in mus:
            norm = 1.0 + np.abs(xs) + mu.second_moment()
            bar = np.broadcast_to(bbar(xs, mu), xs.shape)
            for t0 in probes.starts:
                s = _midpoints(t0, T, m)
                d = np.broadcast_to(b(s[:, None], xs[None, :], mu), (m, xs.size)) - bar
                avg = np.abs(d.sum(axis=0) / m)
                avg_abs = np.abs(d).sum(axis=0) / m
                ordering_ok &= bool(np.all(avg <= avg_abs))
                checks += xs.size
                signed[k] = max(signed[k], float(np.max(avg / norm)))
                absolute[k] = max(absolute[k], float(np.max(avg_abs / norm)))
    envelope = np.maximum.accumulate(signed[::-1])[::-1]
    return AveragingRateCurve(T_values, signed, envelope, absolute, ordering_ok, checks,
                              probes.describe())


@dataclass
class ConvergenceReport:
    """Monte Carlo errors between oscillatory and averaged solutions.

    ``raw[e, r, m]`` holds the particle-mean of metric ``m`` (sup^2,
    holder^2, lambda^2) for epsilon ``e`` and replicate ``r``.
    """

    epsilon_grid: np.ndarray
    raw: np.ndarray
    endpoint_w2_sq: np.ndarray
    endpoint_mse: np.ndarray
    n_particles: int
    n_replicates: int
    n_steps: int
    t_end: float
    gamma: float
    lam: float
    replicate_seeds: list

    METRICS = ("err_sup_sq", "err_holder_sq", "err_lambda_sq")

    def mean(self, metric):
        return self.raw[:, :, self.METRICS.index(metric)].mean(axis=1)

    def stderr(self, metric):
        vals = self.raw[:, :, self.METRICS.index(metric)]
        if self.n_replicates < 2:
            return np.zeros(vals.shape[0])
        return vals.std(axis=1, ddof=1) / math.sqrt(self.n_replicates)

    def decrease_margins(self, metric, n_se=2.0):
        """Paired mean drop between consecutive epsilons minus ``n_se`` standard errors."""
        vals = self.raw[:, :, self.METRICS.index(metric)]
        d = vals[:-1] - vals[1:]
        se = d.std(axis=1, ddof=1) / math.sqrt(self.n_replicates) if self.n_replicates > 1 \
            else np.zeros(d.shape[0])
        return d.mean(axis=1) - n_se * se

    def rows(self):
        out = []
        for e, eps in enumerate(self.epsilon_grid):
            row = {"epsilon": float(eps)}
            for metric in self.METRICS:
                row[f"{metric}_mean"] = float(self.mean(metric)[e])
                row[f"{metric}_se"] = float(self.stderr(metric)[e])
            out.append(row)
        return out


def _replicate_seeds(seed, n):
    return [int(v) for v in np.random.SeedSequence(int(seed)).generate_state(n, np.uint64)]


def convergence_study(cfg, b, s, epsilon_grid, n_replicates, gamma=0.55, lam=1.0,
                      method="circulant"):
    """Errors ``X^eps - Xbar`` over an epsilon grid with independent replicates.

    Each replicate draws one fBm batch from its own seed; that batch drives the
    averaged solve and the oscillatory solve at every epsilon. Per-particle
    squared sup, gamma-Hölder and lambda norms are averaged over particles.
    """
    eps_grid = np.asarray(epsilon_grid, dtype=float)
    if eps_grid.ndim != 1 or eps_grid.size == 0:
        raise DomainError("epsilon grid must be a non-empty 1-D sequence")
    if np.any(eps_grid <= 0) or np.any(np.diff(eps_grid) >= 0):
        raise DomainError("epsilon grid must be positive and strictly decreasing")
    if b.averaged is None:
        raise DomainError("convergence study needs a drift with an averaged form")
    if n_replicates < 1:
        raise DomainError("need at least one replicate")
    seeds = _replicate_seeds(cfg.seed, n_replicates)
    norms = HolderNormTransformer(gamma=gamma, lam=lam, t_end=cfg.t_end)

    def one(seed):
        rcfg = replace(cfg, seed=seed)
        noise = sample_fbm(rcfg.grid, rcfg.hurst, rcfg.n_particles, seed, method)
        xbar = solve_averaged(rcfg, b, s, noise).paths
        res = np.empty((eps_grid.size, 3))
        w2 = np.empty(eps_grid.size)
        mse = np.empty(eps_grid.size)
        for e, eps in enumerate(eps_grid):
            xe = solve_oscillatory(replace(rcfg, epsilon=float(eps)), b, s, noise).paths
            diff = xe - xbar
            vals = norms.fit(diff).transform(diff)
            res[e] = [np.mean(vals[:, 0] ** 2), np.mean(vals[:, 2] ** 2),
                      np.mean(vals[:, 3] ** 2)]
            w2[e] = wasserstein2(EmpiricalMeasure(xe[:, -1]), EmpiricalMeasure(xbar[:, -1])) ** 2
            mse[e] = np.mean(diff[:, -1] ** 2)
        return res, w2, mse

    workers = min(n_threads(), n_replicates)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(sd) for sd in seeds]
    raw = np.stack([r[0] for r in results], axis=1)
    w2 = np.stack([r[1] for r in results], axis=1)
    mse = np.stack([r[2] for r in results], axis=1)
    return ConvergenceReport(eps_grid, raw, w2, mse, cfg.n_particles, n_replicates,
                             cfg.n_steps, cfg.t_end, gamma, lam, seeds)


class AveragingStudy(BaseEstimator):
    """Estimator wrapper around ``convergence_study``.

    ``fit()`` runs the study and stores the report in ``report_``.
    """

    def __init__(self, drift=None, diffusion=None, x0=0.0, t_end=1.0, n_particles=256,
                 n_steps=256, hurst=0.7, scheme="euler", sub_steps_per_osc=4, seed=0,
                 epsilons=(1.0, 0.1, 0.01, 0.001), n_replicates=64, gamma=0.55, lam=1.0):
        self.drift = drift
        self.diffusion = diffusion
        self.x0 = x0
        self.t_end = t_end
        self.n_particles = n_particles
        self.n_steps = n_steps
        self.hurst = hurst
        self.scheme = scheme
        self.sub_steps_per_osc = sub_steps_per_osc
        self.seed = seed
        self.epsilons = epsilons
        self.n_replicates = n_replicates
        self.gamma = gamma
        self.lam = lam

    def fit(self, X=None, y=None):
        cfg = SolverConfig(x0=self.x0, t_end=self.t_end, epsilon=self.epsilons[0],
                           n_particles=self.n_particles, n_steps=self.n_steps,
                           hurst=self.hurst, scheme=self.scheme,
                           sub_steps_per_osc=self.sub_steps_per_osc, seed=self.seed)
        self.report_ = convergence_study(cfg, self.drift, self.diffusion, self.epsilons,
                                         self.n_replicates, self.gamma, self.lam)
        return self


@dataclass(frozen=True)
class BlockDiagnostic:
    delta: float
    beta: float
    max_moment: float
    argmax_time: float
    ratio: float


def khasminskii_block_diagnostic(traj, delta, beta):
    """Largest mean-square drift of the state inside blocks of length ``delta``.

    Node ``t`` in ``(k delta, (k+1) delta]`` is compared with the block start
    ``k delta``. Reports ``max_t E|X_t - X_{k delta}|^2`` and that value
    divided by ``delta^(2 beta)``.
    """
    grid = traj.grid
    m = delta / grid.dt
    m_int = int(round(m))
    if m_int < 1 or abs(m - m_int) > 1e-9 * max(1.0, m):
        raise DomainError(f"delta={delta} is not a positive multiple of the grid step {grid.dt}")
    j = np.arange(1, grid.n_steps + 1)
    start = ((j - 1) // m_int) * m_int
    moments = np.mean((traj.paths[:, j] - traj.paths[:, start]) ** 2, axis=0)
    i = int(np.argmax(moments))
    d = m_int * grid.dt
    return BlockDiagnostic(d, beta, float(moments[i]), float(j[i] * grid.dt),
                           float(moments[i] / d ** (2 * beta)))


def l2_path_norm(traj):
    """Monte Carlo estimate of ``(E sup_t |X_t|^2)^(1/2)`` over the particles."""
    sup_sq = np.max(traj.paths**2, axis=1)
    return float(np.sqrt(np.mean(sup_sq)))
