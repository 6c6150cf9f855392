"""Interacting-particle Euler scheme for McKean-Vlasov SDEs driven by fBm.

The law of the solution is replaced by the empirical measure of ``N``
particles, each driven by its own fBm path. The drift may oscillate on the
fast time scale ``t / eps``; it is integrated over each step with a midpoint
rule fine enough to resolve the oscillation while state and measure stay
frozen at the start of the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import AssumptionViolation, DomainError, SolverAbort
from .fbm import FbmBatch, TimeGrid, check_hurst, sample_fbm
from .metrics import EmpiricalMeasure, wasserstein2

BLOWUP = 1e12
VIOLATION_SLACK = 0.01


@dataclass(frozen=True)
class DriftModel:
    """Drift ``b(t, x, mu)`` with its declared constants.

    ``func`` must broadcast over array ``t`` and ``x``; ``mu`` is an
    ``EmpiricalMeasure``. ``averaged`` is the time-averaged drift
    ``(x, mu) -> bbar`` when known. ``time_dependent=False`` marks drifts
    that ignore ``t``.
    """

    func: Callable
    M_b: float
    L_b: float
    L_b_prime: float = 0.0
    averaged: Optional[Callable] = None
    L_bbar: Optional[float] = None
    time_dependent: bool = True
    name: str = "drift"

    def __call__(self, t, x, mu):
        return self.func(t, x, mu)

    def with_averaged(self, averaged, L_bbar=None):
        return replace(self, averaged=averaged,
                       L_bbar=self.L_b if L_bbar is None else L_bbar)


@dataclass(frozen=True)
class DiffusionModel:
    """Diffusion coefficient ``sigma(x)`` with derivative and declared constants."""

    sigma: Callable
    dsigma: Callable
    K_sigma: float
    M_sigma: float
    L_sigma: float
    M_sigma_prime: float
    name: str = "diffusion"


@dataclass(frozen=True)
class ProbeSpec:
    """Where assumption checks sample ``t``, ``x`` and random discrete measures."""

    t_range: tuple = (0.0, 50.0)
    x_range: tuple = (-5.0, 5.0)
    n_t: int = 41
    n_x: int = 81
    n_measures: int = 8
    measure_size: int = 16
    seed: int = 0
    shift: float = 0.01

    def times(self):
        return np.linspace(*self.t_range, self.n_t)

    def states(self):
        # odd count keeps the midpoint (usually 0) on the probe grid
        n = self.n_x if self.n_x % 2 else self.n_x + 1
        return np.linspace(*self.x_range, n)

    def measures(self):
        rng = np.random.default_rng(self.seed)
        lo, hi = self.x_range
        out = [EmpiricalMeasure(np.zeros(self.measure_size))]
        for _ in range(self.n_measures - 1):
            centre = rng.uniform(lo, hi)
            spread = rng.uniform(0.0, 0.25 * (hi - lo))
            out.append(EmpiricalMeasure(centre + spread * rng.standard_normal(self.measure_size)))
        # translates at W2 distance `shift` probe the measure direction locally
        if self.shift > 0:
            out += [EmpiricalMeasure(mu.atoms + self.shift) for mu in out]
        return out


@dataclass
class ValidationReport:
    estimates: dict = field(default_factory=dict)
    declared: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations

    def summary(self):
        return {
            "passed": self.passed,
            "estimates": {k: float(v) for k, v in self.estimates.items()},
            "declared": {k: float(v) for k, v in self.declared.items()},
            "violations": list(self.violations),
        }


def _record(report, name, estimate, declared, *, lower=False):
    report.estimates[name] = estimate
    report.declared[name] = declared
    if lower:
        bad = estimate < declared * (1 - VIOLATION_SLACK)
    else:
        bad = estimate > declared * (1 + VIOLATION_SLACK)
    if bad:
        op = ">=" if lower else "<="
        report.violations.append(
            f"{name}: empirical {estimate:.6g} breaks declared {op} {declared:.6g}"
        )


def _lipschitz_ratio(dv, dist):
    ok = dist > 1e-12
    return float(np.max(np.abs(dv[ok]) / dist[ok])) if np.any(ok) else 0.0


def validate_assumptions(b, s, probes=None):
    """Compare empirical bounds and Lipschitz quotients with declared constants.

    A constant is flagged when a probe exceeds it by more than 1%. The
    report never raises; solvers refuse reports with violations unless
    forced.
    """
    probes = probes or ProbeSpec()
    report = ValidationReport()
    t = probes.times()
    x = probes.states()
    mus = probes.measures()

    # drift: bound, space/measure Lipschitz, time Lipschitz
    vals = np.stack([np.broadcast_to(b(t[:, None], x[None, :], mu), (t.size, x.size))
                     for mu in mus])
    _record(report, "M_b", float(np.max(np.abs(vals))), b.M_b)
    lip = 0.0
    w2 = np.array([[wasserstein2(m1, m2) for m2 in mus] for m1 in mus])
    dx = np.abs(x[:, None] - x[None, :])
    for p in range(len(mus)):
        for q in range(p, len(mus)):
            dv = vals[p][:, :, None] - vals[q][:, None, :]
            dist = np.broadcast_to(dx + w2[p, q], dv.shape)
            lip = max(lip, _lipschitz_ratio(dv, dist))
    _record(report, "L_b", lip, b.L_b)
    dt = np.diff(t)
    if b.time_dependent:
        lip_t = float(np.max(np.abs(np.diff(vals, axis=1)) / dt[None, :, None]))
        # midpoint probe catches oscillations faster than the t-grid
        h = 1e-4
        fd = (b(t[:, None] + h, x[None, :], mus[0]) - b(t[:, None], x[None, :], mus[0])) / h
        lip_t = max(lip_t, float(np.max(np.abs(fd))))
    else:
        lip_t = 0.0
    _record(report, "L_b_prime", lip_t, max(b.L_b_prime, 0.0) if b.time_dependent else 0.0)

    if b.averaged is not None:
        bar = np.stack([np.broadcast_to(b.averaged(x, mu), x.shape) for mu in mus])
        lip_bar = 0.0
        for p in range(len(mus)):
            for q in range(p, len(mus)):
                dv = bar[p][:, None] - bar[q][None, :]
                lip_bar = max(lip_bar, _lipschitz_ratio(dv, dx + w2[p, q]))
        declared = b.L_bbar if b.L_bbar is not None else b.L_b
        _record(report, "bbar_bound", float(np.max(np.abs(bar))), b.M_b)
        _record(report, "L_bbar", lip_bar, declared)

    # diffusion
    sig = np.broadcast_to(s.sigma(x), x.shape).astype(float)
    _record(report, "K_sigma", float(np.min(np.abs(sig))), s.K_sigma, lower=True)
    _record(report, "M_sigma", float(np.max(np.abs(sig))), s.M_sigma)
    _record(report, "L_sigma", _lipschitz_ratio(sig[:, None] - sig[None, :], dx), s.L_sigma)
    dsig = np.broadcast_to(s.dsigma(x), x.shape).astype(float)
    _record(report, "M_sigma_prime", float(np.max(np.abs(dsig))), s.M_sigma_prime)
    _record(report, "L_dsigma", _lipschitz_ratio(dsig[:, None] - dsig[None, :], dx),
            s.M_sigma_prime)
    h = 1e-5
    fd = (s.sigma(x + h) - s.sigma(x - h)) / (2 * h)
    rel = np.abs(dsig - fd) / np.maximum(np.abs(dsig), 1.0)
    report.estimates["dsigma_fd_error"] = float(np.max(rel))
    if np.max(rel) > 1e-6:
        report.violations.append(
            f"dsigma disagrees with finite differences of sigma (rel. error {np.max(rel):.3e})"
        )
    return report


def sub_steps(dt, eps, per_osc, time_dependent=True):
    """Midpoint nodes per step: ``ceil(dt / (eps * pi / 4)) * per_osc``, or 1."""
    if not time_dependent:
        return 1
    return max(1, math.ceil(dt / (eps * math.pi / 4)) * int(per_osc))


def drift_increment(b, t_k, dt, x, mu, eps, m_sub):
    """Midpoint approximation of the drift integrated over ``[t_k, t_k + dt]``.

    State ``x`` and measure ``mu`` are frozen; only the fast time argument
    ``s / eps`` varies across the ``m_sub`` nodes.
    """
    if m_sub < 1 or dt <= 0:
        raise DomainError("drift_increment needs m_sub >= 1 and dt > 0")
    x = np.asarray(x, dtype=float)
    if m_sub == 1:
        return dt * np.broadcast_to(b((t_k + 0.5 * dt) / eps, x, mu), x.shape)
    s = t_k + (np.arange(m_sub) + 0.5) * (dt / m_sub)
    vals = np.broadcast_to(b(s[:, None] / eps, x[None, ...], mu), (m_sub,) + x.shape)
    return dt * vals.mean(axis=0)


@dataclass(frozen=True)
class SolverConfig:
    x0: float = 0.0
    t_end: float = 1.0
    epsilon: float = 0.1
    n_particles: int = 256
    n_steps: int = 256
    hurst: float = 0.7
    scheme: str = "euler"
    sub_steps_per_osc: int = 4
    seed: int = 0

    def __post_init__(self):
        check_hurst(self.hurst, strict=True)
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        if self.n_particles < 2:
            raise DomainError("n_particles must be at least 2")
        if self.scheme not in ("euler", "milstein"):
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.sub_steps_per_osc < 1:
            raise DomainError("sub_steps_per_osc must be >= 1")
        TimeGrid(self.t_end, self.n_steps)

    @property
    def grid(self):
        return TimeGrid(self.t_end, self.n_steps)


@dataclass(frozen=True)
class ParticleTrajectories:
    """Particle paths of shape ``(n_particles, n_steps + 1)`` on ``grid``."""

    grid: TimeGrid
    paths: np.ndarray = field(repr=False)
    noise: Optional[FbmBatch] = field(default=None, repr=False)

    @property
    def n_particles(self):
        return self.paths.shape[0]

    def measure_at(self, k):
        """Empirical measure of the step-``k`` states."""
        return EmpiricalMeasure(self.paths[:, k])


def _euler(x0, grid, noise_paths, drift_step, s, scheme):
    n_particles = noise_paths.shape[0]
    paths = np.empty((n_particles, grid.n_steps + 1))
    paths[:, 0] = x0
    d_b = np.diff(noise_paths, axis=1)
    dt = grid.dt
    milstein = scheme == "milstein"
    x = paths[:, 0].copy()
    for k in range(grid.n_steps):
        mu = EmpiricalMeasure(x)
        inc = d_b[:, k]
        sig = s.sigma(x)
        x_new = x + drift_step(k * dt, dt, x, mu) + sig * inc
        if milstein:
            x_new = x_new + 0.5 * sig * s.dsigma(x) * inc * inc
        bad = ~np.isfinite(x_new) | (np.abs(x_new) > BLOWUP)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise SolverAbort(
                f"state left the admissible range at step {k + 1}, particle {i}: {x_new[i]}",
                step=k + 1, particle=i,
            )
        x = x_new
        paths[:, k + 1] = x
    return paths


def _noise_paths(cfg, noise):
    if isinstance(noise, FbmBatch):
        if noise.grid != cfg.grid:
            raise DomainError("noise batch grid does not match the solver grid")
        arr = noise.paths
    else:
        arr = np.asarray(noise, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != cfg.n_steps + 1:
        raise DomainError(f"noise must have {cfg.n_steps + 1} columns")
    if arr.shape[0] < cfg.n_particles:
        raise DomainError(
            f"noise has {arr.shape[0]} paths, need n_particles={cfg.n_particles}"
        )
    return arr[: cfg.n_particles]


def solve_oscillatory(cfg, b, s, noise):
    """Euler (or Milstein) particle scheme for the drift ``b(t / eps, x, mu)``."""
    B = _noise_paths(cfg, noise)
    m_sub = sub_steps(cfg.grid.dt, cfg.epsilon, cfg.sub_steps_per_osc, b.time_dependent)

    def step(t_k, dt, x, mu):
        return drift_increment(b, t_k, dt, x, mu, cfg.epsilon, m_sub)

    paths = _euler(cfg.x0, cfg.grid, B, step, s, cfg.scheme)
    return ParticleTrajectories(cfg.grid, paths, noise if isinstance(noise, FbmBatch) else None)


def solve_averaged(cfg, b, s, noise):
    """Same scheme with the averaged drift; ``eps`` plays no role."""
    if b.averaged is None:
        raise DomainError(
            "drift has no averaged form; build one with averaging.numeric_average_drift"
        )
    B = _noise_paths(cfg, noise)
    bbar = b.averaged

    def step(t_k, dt, x, mu):
        return dt * np.broadcast_to(bbar(x, mu), x.shape)

    paths = _euler(cfg.x0, cfg.grid, B, step, s, cfg.scheme)
    return ParticleTrajectories(cfg.grid, paths, noise if isinstance(noise, FbmBatch) else None)


def coupled_solve(cfg, b, s, method="circulant"):
    """Run both solvers on one fBm batch drawn from ``cfg.seed``.

    Particle ``i`` of either output is driven by noise path ``i``.
    """
    noise = sample_fbm(cfg.grid, cfg.hurst, cfg.n_particles, cfg.seed, method)
    return solve_oscillatory(cfg, b, s, noise), solve_averaged(cfg, b, s, noise)


class ParticleSolver(TransformerMixin, BaseEstimator):
    """Transformer from fBm paths (rows) to particle trajectories (rows).

    ``fit`` checks the coefficient models against their declared constants;
    ``transform`` runs the particle scheme with one particle per input row,
    so the row count of ``X`` is the particle count.

    Parameters
    ----------
    drift, diffusion : DriftModel, DiffusionModel
    x0, t_end, epsilon : float
    averaged : bool
        Use the averaged drift instead of ``b(t / epsilon, ...)``.
    scheme : {"euler", "milstein"}
    sub_steps_per_osc : int
    force : bool
        Run even if validation reports violations.
    probes : ProbeSpec or None
    """

    def __init__(self, drift=None, diffusion=None, x0=0.0, t_end=1.0, epsilon=0.1,
                 averaged=False, scheme="euler", sub_steps_per_osc=4, force=False,
                 probes=None):
        self.drift = drift
        self.diffusion = diffusion
        self.x0 = x0
        self.t_end = t_end
        self.epsilon = epsilon
        self.averaged = averaged
        self.scheme = scheme
        self.sub_steps_per_osc = sub_steps_per_osc
        self.force = force
        self.probes = probes

    def fit(self, X=None, y=None):
        if self.drift is None or self.diffusion is None:
            raise DomainError("ParticleSolver needs both drift and diffusion models")
        self.validation_report_ = validate_assumptions(self.drift, self.diffusion, self.probes)
        if not self.validation_report_.passed and not self.force:
            raise AssumptionViolation(
                "; ".join(self.validation_report_.violations), self.validation_report_
            )
        if X is not None:
            self.n_features_in_ = check_array(X, ensure_min_features=2).shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "validation_report_")
        X = check_array(X, ensure_min_features=2, ensure_min_samples=2)
        cfg = SolverConfig(
            x0=self.x0, t_end=self.t_end, epsilon=self.epsilon, n_particles=X.shape[0],
            n_steps=X.shape[1] - 1, scheme=self.scheme,
            sub_steps_per_osc=self.sub_steps_per_osc,
        )
        solve = solve_averaged if self.averaged else solve_oscillatory
        return solve(cfg, self.drift, self.diffusion, X).paths
