"""Built-in coefficient models, keyed by name.

Each entry documents which of the standing assumptions it satisfies and
carries a closed-form averaged drift when one is known.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import DiffusionModel, DriftModel, ProbeSpec, validate_assumptions


@dataclass(frozen=True)
class ModelEntry:
    name: str
    drift: DriftModel
    diffusion: DiffusionModel
    doc: str

    @property
    def has_closed_form_average(self):
        return self.drift.averaged is not None


def _zero(t, x, mu):
    return np.zeros(np.broadcast(t, x).shape)


def _const(value):
    def fn(t, x, mu):
        return np.full(np.broadcast(t, x).shape, value)
    return fn


def _avg_const(value):
    def fn(x, mu):
        return np.full(np.shape(x), value)
    return fn


def _neg_tanh(t, x, mu):
    return np.broadcast_to(-np.tanh(x), np.broadcast(t, x).shape)


def _neg_tanh_bar(x, mu):
    return -np.tanh(x)


def _benchmark(t, x, mu):
    return (1.0 + 0.5 * np.sin(t)) * (-np.tanh(x) + 0.5 * np.tanh(mu.mean()))


def _benchmark_bar(x, mu):
    return -np.tanh(x) + 0.5 * np.tanh(mu.mean())


def _unit_sigma():
    return DiffusionModel(
        sigma=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        dsigma=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        K_sigma=1.0, M_sigma=1.0, L_sigma=0.0, M_sigma_prime=0.0, name="unit",
    )


def _wavy_sigma():
    return DiffusionModel(
        sigma=lambda x: 1.0 + 0.1 * np.sin(x),
        dsigma=lambda x: 0.1 * np.cos(x),
        K_sigma=0.9, M_sigma=1.1, L_sigma=0.1, M_sigma_prime=0.1, name="1+0.1sin",
    )


def _build():
    entries = [
        ModelEntry(
            "zero",
            DriftModel(_zero, M_b=0.0, L_b=0.0, averaged=_avg_const(0.0), L_bbar=0.0,
                       time_dependent=False, name="zero"),
            _unit_sigma(),
            "b = 0, sigma = 1: the solution is x0 plus the driving fBm. "
            "Every standing assumption holds trivially.",
        ),
        ModelEntry(
            "constant",
            DriftModel(_const(0.5), M_b=0.5, L_b=0.0, averaged=_avg_const(0.5), L_bbar=0.0,
                       time_dependent=False, name="constant"),
            _unit_sigma(),
            "b = 0.5, sigma = 1: solution x0 + 0.5 t + fBm. Every standing assumption holds.",
        ),
        ModelEntry(
            "tanh",
            DriftModel(_neg_tanh, M_b=1.0, L_b=1.0, averaged=_neg_tanh_bar, L_bbar=1.0,
                       time_dependent=False, name="-tanh"),
            _wavy_sigma(),
            "b = -tanh(x) (no fast time dependence, so bbar = b and phi = 0), "
            "sigma = 1 + 0.1 sin x. Bounded and Lipschitz with M_b = L_b = 1.",
        ),
        ModelEntry(
            "benchmark",
            DriftModel(_benchmark, M_b=2.25, L_b=1.5, L_b_prime=0.75,
                       averaged=_benchmark_bar, L_bbar=1.5, name="benchmark"),
            _wavy_sigma(),
            "b = (1 + sin(t)/2)(-tanh x + tanh(mean mu)/2), sigma = 1 + 0.1 sin x; "
            "bbar = -tanh x + tanh(mean mu)/2 and phi(T) <= 1.5/T. "
            "Drift bound M_b = 2.25, Lipschitz L_b = 1.5, time Lipschitz L_b' = 0.75; "
            "sigma between 0.9 and 1.1 with L = 0.1 and |sigma'| <= 0.1.",
        ),
    ]
    return {e.name: e for e in entries}


REGISTRY = _build()


def get_model(name):
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known models: {sorted(REGISTRY)}") from None


def check_registry(probes=None):
    """Validation report for every registered model."""
    probes = probes or ProbeSpec()
    return {name: validate_assumptions(e.drift, e.diffusion, probes)
            for name, e in REGISTRY.items()}
