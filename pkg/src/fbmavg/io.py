"""Run configuration, CSV/JSON emission and manifests.

Numbers are written with 17 significant digits, ``\\n`` line endings and no
locale dependence, so identical runs give identical bytes.
"""

from __future__ import annotations

import dataclasses
import difflib
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .exceptions import ConfigError
from .fbm import TimeGrid
from .metrics import SamplePath


def fmt(x):
    return format(float(x), ".17g")


def write_atomic(path, data):
    """Write ``data`` (str or bytes) via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def paths_csv(paths, nodes, id_name="path_id"):
    """Long-format CSV ``<id_name>,t,value`` with one row per (path, node)."""
    t_str = [fmt(t) for t in nodes]
    lines = [f"{id_name},t,value"]
    for i, row in enumerate(np.asarray(paths)):
        lines.extend(f"{i},{ts},{fmt(v)}" for ts, v in zip(t_str, row))
    return "\n".join(lines) + "\n"


def read_paths_csv(path):
    """Inverse of ``paths_csv``; returns ``(nodes, paths)``."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    ids = data[data.dtype.names[0]].astype(int)
    n_paths = ids.max() + 1
    values = data["value"].reshape(n_paths, -1)
    nodes = data["t"][: values.shape[1]]
    return nodes, values


def _grid_from_nodes(t):
    t = np.asarray(t, dtype=float)
    if t.size < 2 or t[0] != 0.0:
        raise ConfigError("path CSV must start at t = 0 with at least two nodes")
    grid = TimeGrid(t[-1], t.size - 1)
    if np.max(np.abs(t - grid.nodes)) > 1e-9 * grid.t_end:
        raise ConfigError("path CSV times must form a uniform grid")
    return grid


def read_sample_path(path):
    """Read a ``t,value`` CSV (header required) into a ``SamplePath``."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    try:
        t, v = data["t"], data["value"]
    except (ValueError, KeyError):
        raise ConfigError(f"{path}: expected header 't,value'") from None
    return SamplePath(_grid_from_nodes(np.atleast_1d(t)), np.atleast_1d(v))


def sample_path_csv(path):
    lines = ["t,value"] + [f"{fmt(t)},{fmt(v)}" for t, v in zip(path.nodes, path.values)]
    return "\n".join(lines) + "\n"


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def pretty_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def sha256(data):
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


@dataclass
class RunConfig:
    """Everything a ``simulate``/``average-study``/``phi`` run depends on."""

    model: str = "benchmark"
    x0: float = 0.0
    t_end: float = 1.0
    epsilon: float = 0.1
    n_particles: int = 256
    n_steps: int = 256
    hurst: float = 0.7
    scheme: str = "euler"
    sub_steps_per_osc: int = 4
    seed: int = 0
    fbm_method: str = "circulant"
    alpha: float = 0.35
    gamma: float = 0.55
    beta: float = 0.65
    lam: float = 1.0
    epsilons: list = field(default_factory=lambda: [1.0, 0.1, 0.01, 0.001])
    replicates: int = 64
    T_values: list = field(default_factory=lambda: [10.0, 100.0, 1000.0])
    force: bool = False
    out_prefix: str = ""

    HASH_EXCLUDE = ("out_prefix",)

    def validate(self):
        from .fractional import ExponentTriple
        from .models import REGISTRY
        from .solver import SolverConfig

        if self.model not in REGISTRY:
            raise ConfigError(f"model: unknown model {self.model!r}; known: {sorted(REGISTRY)}")
        if not 0.5 < self.hurst < 1.0:
            raise ConfigError(
                f"hurst: {self.hurst} rejected; the fBm-driven equations need 1/2 < H < 1"
            )
        if self.fbm_method not in ("cholesky", "circulant"):
            raise ConfigError(f"fbm_method: unknown method {self.fbm_method!r}")
        if self.lam < 1:
            raise ConfigError(f"lam: must be >= 1, got {self.lam}")
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma: must lie in (0, 1), got {self.gamma}")
        eps = list(self.epsilons)
        if not eps or any(e <= 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigError("epsilons: must be positive and strictly decreasing")
        if self.replicates < 1:
            raise ConfigError("replicates: must be >= 1")
        if not self.T_values or any(T <= 0 for T in self.T_values):
            raise ConfigError("T_values: must be positive")
        try:
            ExponentTriple(self.alpha, self.gamma, self.beta)
            self.solver_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def solver_config(self):
        from .solver import SolverConfig

        return SolverConfig(
            x0=self.x0, t_end=self.t_end, epsilon=self.epsilon,
            n_particles=self.n_particles, n_steps=self.n_steps, hurst=self.hurst,
            scheme=self.scheme, sub_steps_per_osc=self.sub_steps_per_osc, seed=self.seed,
        )

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self):
        d = {k: v for k, v in self.to_dict().items() if k not in self.HASH_EXCLUDE}
        return sha256(canonical_json(d))

    def dump(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name, value):
    default = _FIELDS[name].default
    if default is dataclasses.MISSING:
        default = _FIELDS[name].default_factory()
    kind = type(default)
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is list:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return [float(v) for v in value]
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot interpret {value!r} as {kind.__name__}") from None


def config_from_mapping(data):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of key: value pairs")
    values = {}
    for key, value in data.items():
        if key not in _FIELDS:
            hint = difflib.get_close_matches(str(key), list(_FIELDS), n=1)
            extra = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"unknown config key {key!r}{extra}")
        values[key] = _coerce(key, value)
    return RunConfig(**values).validate()


def load_config(path):
    """Parse a YAML run config. Unknown keys and bad values are errors."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: parse error{where}: {getattr(exc, 'problem', exc)}") from None
    return config_from_mapping(data)


def manifest(command, argv, outputs, *, config=None, seed=None, validation=None, extra=None):
    """Manifest dict for a run. Contains no timestamps.

    ``outputs`` maps a role name (``"trajectories.csv"``) to the emitted text;
    the manifest stores its sha256, so it does not depend on where files went.
    """
    out = {
        "command": command,
        "argv": list(argv),
        "library_version": __version__,
        "seed": seed,
        "outputs": {str(k): sha256(v) for k, v in outputs.items()},
    }
    if config is not None:
        out["config"] = config.to_dict()
        out["config_hash"] = config.hash()
    if validation is not None:
        out["validation"] = validation
    if extra:
        out.update(extra)
    return out
