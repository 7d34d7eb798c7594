"""Run configuration and versioned output files.

Configuration is JSON::

    {
      "schema": "belavkin-config/1",
      "model": {"preset": "resonance-fluorescence",
                "params": {"rabi": 1.0, "kappa_s": 0.7071067811865476}},
      "initial_state": "ground",
      "scheme": "count",
      "epsilon": 0.1, "phi0": 0.0, "omega_lo": 0.0,
      "horizon": 2.0, "dt": 0.001, "n_traj": 100, "seed": 0,
      "checkpoints": [0.5, 1.0, 2.0], "workers": 1,
      "method": "bayes", "out": "trajectories.jsonl"
    }

Complex couplings are written as ``[re, im]``. Every output file starts with
its schema string: the first JSON-Lines record carries ``"schema"`` and CSV
files start with a ``# <schema>`` line. Floats are written with 17
significant digits.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .errors import InvalidInputError, SchemaError
from .algebra import projector
from .lindblad import EXCITED, GROUND, HomodyneSpec, make_model

__all__ = [
    "CONFIG_SCHEMA",
    "RECORD_SCHEMA",
    "MASTER_SCHEMA",
    "SUMMARY_SCHEMA",
    "LIMIT_SCHEMA",
    "SCHEMES",
    "RunConfig",
    "load_config",
    "fmt",
    "write_records",
    "read_records",
    "write_csv",
    "read_csv",
]

CONFIG_SCHEMA = "belavkin-config/1"
RECORD_SCHEMA = "belavkin-sse/1"
MASTER_SCHEMA = "belavkin-master/1"
SUMMARY_SCHEMA = "belavkin-summary/1"
LIMIT_SCHEMA = "belavkin-limit/1"
SCHEMES = ("count", "scaled-count", "homodyne")


def _complex(x):
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise InvalidInputError(f"complex values are [re, im], got {x!r}")
        return complex(float(x[0]), float(x[1]))
    return x


def _finite(name, x):
    vals = [x.real, x.imag] if isinstance(x, complex) else [x]
    for v in vals:
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise InvalidInputError(f"{name} must be a finite number, got {x!r}")


@dataclass
class RunConfig:
    preset: str = "resonance-fluorescence"
    params: dict = field(default_factory=dict)
    initial_state: str = "ground"
    scheme: str = "count"
    epsilon: float = 0.1
    phi0: float = 0.0
    omega_lo: float = 0.0
    horizon: float = 2.0
    dt: float | None = None
    n_traj: int = 100
    seed: int = 0
    checkpoints: list | None = None
    workers: int = 1
    method: str = "bayes"
    out: str | None = None
    summary: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.scheme not in SCHEMES:
            raise InvalidInputError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.initial_state not in ("ground", "excited"):
            raise InvalidInputError("initial_state must be 'ground' or 'excited'")
        for name in ("epsilon", "phi0", "omega_lo", "horizon"):
            _finite(name, getattr(self, name))
        for k, v in self.params.items():
            if v is not None:
                _finite(k, _complex(v))
        if not self.horizon > 0:
            raise InvalidInputError("horizon must be positive")
        if self.dt is not None:
            _finite("dt", self.dt)
            if not self.dt > 0:
                raise InvalidInputError("dt must be positive")
        if isinstance(self.n_traj, bool) or not isinstance(self.n_traj, int) or self.n_traj < 1:
            raise InvalidInputError("n_traj must be an integer >= 1")
        if isinstance(self.workers, bool) or not isinstance(self.workers, int) or self.workers < 1:
            raise InvalidInputError("workers must be an integer >= 1")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        if self.checkpoints is not None:
            for c in self.checkpoints:
                _finite("checkpoint", c)
            if any(not 0 < c <= self.horizon for c in self.checkpoints):
                raise InvalidInputError("checkpoints must lie in (0, horizon]")

    def model(self):
        return make_model(self.preset, **{k: _complex(v) for k, v in self.params.items()})

    def rho0(self):
        return projector(GROUND if self.initial_state == "ground" else EXCITED, 2)

    def spec(self):
        return HomodyneSpec(self.epsilon if self.scheme == "scaled-count" else 0.0, self.phi0, self.omega_lo)

    def step(self):
        """Default steps: ``0.1 eps^2`` for scaled counting, ``1e-3`` otherwise."""
        if self.dt is not None:
            return self.dt
        return 0.1 * self.epsilon**2 if self.scheme == "scaled-count" else 1e-3

    def record_times(self):
        cps = self.checkpoints
        if cps is None:
            cps = [c for c in (0.5, 1.0, 2.0, 5.0) if c < self.horizon] + [self.horizon]
        return sorted({float(c) for c in cps})

    def to_dict(self):
        d = asdict(self)
        d["params"] = {k: [v.real, v.imag] if isinstance(v, complex) else v for k, v in self.params.items()}
        return {"schema": CONFIG_SCHEMA, **d}


def load_config(path=None, overrides=None) -> RunConfig:
    """Read a JSON config (optional) and apply non-``None`` overrides."""
    data = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}: {exc}") from None
        if data.get("schema") != CONFIG_SCHEMA:
            raise SchemaError(f"{path}: expected schema {CONFIG_SCHEMA!r}, got {data.get('schema')!r}")
        data = dict(data)
        data.pop("schema")
        model = data.pop("model", {})
        if "preset" in model:
            data["preset"] = model["preset"]
        if "params" in model:
            data["params"] = model["params"]
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**data)
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg


def fmt(x) -> str:
    """Float text with 17 significant digits (``null`` for nan)."""
    x = float(x)
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        raise InvalidInputError("cannot serialize an infinite value")
    return "%.17g" % x


def _flat_state(rho):
    out = []
    for v in np.asarray(rho).ravel():
        out.append(fmt(v.real))
        out.append(fmt(v.imag))
    return "[" + ",".join(out) + "]"


def write_records(fh, header: dict, times, states, observation, martingale):
    """JSON-Lines: a header record, then one line per (trajectory, time).

    ``rho`` lists the row-major state entries as ``re, im`` pairs.
    """
    fh.write(json.dumps({"schema": RECORD_SCHEMA, **header}, sort_keys=True) + "\n")
    n_traj, n_times = observation.shape
    for k in range(n_traj):
        for j in range(n_times):
            fh.write(
                f'{{"traj":{k},"t":{fmt(times[j])},"rho":{_flat_state(states[k, j])},'
                f'"obs":{fmt(observation[k, j])},"mart":{fmt(martingale[k, j])}}}\n'
            )


def read_records(path):
    """Parse a record file back into ``(header, times, states, observation, martingale)``."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError:
            raise SchemaError(f"{path}: missing header line") from None
        if header.get("schema") != RECORD_SCHEMA:
            raise SchemaError(f"{path}: expected schema {RECORD_SCHEMA!r}, got {header.get('schema')!r}")
        rows = [json.loads(line) for line in fh if line.strip()]
    if not rows:
        raise InvalidInputError(f"{path}: no records")
    n_traj = max(r["traj"] for r in rows) + 1
    n_times = len(rows) // n_traj
    if n_traj * n_times != len(rows):
        raise InvalidInputError(f"{path}: ragged record file")
    times = np.array([r["t"] for r in rows[:n_times]])
    rho = np.array([r["rho"] for r in rows], dtype=float)
    dim = int(round(math.sqrt(rho.shape[1] // 2)))
    states = (rho[:, 0::2] + 1j * rho[:, 1::2]).reshape(n_traj, n_times, dim, dim)
    obs = np.array([r["obs"] for r in rows], dtype=float).reshape(n_traj, n_times)
    mart = np.array([r["mart"] for r in rows], dtype=float).reshape(n_traj, n_times)
    return header, times, states, obs, mart


def write_csv(fh, schema, header, rows):
    from .stats import rows_to_csv

    fh.write(f"# {schema}\n")
    fh.write(rows_to_csv(header, rows))


def read_csv(path, schema):
    """Rows of a versioned CSV file as dicts (values left as strings)."""
    import csv

    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != f"# {schema}":
            raise SchemaError(f"{path}: expected schema {schema!r}, got {first!r}")
        return list(csv.DictReader(fh))
