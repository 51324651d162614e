"""JSON scenario files.

Complex matrix entries are written as ``[real, imag]`` pairs. A scenario
looks like::

    {
      "id": "qubit-sx",
      "dim": 2,
      "hamiltonian": [[[0, 0], [1, 0]], [[1, 0], [0, 0]]],
      "jump_operators": [{"matrix": [[[0, 0], [1, 0]], [[0, 0], [0, 0]]], "rate": 1.0}],
      "measurement": "computational",
      "schedule": {"times": [0.1, 0.2]},
      "initial_state": {"populations": [1, 0]},
      "t_start": 0.0,
      "t_end": 1.0,
      "tolerances": {"tol": 1e-8},
      "output": {"csv": "run.csv", "json": "run.json"}
    }

``hamiltonian`` may instead be ``{"builder": "lz", "delta": 1, "eps": 2}``;
``measurement`` may be ``"computational"``, ``"instantaneous-eigenbasis"``
or ``{"basis": <matrix whose columns are the basis vectors>}``;
``schedule`` may be ``{"kind": "uniform" | "adapted", "N": 8}`` for the
Landau-Zener builder.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .generators import composite_generator
from .landau_zener import LZParams, diabatic_basis, lz_hamiltonian, make_schedule
from .operators import OrthonormalBasis, ValidationError
from .propagation import EIGENBASIS, MeasurementSchedule

MAX_DIM = 64


class ConfigError(ValueError):
    """Invalid scenario file; the message names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _number(x, path):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigError(path, f"expected a finite number, got {x!r}")
    return float(x)


def _matrix(obj, dim, path):
    if not isinstance(obj, list) or len(obj) != dim:
        raise ConfigError(path, f"expected a list of {dim} rows")
    M = np.zeros((dim, dim), dtype=complex)
    for i, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != dim:
            raise ConfigError(f"{path}[{i}]", f"expected a row of {dim} entries")
        for j, entry in enumerate(row):
            p = f"{path}[{i}][{j}]"
            if not isinstance(entry, list) or len(entry) != 2:
                raise ConfigError(p, f"expected a [real, imag] pair, got {entry!r}")
            M[i, j] = complex(_number(entry[0], p + "[0]"), _number(entry[1], p + "[1]"))
    return M


def matrix_to_pairs(M):
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


@dataclass
class ScenarioConfig:
    dim: int
    hamiltonian: Optional[np.ndarray] = None
    lz: Optional[LZParams] = None
    jumps: list = field(default_factory=list)
    measurement: Any = "computational"
    schedule: dict = field(default_factory=dict)
    initial_state: Any = None
    t_start: float = 0.0
    t_end: Optional[float] = None
    tolerances: dict = field(default_factory=lambda: {"tol": 1e-8})
    output: dict = field(default_factory=dict)
    id: str = "scenario"

    # -- parsing --------------------------------------------------------------

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("", "scenario must be a JSON object")
        known = {"id", "dim", "hamiltonian", "jump_operators", "measurement", "schedule",
                 "initial_state", "t_start", "t_end", "tolerances", "output"}
        for key in d:
            if key not in known:
                raise ConfigError(key, "unknown field")
        if "dim" not in d:
            raise ConfigError("dim", "missing required field")
        dim = d["dim"]
        if isinstance(dim, bool) or not isinstance(dim, int) or not 1 <= dim <= MAX_DIM:
            raise ConfigError("dim", f"expected an integer in [1, {MAX_DIM}], got {dim!r}")
        cfg = cls(dim=dim)
        cfg.id = str(d.get("id", "scenario"))

        h = d.get("hamiltonian")
        if isinstance(h, dict):
            if h.get("builder") != "lz":
                raise ConfigError("hamiltonian.builder", f"unknown builder {h.get('builder')!r}")
            if dim != 2:
                raise ConfigError("dim", "the lz builder requires dim = 2")
            try:
                cfg.lz = LZParams(_number(h.get("delta"), "hamiltonian.delta"),
                                  _number(h.get("eps"), "hamiltonian.eps"))
            except ValidationError as exc:
                raise ConfigError("hamiltonian", str(exc)) from None
        elif h is not None:
            H = _matrix(h, dim, "hamiltonian")
            if np.max(np.abs(H - H.conj().T)) > 1e-10:
                raise ConfigError("hamiltonian", "matrix is not Hermitian")
            cfg.hamiltonian = H

        jumps = d.get("jump_operators", [])
        if not isinstance(jumps, list):
            raise ConfigError("jump_operators", "expected a list")
        for n, jo in enumerate(jumps):
            p = f"jump_operators[{n}]"
            if not isinstance(jo, dict):
                raise ConfigError(p, "expected an object with 'matrix' and 'rate'")
            A = _matrix(jo.get("matrix"), dim, p + ".matrix")
            rate = _number(jo.get("rate", 1.0), p + ".rate")
            if rate < 0:
                raise ConfigError(p + ".rate", "rate must be nonnegative")
            cfg.jumps.append((A, rate))
        if cfg.hamiltonian is None and cfg.lz is None and not cfg.jumps:
            raise ConfigError("hamiltonian", "scenario needs a Hamiltonian or jump operators")

        m = d.get("measurement", "computational")
        if m in ("computational", "instantaneous-eigenbasis"):
            cfg.measurement = m
        elif isinstance(m, dict) and "basis" in m:
            V = _matrix(m["basis"], dim, "measurement.basis")
            try:
                cfg.measurement = OrthonormalBasis(V)
            except ValidationError as exc:
                raise ConfigError("measurement.basis", str(exc)) from None
        else:
            raise ConfigError("measurement", f"unsupported value {m!r}")

        s = d.get("schedule", {})
        if not isinstance(s, dict):
            raise ConfigError("schedule", "expected an object")
        if "times" in s:
            times = [_number(t, f"schedule.times[{i}]") for i, t in enumerate(s["times"])]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ConfigError("schedule.times", "times must be strictly increasing")
            cfg.schedule = {"times": times}
        elif "kind" in s:
            if s["kind"] not in ("uniform", "adapted", "none"):
                raise ConfigError("schedule.kind", f"unknown kind {s['kind']!r}")
            if cfg.lz is None:
                raise ConfigError("schedule.kind", "named schedules require the lz builder")
            N = s.get("N", 0)
            if s["kind"] != "none" and (isinstance(N, bool) or not isinstance(N, int) or N < 1):
                raise ConfigError("schedule.N", f"expected a positive integer, got {N!r}")
            cfg.schedule = {"kind": s["kind"], "N": N}
        elif s:
            raise ConfigError("schedule", "expected 'times' or 'kind'")

        init = d.get("initial_state")
        if isinstance(init, dict) and "populations" in init:
            pops = [_number(x, f"initial_state.populations[{i}]") for i, x in enumerate(init["populations"])]
            if len(pops) != dim or min(pops) < 0 or abs(sum(pops) - 1) > 1e-10:
                raise ConfigError("initial_state.populations", "expected a probability vector of length dim")
            cfg.initial_state = {"populations": pops}
        elif isinstance(init, dict) and "matrix" in init:
            cfg.initial_state = {"matrix": _matrix(init["matrix"], dim, "initial_state.matrix")}
        elif init is not None:
            raise ConfigError("initial_state", "expected {'populations': [...]} or {'matrix': ...}")

        cfg.t_start = _number(d.get("t_start", 0.0), "t_start")
        if d.get("t_end") is not None:
            cfg.t_end = _number(d["t_end"], "t_end")
            if cfg.t_end < cfg.t_start:
                raise ConfigError("t_end", "t_end precedes t_start")
        tol = d.get("tolerances", {"tol": 1e-8})
        if not isinstance(tol, dict):
            raise ConfigError("tolerances", "expected an object")
        cfg.tolerances = {k: _number(v, f"tolerances.{k}") for k, v in tol.items()}
        if any(v <= 0 for v in cfg.tolerances.values()):
            raise ConfigError("tolerances", "tolerances must be positive")
        out = d.get("output", {})
        if not isinstance(out, dict) or not all(isinstance(v, str) for v in out.values()):
            raise ConfigError("output", "expected an object of path strings")
        cfg.output = dict(out)
        return cfg

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    # -- serialization --------------------------------------------------------

    def to_dict(self):
        d = {"id": self.id, "dim": self.dim}
        if self.lz is not None:
            d["hamiltonian"] = {"builder": "lz", "delta": self.lz.delta, "eps": self.lz.eps}
        elif self.hamiltonian is not None:
            d["hamiltonian"] = matrix_to_pairs(self.hamiltonian)
        if self.jumps:
            d["jump_operators"] = [{"matrix": matrix_to_pairs(A), "rate": r} for A, r in self.jumps]
        if isinstance(self.measurement, OrthonormalBasis):
            d["measurement"] = {"basis": matrix_to_pairs(self.measurement.matrix)}
        else:
            d["measurement"] = self.measurement
        if self.schedule:
            d["schedule"] = dict(self.schedule)
        if self.initial_state is not None:
            if "matrix" in self.initial_state:
                d["initial_state"] = {"matrix": matrix_to_pairs(self.initial_state["matrix"])}
            else:
                d["initial_state"] = dict(self.initial_state)
        d["t_start"] = self.t_start
        if self.t_end is not None:
            d["t_end"] = self.t_end
        d["tolerances"] = dict(self.tolerances)
        if self.output:
            d["output"] = dict(self.output)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # -- model construction ---------------------------------------------------

    @property
    def tol(self):
        return self.tolerances.get("tol", 1e-8)

    def hamiltonian_fn(self):
        if self.lz is not None:
            return lz_hamiltonian(self.lz)
        return self.hamiltonian

    def generator(self):
        return composite_generator(self.hamiltonian_fn(), self.jumps, dim=self.dim)

    def basis_source(self):
        if isinstance(self.measurement, OrthonormalBasis):
            return self.measurement
        if self.measurement == "computational":
            return OrthonormalBasis.computational(self.dim)
        if self.lz is not None:
            lz = self.lz
            return lambda t: diabatic_basis(lz, t)
        return EIGENBASIS

    def basis_at(self, t):
        """Measurement basis in force at time ``t``."""
        from .operators import eigenbasis

        src = self.basis_source()
        if isinstance(src, OrthonormalBasis):
            return src
        if callable(src):
            return src(t)
        return eigenbasis(self.generator().hamiltonian(t), time=t)[1]

    def measurement_times(self):
        if "times" in self.schedule:
            return list(self.schedule["times"])
        if "kind" in self.schedule:
            return list(make_schedule(self.lz, self.schedule["kind"], self.schedule["N"]).times)
        return []

    def measurement_schedule(self):
        times = self.measurement_times()
        src = self.basis_source()
        return MeasurementSchedule(tuple(times), tuple([src] * len(times)))

    def initial_density(self, t=None):
        t = self.t_start if t is None else t
        basis = self.basis_at(t)
        if self.initial_state is None:
            return basis.projector(0)
        if "matrix" in self.initial_state:
            return np.asarray(self.initial_state["matrix"])
        return basis.diagonal_operator(self.initial_state["populations"])
