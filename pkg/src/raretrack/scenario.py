"""Scenario files: a JSON description of one experiment, and helpers that
turn it into fronts, runs and references."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields
from importlib import resources

import numpy as np
from raretrack import front as front_mod
from raretrack.flux import FluxError, FluxModel, make_flux
from raretrack.front import ParticleFront, RunDiagnostics
from raretrack.sampling import InitialCondition, SamplingError, sample
from raretrack.sources import SourceError, SourceModel, make_source

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    flux: dict
    initial_condition: dict
    t_end: float
    n: int = 100
    d_max: float | None = None
    d_min: float | None = None
    source: dict | None = None
    output_times: list[float] | None = None
    postprocess: bool = False
    rk_substep: float | None = None
    dt_cap: float | None = None
    seed: int | None = None
    reference: dict | None = None
    version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    # {{{ validation and serialization

    def validate(self) -> None:
        if self.version != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported scenario version {self.version}")
        if not isinstance(self.name, str) or not self.name:
            raise ScenarioError("scenario needs a name")
        if not (isinstance(self.t_end, (int, float)) and self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ScenarioError("t_end must be a finite number >= 0")
        if not (isinstance(self.n, int) and self.n >= 2):
            raise ScenarioError("n must be an integer >= 2")
        times = self.times
        if any(b < a for a, b in zip(times, times[1:])) or any(not 0 <= t <= self.t_end for t in times):
            raise ScenarioError("output_times must be sorted and within [0, t_end]")
        d_max, d_min = self.resolution()
        if not d_max > d_min >= 0:
            raise ScenarioError("need d_max > d_min >= 0")
        if self.rk_substep is not None and not self.rk_substep > 0:
            raise ScenarioError("rk_substep must be positive")
        if self.dt_cap is not None and not self.dt_cap > 0:
            raise ScenarioError("dt_cap must be positive")
        try:
            self.build_flux()
            self.build_ic()
            self.build_source()
        except (FluxError, SamplingError, SourceError, KeyError, TypeError) as exc:
            raise ScenarioError(f"invalid scenario: {exc}") from None

    @property
    def times(self) -> list[float]:
        return list(self.output_times) if self.output_times else [float(self.t_end)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        missing = {"name", "flux", "initial_condition", "t_end"} - set(d)
        if missing:
            raise ScenarioError(f"missing scenario keys: {sorted(missing)}")
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"not valid JSON: {exc}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Scenario":
        try:
            with open(path) as fh:
                return cls.loads(fh.read())
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario: {exc}") from None

    # }}}

    # {{{ construction

    def build_flux(self) -> FluxModel:
        return make_flux(self.flux)

    def build_ic(self) -> InitialCondition:
        return InitialCondition.from_spec(self.initial_condition)

    def build_source(self) -> SourceModel | None:
        return make_source(self.source)

    @property
    def domain(self) -> tuple[float, float]:
        return self.build_ic().domain

    def resolution(self, n: int | None = None) -> tuple[float, float]:
        """``(d_max, d_min)`` at ``n`` particles; an explicit ``d_max`` is
        scaled by ``(self.n - 1)/(n - 1)``."""
        n = self.n if n is None else n
        r = (self.n - 1) / (n - 1)
        if self.d_max is not None:
            d_max = float(self.d_max) * r
        else:
            lo, hi = InitialCondition.from_spec(self.initial_condition).domain
            d_max = (hi - lo) / (n - 1)
        if self.d_min is not None:
            d_min = float(self.d_min) * r
        else:
            d_min = d_max / 100.0 if self.source is not None else 0.0
        return d_max, d_min

    def initial_front(self, n: int | None = None, flux: FluxModel | None = None) -> ParticleFront:
        d_max, d_min = self.resolution(n)
        return sample(self.build_ic(), flux or self.build_flux(), self.n if n is None else n,
                d_max=d_max, d_min=d_min)

    # }}}


def simulate(sc: Scenario, n: int | None = None, observer=None, flux: FluxModel | None = None,
        times: list[float] | None = None) -> dict[float, ParticleFront]:
    """Run ``sc`` and return the front at every output time."""
    front = sc.initial_front(n, flux)
    src = sc.build_source()
    out = {}
    for t in (times or sc.times):
        front = front_mod.run(front, t, observer, source=src, rk_substep=sc.rk_substep,
                dt_cap=sc.dt_cap)
        out[t] = front
    return out


def diagnostics_for(sc: Scenario, n: int | None = None, flux: FluxModel | None = None):
    """Run ``sc`` to ``t_end`` with a recorder attached; returns (front, recorder)."""
    front = sc.initial_front(n, flux)
    rec = RunDiagnostics.for_front(front)
    src = sc.build_source()
    final = front_mod.run(front, sc.t_end, rec, source=src, rk_substep=sc.rk_substep,
            dt_cap=sc.dt_cap)
    return final, rec


# {{{ references and error tables

def parse_reference(text: str) -> dict:
    """``oracle``, ``oracle:<factor>``, ``cells:<count>`` or ``analytic:<name>``."""
    kind, _, arg = text.partition(":")
    if kind == "oracle":
        return {"type": "oracle", "factor": int(arg) if arg else 16}
    if kind == "cells" and arg:
        return {"type": "oracle", "cells": int(arg)}
    if kind == "analytic" and arg:
        return {"type": "analytic", "name": arg}
    raise ScenarioError(f"cannot parse reference {text!r}")


def reference_window(sc: Scenario, ref: dict | None = None) -> tuple[float, float]:
    ref = ref if ref is not None else (sc.reference or {})
    w = ref.get("window")
    return (float(w[0]), float(w[1])) if w else sc.domain


def reference_polyline(sc: Scenario, t: float, finest: int, ref: dict | None = None):
    """The reference solution at ``t``: a Godunov solve at ``factor * finest``
    (or ``cells``) cells, or a named analytic solution."""
    from raretrack import oracle

    ref = dict(ref if ref is not None else (sc.reference or {"type": "oracle", "factor": 16}))
    kind = ref.get("type", "oracle")
    if kind == "analytic":
        return oracle.analytic_reference(ref["name"], t, **dict(ref.get("params") or {}))
    if kind != "oracle":
        raise ScenarioError(f"unknown reference type {kind!r}")
    cells = int(ref["cells"]) if "cells" in ref else int(ref.get("factor", 16)) * int(finest)
    return oracle_solution(sc, t, cells, ref).polyline()


def oracle_solution(sc: Scenario, t: float, cells: int, ref: dict | None = None):
    """Godunov solve with ``cells`` cells across the initial-condition domain,
    extended at the same cell size to cover the error window."""
    from raretrack import oracle

    lo, hi = sc.domain
    wlo, whi = reference_window(sc, ref)
    dx = (hi - lo) / cells
    left = max(0, int(math.ceil((lo - wlo) / dx - 1e-9)))
    right = max(0, int(math.ceil((whi - hi) / dx - 1e-9)))
    domain = (lo - left * dx, hi + right * dx)
    return oracle.godunov_solve(sc.build_flux(), sc.build_ic(), cells + left + right, t,
            domain=domain, source=sc.build_source())


@dataclass
class ErrorRow:
    n: int
    d_max: float
    raw: float
    sharp: float | None


def error_table(sc: Scenario, ns, t: float, ref: dict | None = None, post: bool = True,
        reference=None) -> list[ErrorRow]:
    """L1 error at ``t`` for every resolution in ``ns``; ``reference`` may be
    given as a ready polyline."""
    from raretrack.postprocess import ERROR_SAMPLES, evaluate, l1_distance, sharpen_shocks

    ns = [int(n) for n in ns]
    if reference is None:
        reference = reference_polyline(sc, t, max(ns), ref)
    window = reference_window(sc, ref)
    rows = []
    for n in ns:
        fr = simulate(sc, n, times=[t])[t]
        raw = l1_distance(evaluate(fr, ERROR_SAMPLES), reference, window)
        sharp = None
        if post:
            sharp = l1_distance(evaluate(sharpen_shocks(fr), ERROR_SAMPLES), reference, window)
        rows.append(ErrorRow(n, fr.d_max, raw, sharp))
    return rows


def observed_order(spacings, errors) -> float:
    """Least-squares slope of ``log error`` against ``log spacing``."""
    h = np.log(np.asarray(spacings, dtype=float))
    e = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(h, e, 1)[0])

# }}}


def builtin_scenarios() -> list[str]:
    files = resources.files("raretrack").joinpath("scenarios")
    return sorted(p.name for p in files.iterdir() if p.name.endswith(".json"))


def load_builtin(name: str) -> Scenario:
    if not name.endswith(".json"):
        name += ".json"
    text = resources.files("raretrack").joinpath("scenarios", name).read_text()
    return Scenario.loads(text)


def scenario_path(name: str) -> str:
    if not name.endswith(".json"):
        name += ".json"
    return str(resources.files("raretrack").joinpath("scenarios", name))
