"""Strict JSON experiment configuration.

Unknown keys are errors so that a misspelt hypothesis (say a missing ``K``)
can never be silently ignored.  All cross-field checks run before any
computation; failures raise :class:`ConfigError` naming the offending field.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from . import geometry
from .dynamics import (
    EpsRicciSphere,
    FlowSpec,
    HorizonError,
    LogHeat,
    LogSobolev,
    LogSobolevEps,
    RicciSphere,
    StaticSphere,
    StaticTorus,
    output_grid,
)
from .harnack import AdmissibilityError, Check, ConstraintParams, HarnackKind, check_admissible, k_min

EQUATIONS = ("log_heat", "log_sobolev_eps", "log_sobolev")
METRICS = ("static", "eps_ricci", "ricci")
KINDS = tuple(c.value for c in Check) + ("integrated",)
DEFAULT_SWEEP_CAP = 256


class ConfigError(ValueError):
    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass(frozen=True)
class ManifoldConfig:
    kind: str
    dim: int = 2
    n: int = 64
    side_length: float = 2.0 * math.pi
    r0: float = 1.0


@dataclass(frozen=True)
class FlowConfig:
    equation: str
    a: float | None = None
    epsilon: float | None = None
    metric: str = "static"


@dataclass(frozen=True)
class TimeConfig:
    t_end: float
    dt_safety: float = 0.25
    t_min: float = 0.01
    output_count: int = 100


@dataclass(frozen=True)
class InitConfig:
    seed: int = 0
    max_freq: int = 2
    amplitude: float = 1.0
    offset: float | None = None


@dataclass(frozen=True)
class ConstrainedConfig:
    enabled: bool = False
    c0: float | None = None
    K: float | None = None
    seed2: int = 1


@dataclass(frozen=True)
class CheckConfig:
    kinds: tuple[str, ...] = ()
    tol_C: float = 10.0
    integrated_samples: int = 20
    path_seed: int = 0


@dataclass(frozen=True)
class SweepConfig:
    a: tuple[float, ...] | None = None
    epsilon: tuple[float, ...] | None = None
    seed: tuple[int, ...] | None = None
    resolution: tuple[int, ...] | None = None
    cap: int = DEFAULT_SWEEP_CAP


@dataclass(frozen=True)
class ExperimentConfig:
    manifold: ManifoldConfig
    flow: FlowConfig
    time: TimeConfig
    init: InitConfig = field(default_factory=InitConfig)
    constrained: ConstrainedConfig = field(default_factory=ConstrainedConfig)
    check: CheckConfig = field(default_factory=CheckConfig)
    sweep: SweepConfig | None = None

    # derived objects -------------------------------------------------------
    def grid(self) -> geometry.ManifoldGrid:
        m = self.manifold
        if m.kind == "torus":
            return geometry.build_torus(m.dim, m.n, m.side_length)
        return geometry.build_sphere(m.n, m.r0)

    def equation(self):
        f = self.flow
        if f.equation == "log_heat":
            return LogHeat(f.a)
        if f.equation == "log_sobolev_eps":
            return LogSobolevEps(f.epsilon)
        return LogSobolev()

    def metric(self):
        m, f = self.manifold, self.flow
        if m.kind == "torus":
            return StaticTorus()
        if f.metric == "static":
            return StaticSphere(m.r0)
        if f.metric == "eps_ricci":
            return EpsRicciSphere(m.r0, f.epsilon)
        return RicciSphere(m.r0)

    def output_times(self) -> tuple[float, ...]:
        return output_grid(self.time.t_min, self.time.t_end, self.time.output_count)

    def flow_spec(self) -> FlowSpec:
        return FlowSpec(self.grid(), self.equation(), self.metric(), self.time.t_end,
                        self.output_times(), self.time.dt_safety)

    def constraint_params(self) -> ConstraintParams | None:
        c = self.constrained
        if not c.enabled or c.c0 is None or c.K is None:
            return None
        return ConstraintParams(c.c0, c.K)

    def offset(self) -> float:
        if self.init.offset is not None:
            return self.init.offset
        return self.init.amplitude + 1.0 if self.flow.equation == "log_sobolev" else 0.0

    def harnack_kinds(self) -> list[tuple[str, HarnackKind | None]]:
        out = []
        for name in self.check.kinds:
            if name == "integrated":
                out.append((name, None))
                continue
            check = Check(name)
            if check is Check.INTERPOLATED:
                kind = HarnackKind.interpolated(self.flow.epsilon)
            elif check is Check.GRADIENT:
                kind = HarnackKind.gradient()
            else:
                kind = HarnackKind(check, a=self.flow.a, params=self.constraint_params())
            out.append((name, kind))
        return out

    def with_overrides(self, tol_C: float | None = None, t_min: float | None = None) -> "ExperimentConfig":
        cfg = self
        if tol_C is not None:
            if not tol_C > 0:
                raise ConfigError("--tol-c", f"must be positive, got {tol_C}")
            cfg = replace(cfg, check=replace(cfg.check, tol_C=float(tol_C)))
        if t_min is not None:
            cfg = replace(cfg, time=replace(cfg.time, t_min=float(t_min)))
        validate(cfg)
        return cfg

    def to_dict(self) -> dict[str, Any]:
        def plain(obj):
            d = {}
            for k, v in obj.__dict__.items():
                d[k] = list(v) if isinstance(v, tuple) else v
            return d
        out = {s: plain(getattr(self, s)) for s in ("manifold", "flow", "time", "init", "constrained", "check")}
        if self.sweep is not None:
            out["sweep"] = plain(self.sweep)
        return out


# parsing -------------------------------------------------------------------------

def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _as_float(where: str, v) -> float:
    if not _is_number(v):
        raise ConfigError(where, f"expected a finite number, got {v!r}")
    return float(v)


def _as_int(where: str, v) -> int:
    if isinstance(v, bool) or not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())):
        raise ConfigError(where, f"expected an integer, got {v!r}")
    return int(v)


def _as_bool(where: str, v) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(where, f"expected true/false, got {v!r}")
    return v


def _as_str(where: str, v, choices) -> str:
    if v not in choices:
        raise ConfigError(where, f"expected one of {', '.join(choices)}, got {v!r}")
    return v


def _section(doc: dict, name: str, allowed: dict, required: tuple[str, ...] = (), optional_section=False):
    if name not in doc:
        if optional_section:
            return None
        raise ConfigError(name, "missing section")
    sec = doc[name]
    if not isinstance(sec, dict):
        raise ConfigError(name, "expected an object")
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"{name}.{key}", "unknown key")
    for key in required:
        if key not in sec:
            raise ConfigError(f"{name}.{key}", "required key missing")
    out = {}
    for key, conv in allowed.items():
        if key in sec and sec[key] is not None:
            out[key] = conv(f"{name}.{key}", sec[key])
    return out


def _list_of(conv):
    def parse(where, v):
        if not isinstance(v, list):
            raise ConfigError(where, f"expected a list, got {v!r}")
        if not v:
            raise ConfigError(where, "sweep lists must not be empty")
        return tuple(conv(f"{where}[{i}]", x) for i, x in enumerate(v))
    return parse


def parse_config(doc: Any) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be a JSON object")
    sections = ("manifold", "flow", "time", "init", "constrained", "check", "sweep")
    for key in doc:
        if key not in sections:
            raise ConfigError(key, "unknown section")
    man = _section(doc, "manifold", {
        "kind": lambda w, v: _as_str(w, v, ("torus", "sphere")),
        "dim": _as_int, "n": _as_int, "n_theta": _as_int,
        "side_length": _as_float, "r0": _as_float,
    }, required=("kind",))
    if man["kind"] == "torus":
        for bad in ("n_theta", "r0"):
            if bad in man:
                raise ConfigError(f"manifold.{bad}", "only valid for kind=sphere")
    else:
        for bad in ("n", "dim", "side_length"):
            if bad in man:
                raise ConfigError(f"manifold.{bad}", "only valid for kind=torus")
        if "n_theta" in man:
            man["n"] = man.pop("n_theta")
        man.setdefault("n", 128)
    flow = _section(doc, "flow", {
        "equation": lambda w, v: _as_str(w, v, EQUATIONS),
        "a": _as_float, "epsilon": _as_float,
        "metric": lambda w, v: _as_str(w, v, METRICS),
    }, required=("equation",))
    time = _section(doc, "time", {
        "t_end": _as_float, "dt_safety": _as_float, "t_min": _as_float, "output_count": _as_int,
    }, required=("t_end",))
    init = _section(doc, "init", {
        "seed": _as_int, "max_freq": _as_int, "amplitude": _as_float, "offset": _as_float,
    }, optional_section=True) or {}
    cons = _section(doc, "constrained", {
        "enabled": _as_bool, "c0": _as_float, "K": _as_float, "seed2": _as_int,
    }, optional_section=True) or {}
    check = _section(doc, "check", {
        "kinds": _list_of(lambda w, v: _as_str(w, v, KINDS)),
        "tol_C": _as_float, "integrated_samples": _as_int, "path_seed": _as_int,
    }, optional_section=True) or {}
    sweep = _section(doc, "sweep", {
        "a": _list_of(_as_float), "epsilon": _list_of(_as_float),
        "seed": _list_of(_as_int), "resolution": _list_of(_as_int), "cap": _as_int,
    }, optional_section=True)
    cfg = ExperimentConfig(
        manifold=ManifoldConfig(**man),
        flow=FlowConfig(**flow),
        time=TimeConfig(**time),
        init=InitConfig(**init),
        constrained=ConstrainedConfig(**cons),
        check=CheckConfig(**check),
        sweep=SweepConfig(**sweep) if sweep is not None else None,
    )
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigError(str(p), "config file not found") from None
    except OSError as exc:
        raise ConfigError(str(p), f"cannot read config: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}", f"invalid JSON ({exc.msg})") from None
    return parse_config(doc)


# validation ------------------------------------------------------------------------

def validate(cfg: ExperimentConfig) -> None:
    """Cross-field checks; raises :class:`ConfigError` before any compute."""
    m, f, t, i, c, k = cfg.manifold, cfg.flow, cfg.time, cfg.init, cfg.constrained, cfg.check
    try:
        grid = cfg.grid()
    except ValueError as exc:
        raise ConfigError("manifold", str(exc)) from None

    if f.equation == "log_heat":
        if f.a is None:
            raise ConfigError("flow.a", "required for the log-heat equation")
        if f.a == 0:
            raise ConfigError("flow.a", "a is a nonzero real constant (got 0)")
        if f.epsilon is not None:
            raise ConfigError("flow.epsilon", "not used by the log-heat equation")
        if f.metric != "static":
            raise ConfigError("flow.metric", "the log-heat equation runs on static metrics")
    else:
        if f.a is not None:
            raise ConfigError("flow.a", f"not used by {f.equation}")
    if f.equation == "log_sobolev_eps":
        if m.kind != "sphere":
            raise ConfigError("manifold.kind", "the eps-coupled equation is posed on the sphere")
        if f.epsilon is None:
            raise ConfigError("flow.epsilon", "required for log_sobolev_eps")
        if f.epsilon < 0:
            raise ConfigError("flow.epsilon", f"must be >= 0, got {f.epsilon}")
        if f.metric == "ricci" or (f.metric == "static" and f.epsilon != 0):
            raise ConfigError("flow.metric", "log_sobolev_eps pairs with eps_ricci (or static when epsilon = 0)")
    if f.equation == "log_sobolev":
        if f.epsilon is not None:
            raise ConfigError("flow.epsilon", "not used by log_sobolev")
        if f.metric == "eps_ricci":
            raise ConfigError("flow.metric", "log_sobolev couples to the Ricci flow (metric=ricci) or a static metric")
    if m.kind == "torus" and f.metric != "static":
        raise ConfigError("flow.metric", "the torus metric is static")

    if not 0 < t.dt_safety <= 1:
        raise ConfigError("time.dt_safety", f"must lie in (0, 1], got {t.dt_safety}")
    if not t.t_end > 0:
        raise ConfigError("time.t_end", f"must be positive, got {t.t_end}")
    if not 0 < t.t_min <= t.t_end:
        raise ConfigError("time.t_min", f"must lie in (0, t_end], got {t.t_min}")
    if t.output_count < 1:
        raise ConfigError("time.output_count", "must be >= 1")
    if t.output_count > 100_000:
        raise ConfigError("time.output_count", "must be <= 100000")
    horizon = cfg.metric().horizon() if m.kind == "sphere" else math.inf
    if not t.t_end < horizon:
        raise ConfigError(
            "time.t_end",
            f"t_end={t.t_end} reaches the metric horizon r0^2/(2 eps) = {horizon:.6g}; "
            "the metric must stay positive",
        )

    if i.max_freq < 1:
        raise ConfigError("init.max_freq", "must be >= 1")
    if not i.amplitude > 0:
        raise ConfigError("init.amplitude", "must be positive")
    if f.equation == "log_sobolev" and not cfg.offset() > i.amplitude:
        raise ConfigError("init.offset", "log_sobolev needs offset > amplitude so that 0 < f < 1")

    if c.enabled:
        if f.equation != "log_heat":
            raise ConfigError("constrained.enabled", "constrained pairs are log-heat experiments")
        if c.c0 is not None and not 0 < c.c0 < 1:
            raise ConfigError("constrained.c0", f"must lie in (0, 1), got {c.c0}")
        if c.K is not None and c.c0 is None:
            raise ConfigError("constrained.c0", "K needs a ratio floor c0")
        if f.a < 0 and (c.c0 is None or c.K is None):
            raise ConfigError("constrained", "a < 0 needs both c0 and K")
        if c.K is not None:
            if not c.K > 0:
                raise ConfigError("constrained.K", f"must be positive, got {c.K}")
            if c.K < k_min(c.c0):
                raise ConfigError("constrained.K",
                                  f"K={c.K} is below -ln(c0)/(1-c0^2) - 1/2 = {k_min(c.c0):.6g}")
    elif c.c0 is not None or c.K is not None:
        raise ConfigError("constrained.enabled", "c0/K given but constrained runs are not enabled")

    if not k.kinds:
        raise ConfigError("check.kinds", "at least one kind is required")
    if len(set(k.kinds)) != len(k.kinds):
        raise ConfigError("check.kinds", "duplicate kinds")
    if not k.tol_C > 0:
        raise ConfigError("check.tol_C", "must be positive")
    if k.integrated_samples < 1:
        raise ConfigError("check.integrated_samples", "must be >= 1")
    curv = geometry.curvature(grid, cfg.metric().r_squared(0.0) if m.kind == "sphere" else 1.0)
    for name in k.kinds:
        where = f"check.kinds[{name}]"
        if name == "integrated":
            if f.equation not in ("log_heat", "log_sobolev_eps"):
                raise ConfigError(where, "integrated checks apply to log_heat and log_sobolev_eps runs")
            if t.output_count < 2:
                raise ConfigError(where, "needs at least two snapshots")
            continue
        check = Check(name)
        if check in (Check.TRACE, Check.MATRIX, Check.CONSTRAINED_TRACE, Check.CONSTRAINED_MATRIX):
            if f.equation != "log_heat":
                raise ConfigError(where, "needs the log-heat equation")
            if check in (Check.CONSTRAINED_TRACE, Check.CONSTRAINED_MATRIX) and not c.enabled:
                raise ConfigError(where, "needs constrained.enabled = true")
            try:
                check_admissible(check, f.a, curv, cfg.constraint_params())
            except AdmissibilityError as exc:
                raise ConfigError(where, str(exc)) from None
        elif check is Check.INTERPOLATED and f.equation != "log_sobolev_eps":
            raise ConfigError(where, "needs the log_sobolev_eps equation")
        elif check is Check.GRADIENT and f.equation != "log_sobolev":
            raise ConfigError(where, "needs the log_sobolev equation")

    try:
        cfg.flow_spec()
    except HorizonError as exc:
        raise ConfigError("time.t_end", str(exc)) from None
    except ValueError as exc:
        raise ConfigError("flow", str(exc)) from None

    s = cfg.sweep
    if s is not None:
        if s.cap < 1:
            raise ConfigError("sweep.cap", "must be >= 1")
        if s.a is not None and f.equation != "log_heat":
            raise ConfigError("sweep.a", "only the log-heat equation has a parameter a")
        if s.epsilon is not None and f.equation != "log_sobolev_eps":
            raise ConfigError("sweep.epsilon", "only log_sobolev_eps has a parameter epsilon")
        if s.resolution is not None:
            if len(set(s.resolution)) != len(s.resolution):
                raise ConfigError("sweep.resolution", "duplicate resolutions")
            if any(r < geometry.MIN_POINTS for r in s.resolution):
                raise ConfigError("sweep.resolution", f"resolutions must be >= {geometry.MIN_POINTS}")


def sweep_combos(cfg: ExperimentConfig) -> list[tuple[dict[str, Any], ExperimentConfig]]:
    """Expand the sweep section into validated single-experiment configs (Cartesian product)."""
    s = cfg.sweep
    if s is None:
        raise ConfigError("sweep", "missing section")
    axes = [(name, getattr(s, name)) for name in ("a", "epsilon", "seed", "resolution")
            if getattr(s, name) is not None]
    if not axes:
        raise ConfigError("sweep", "no sweep lists given")
    size = math.prod(len(v) for _, v in axes)
    if size > s.cap:
        raise ConfigError("sweep", f"{size} combinations exceed the cap of {s.cap}")
    combos = [{}]
    for name, values in axes:
        combos = [dict(c, **{name: v}) for c in combos for v in values]
    out = []
    for combo in combos:
        sub = replace(cfg, sweep=None)
        if "a" in combo:
            sub = replace(sub, flow=replace(sub.flow, a=combo["a"]))
        if "epsilon" in combo:
            sub = replace(sub, flow=replace(sub.flow, epsilon=combo["epsilon"]))
        if "seed" in combo:
            sub = replace(sub, init=replace(sub.init, seed=combo["seed"]))
        if "resolution" in combo:
            sub = replace(sub, manifold=replace(sub.manifold, n=combo["resolution"]))
        try:
            validate(sub)
        except ConfigError as exc:
            label = ", ".join(f"{k}={v}" for k, v in combo.items())
            raise ConfigError(f"sweep[{label}]", str(exc)) from None
        out.append((combo, sub))
    return out
