"""Experiment configuration files.

INI-style ``key = value`` lines grouped into sections::

    [model]      n_sites J h gamma_minus gamma_d_loc gamma_d_col alpha
    [optimizer]  method epsilon delta0 decay n_iterations n_mc n_chains seed
                 hermitize mc_growth burn_in burn_in_per_iteration max_retries exact
    [run]        chi init_seed init_scale init_checkpoint output_dir
                 checkpoint_every observables ed_compare target_cost_per_site
    [sweep]      parameter values

``alpha = inf`` selects nearest-neighbour coupling. ``mc_growth`` is a comma
list of ``iteration:n_mc`` pairs. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigParse, VmpomcError
from .models import ModelSpec
from .observables import is_observable_name
from .optimizer import OptimizerConfig


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float(text: str) -> float:
    v = float(text)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _growth(text: str) -> tuple:
    out = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        k, m = item.split(":")
        out.append((int(k), int(m)))
    return tuple(out)


def _names(text: str) -> tuple:
    names = tuple(filter(None, (t.strip() for t in text.split(","))))
    for n in names:
        if not is_observable_name(n):
            raise ValueError(f"unknown observable {n!r}")
    return names


_MODEL_KEYS = {"n_sites": int, "J": _float, "h": _float, "gamma_minus": _float,
               "gamma_d_loc": _float, "gamma_d_col": _float, "alpha": _float}
_OPT_KEYS = {"method": str, "epsilon": _float, "delta0": _float, "decay": _float,
             "n_iterations": int, "n_mc": int, "n_chains": int, "seed": int,
             "hermitize": _bool, "mc_growth": _growth, "burn_in": int,
             "burn_in_per_iteration": int, "max_retries": int, "exact": _bool}
_RUN_KEYS = {"chi": int, "init_seed": int, "init_scale": _float, "init_checkpoint": str,
             "output_dir": str, "checkpoint_every": int, "observables": _names,
             "ed_compare": _bool, "target_cost_per_site": _float}
_SWEEP_KEYS = {"parameter": str, "values": str}
_SECTIONS = {"model": _MODEL_KEYS, "optimizer": _OPT_KEYS, "run": _RUN_KEYS, "sweep": _SWEEP_KEYS}
SWEEPABLE = tuple(k for k in _MODEL_KEYS if k != "n_sites")


@dataclass(frozen=True)
class SweepAxis:
    parameter: str
    values: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    optimizer: OptimizerConfig
    chi: int = 4
    init_seed: int | None = None
    init_scale: float = 0.1
    init_checkpoint: str | None = None
    output_dir: str = "out"
    checkpoint_every: int = 0
    ed_compare: bool = False
    target_cost_per_site: float | None = None
    sweep: SweepAxis | None = None

    @property
    def observables(self) -> tuple:
        return self.optimizer.observables

    def replace(self, **changes) -> "ExperimentConfig":
        return type(self)(**{f.name: getattr(self, f.name) for f in fields(self)} | changes)


def _section(parser, name) -> dict:
    if not parser.has_section(name):
        return {}
    schema = _SECTIONS[name]
    out = {}
    for key, raw in parser.items(name):
        if key not in schema:
            raise ConfigParse(f"[{name}] unknown key {key!r}")
        try:
            out[key] = schema[key](raw)
        except (ValueError, TypeError) as exc:
            raise ConfigParse(f"[{name}] bad value for {key!r}: {raw!r} ({exc})") from exc
    return out


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (J vs j)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigParse(f"{source}: {exc}") from exc
    for name in parser.sections():
        if name not in _SECTIONS:
            raise ConfigParse(f"{source}: unknown section [{name}]")
    model_kw = _section(parser, "model")
    opt_kw = _section(parser, "optimizer")
    run_kw = _section(parser, "run")
    sweep_kw = _section(parser, "sweep")
    if "n_sites" not in model_kw:
        raise ConfigParse(f"{source}: [model] missing required key 'n_sites'")
    observables = run_kw.pop("observables", ("sx", "sy", "sz"))
    try:
        model = ModelSpec(**model_kw)
    except ValueError as exc:
        raise ConfigParse(f"{source}: [model] {exc}") from exc
    try:
        opt = OptimizerConfig(observables=observables, **opt_kw)
    except ValueError as exc:
        raise ConfigParse(f"{source}: [optimizer] {exc}") from exc
    sweep = None
    if parser.has_section("sweep"):
        param = sweep_kw.get("parameter")
        if param not in SWEEPABLE:
            raise ConfigParse(f"{source}: [sweep] 'parameter' must be one of {SWEEPABLE}, got {param!r}")
        try:
            values = tuple(_float(v) for v in sweep_kw.get("values", "").split(",") if v.strip())
        except ValueError as exc:
            raise ConfigParse(f"{source}: [sweep] bad value in 'values' ({exc})") from exc
        if not values:
            raise ConfigParse(f"{source}: [sweep] 'values' is empty")
        if not all(math.isfinite(v) for v in values) and param != "alpha":
            raise ConfigParse(f"{source}: [sweep] 'values' must be finite")
        sweep = SweepAxis(param, values)
    if run_kw.get("chi", 4) < 1:
        raise ConfigParse(f"{source}: [run] 'chi' must be positive")
    return ExperimentConfig(model=model, optimizer=opt, sweep=sweep, **run_kw)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


__all__ = ["ConfigParse", "ExperimentConfig", "SweepAxis", "VmpomcError", "load_config", "parse_config"]
