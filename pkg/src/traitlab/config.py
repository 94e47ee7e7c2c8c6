"""TOML configuration for the command-line tools.

One file drives all subcommands; each lives in its own table:

    [run]        physical setup and numerics of a single simulation
    [mortality]  which death-rate profile the run uses
    [sweep]      epsilon ladder and burn-in exponents
    [suite]      validation-suite overrides (seed, sizes, fault knobs)
    [asexual]    the sexual/asexual variance comparison

Unknown tables or keys are hard errors, so a typo cannot silently fall
back to a default.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .dynamics import RunConfig
from .errors import ConfigError
from .harness import (DEFAULT_BETA, DEFAULT_EPSILONS, DEFAULT_T_STAR_FACTOR,
                      SUITE_DEFAULTS, ContrastSettings)
from .mortality import (MortalitySpec, double_well, quadratic, quartic_well,
                        tabulated)

_RUN_INT_KEYS = {"n_points", "k0", "n_snapshots"}
_RUN_BOOL_KEYS = {"strict_hypotheses"}
_RUN_STR_KEYS = {"model"}
_RUN_KEYS = {f.name for f in dataclasses.fields(RunConfig)} - {"mortality"}

_CONTRAST_INT_KEYS = {"n_points"}
_CONTRAST_KEYS = {f.name for f in dataclasses.fields(ContrastSettings)}

_MORTALITY_KEYS = {
    "quadratic": {"s", "window"},
    "quartic_well": {"a", "b", "window"},
    "double_well": {"a", "b", "window"},
    "tabulated": {"x", "m", "window"},
}


@dataclass(frozen=True)
class HarnessConfig:
    """Everything the CLI subcommands need, with defaults filled in."""

    run: RunConfig
    sweep_epsilons: Tuple[float, ...] = DEFAULT_EPSILONS
    beta: float = DEFAULT_BETA
    t_star_factor: float = DEFAULT_T_STAR_FACTOR
    suite_overrides: Dict = dataclasses.field(default_factory=dict)
    contrast: ContrastSettings = ContrastSettings()


def _reject_unknown(table: Dict, allowed, where: str) -> None:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {unknown}; "
                          f"allowed: {sorted(allowed)}")


def _as_float(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def _as_int(value, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value


def _mortality_from_table(table: Dict) -> MortalitySpec:
    table = dict(table)
    kind = table.pop("kind", "quadratic")
    if kind not in _MORTALITY_KEYS:
        raise ConfigError(f"unknown mortality kind {kind!r}; expected one "
                          f"of {sorted(_MORTALITY_KEYS)}")
    _reject_unknown(table, _MORTALITY_KEYS[kind], "mortality")
    if kind == "quadratic":
        return quadratic(_as_float(table.get("s", 1.0), "s"),
                         window=_as_float(table.get("window", 0.7), "window"))
    if kind == "quartic_well":
        return quartic_well(_as_float(table.get("a", 1.0), "a"),
                            _as_float(table.get("b", 0.0), "b"),
                            window=_as_float(table.get("window", 0.7),
                                             "window"))
    if kind == "double_well":
        kwargs = {}
        if "window" in table:
            kwargs["window"] = _as_float(table["window"], "window")
        return double_well(_as_float(table.get("a", 1.0), "a"),
                           _as_float(table.get("b", 1.0), "b"), **kwargs)
    missing = {"x", "m"} - set(table)
    if missing:
        raise ConfigError(f"tabulated mortality needs keys {sorted(missing)}")
    return tabulated(table["x"], table["m"],
                     window=_as_float(table.get("window", 0.5), "window"))


def _run_from_table(table: Dict, mortality: MortalitySpec) -> RunConfig:
    _reject_unknown(table, _RUN_KEYS, "run")
    kwargs = {}
    for key, value in table.items():
        if key in _RUN_INT_KEYS:
            kwargs[key] = _as_int(value, key)
        elif key in _RUN_BOOL_KEYS:
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be a boolean, got {value!r}")
            kwargs[key] = value
        elif key in _RUN_STR_KEYS:
            if not isinstance(value, str):
                raise ConfigError(f"{key} must be a string, got {value!r}")
            kwargs[key] = value
        else:
            kwargs[key] = _as_float(value, key)
    return RunConfig(mortality=mortality, **kwargs)


def _contrast_from_table(table: Dict) -> ContrastSettings:
    _reject_unknown(table, _CONTRAST_KEYS, "asexual")
    kwargs = {}
    for key, value in table.items():
        if key == "s_values":
            if (not isinstance(value, list) or len(value) != 2):
                raise ConfigError("s_values must be a list of two numbers")
            kwargs[key] = (_as_float(value[0], key), _as_float(value[1], key))
        elif key in _CONTRAST_INT_KEYS:
            kwargs[key] = _as_int(value, key)
        else:
            kwargs[key] = _as_float(value, key)
    return ContrastSettings(**kwargs)


def _suite_from_table(table: Dict) -> Dict:
    _reject_unknown(table, SUITE_DEFAULTS, "suite")
    return dict(table)


def config_from_mapping(data: Dict) -> HarnessConfig:
    _reject_unknown(data, {"run", "mortality", "sweep", "suite", "asexual"},
                    "top level")
    for name in ("run", "mortality", "sweep", "suite", "asexual"):
        if name in data and not isinstance(data[name], dict):
            raise ConfigError(f"[{name}] must be a table")
    mortality = _mortality_from_table(data.get("mortality", {}))
    run = _run_from_table(data.get("run", {}), mortality)

    sweep = dict(data.get("sweep", {}))
    _reject_unknown(sweep, {"epsilons", "beta", "t_star_factor"}, "sweep")
    epsilons = sweep.get("epsilons", list(DEFAULT_EPSILONS))
    if not isinstance(epsilons, list) or len(epsilons) == 0:
        raise ConfigError("epsilons must be a non-empty list")
    epsilons = tuple(_as_float(e, "epsilons") for e in epsilons)

    return HarnessConfig(
        run=run,
        sweep_epsilons=epsilons,
        beta=_as_float(sweep.get("beta", DEFAULT_BETA), "beta"),
        t_star_factor=_as_float(sweep.get("t_star_factor",
                                          DEFAULT_T_STAR_FACTOR),
                                "t_star_factor"),
        suite_overrides=_suite_from_table(data.get("suite", {})),
        contrast=_contrast_from_table(data.get("asexual", {})),
    )


def load_config(path: Optional[str] = None) -> HarnessConfig:
    """Parse a TOML file into a HarnessConfig; None means all defaults."""
    if path is None:
        return config_from_mapping({})
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}")
    return config_from_mapping(data)
