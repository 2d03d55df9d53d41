"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment, namespaces are dotted
(``sampler.n_paths``). Only ``scenario`` is required; every other key has a
scenario-dependent default, and :func:`emit_config` writes all of them out
so a report records exactly what ran.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .fields import InvalidInputError, PhysicsParams, SpatialGrid, TimeGrid
from .sampler import SamplerConfig
from .scenarios import SCENARIOS, default_params, default_scenario

DEFAULT_N_PATHS = 100_000
FORMATS = ("csv", "text")


class ConfigError(InvalidInputError):
    """Malformed or inconsistent configuration; names the key and line."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class OutputOptions:
    directory: str = "out"
    format: str = "text"
    dump_fields: bool = True
    field_stride: int = 100
    dump_ensembles: bool = False
    plot_data: bool = False


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    grid: SpatialGrid
    tgrid: TimeGrid
    params: PhysicsParams
    sampler: SamplerConfig | None
    checks: tuple[str, ...]
    output: OutputOptions = field(default_factory=OutputOptions)
    density_floor: float = 1e-10
    drift_shift: float = 0.0
    tolerances: tuple[tuple[str, float], ...] = ()

    def tolerance_overrides(self) -> dict[str, float]:
        return dict(self.tolerances)


_KEYS = (
    "scenario", "seed", "checks",
    "grid.x_min", "grid.x_max", "grid.n_points",
    "time.t_start", "time.t_end", "time.n_steps",
    "physics.mass", "physics.hbar", "physics.nu", "physics.potential", "physics.potential_args",
    "sampler.n_paths", "sampler.step_rule", "sampler.interpolation", "sampler.threads",
    "solver.density_floor",
    "fault.drift_shift",
    "output.dir", "output.format", "output.dump_fields", "output.field_stride",
    "output.dump_ensembles", "output.plot_data",
)


def _tokenize(text: str) -> dict[str, tuple[str, int]]:
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError("expected 'key = value'", line=lineno)
        if key not in _KEYS and not key.startswith("tolerance."):
            raise ConfigError("unknown key", key, lineno)
        if key in entries:
            raise ConfigError("duplicate key", key, lineno)
        entries[key] = (value, lineno)
    return entries


def _convert(entries, key, kind, default):
    if key not in entries:
        return default
    value, lineno = entries[key]
    try:
        if kind is bool:
            if value.lower() not in ("true", "false"):
                raise ValueError(value)
            return value.lower() == "true"
        if kind is int:
            return int(value, 0)
        if kind is float:
            out = float(value)
            if not math.isfinite(out):
                raise ValueError(value)
            return out
        if kind is tuple:
            return tuple(float(v) for v in value.split(",") if v.strip())
        if kind is list:
            return tuple(v.strip() for v in value.split(",") if v.strip())
        return value
    except ValueError:
        raise ConfigError(f"cannot read {value!r} as {kind.__name__}", key, lineno) from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration text."""
    from .runner import CHECKS, SAMPLING_CHECKS, default_checks

    entries = _tokenize(text)
    if "scenario" not in entries:
        raise ConfigError("missing required key", "scenario")
    scenario, line = entries["scenario"]
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}", "scenario", line)

    def line_of(key):
        return entries[key][1] if key in entries else None

    base_params = default_params(scenario)
    try:
        params = PhysicsParams(
            mass=_convert(entries, "physics.mass", float, base_params.mass),
            hbar=_convert(entries, "physics.hbar", float, base_params.hbar),
            potential_id=_convert(entries, "physics.potential", str, base_params.potential_id),
            potential_args=_convert(entries, "physics.potential_args", tuple,
                                    base_params.potential_args),
        )
    except ConfigError:
        raise
    except InvalidInputError as exc:
        key = next((k for k in ("physics.potential_args", "physics.potential",
                                "physics.mass", "physics.hbar") if k in entries), None)
        raise ConfigError(str(exc), key, line_of(key) if key else None) from None
    if "physics.nu" in entries:
        nu = _convert(entries, "physics.nu", float, None)
        if not math.isclose(nu, params.nu, rel_tol=1e-12, abs_tol=0.0):
            raise ConfigError(
                f"physics.nu = {nu!r} must equal physics.hbar / (2 physics.mass) = {params.nu!r}",
                "physics.nu", line_of("physics.nu"))

    base = default_scenario(scenario, params=params)
    try:
        grid = SpatialGrid(
            _convert(entries, "grid.x_min", float, base.grid.x_min),
            _convert(entries, "grid.x_max", float, base.grid.x_max),
            _convert(entries, "grid.n_points", int, base.grid.n_points))
    except ConfigError:
        raise
    except InvalidInputError as exc:
        raise ConfigError(str(exc), "grid", line_of("grid.n_points")) from None
    try:
        tgrid = TimeGrid(
            _convert(entries, "time.t_start", float, base.tgrid.t_start),
            _convert(entries, "time.t_end", float, base.tgrid.t_end),
            _convert(entries, "time.n_steps", int, base.tgrid.n_steps))
    except ConfigError:
        raise
    except InvalidInputError as exc:
        raise ConfigError(str(exc), "time", line_of("time.n_steps")) from None

    checks = _convert(entries, "checks", list, None)
    if checks is None:
        checks = default_checks(scenario)
    for c in checks:
        if c not in CHECKS:
            raise ConfigError(f"unknown check {c!r}", "checks", line_of("checks"))

    seed = _convert(entries, "seed", int, None)
    sampler = None
    if seed is not None:
        try:
            sampler = SamplerConfig(
                n_paths=_convert(entries, "sampler.n_paths", int, DEFAULT_N_PATHS),
                seed=seed,
                step_rule=_convert(entries, "sampler.step_rule", str, "euler_maruyama"),
                interpolation=_convert(entries, "sampler.interpolation", str, "linear_in_x"),
                threads=_convert(entries, "sampler.threads", int, 1))
        except ConfigError:
            raise
        except InvalidInputError as exc:
            raise ConfigError(str(exc), "sampler", line_of("sampler.n_paths")) from None
    needs_seed = [c for c in checks if c in SAMPLING_CHECKS]
    if needs_seed and sampler is None:
        raise ConfigError(f"checks {', '.join(needs_seed)} need a seed", "seed")

    fmt = _convert(entries, "output.format", str, "text")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}", "output.format",
                          line_of("output.format"))
    output = OutputOptions(
        directory=_convert(entries, "output.dir", str, "out"),
        format=fmt,
        dump_fields=_convert(entries, "output.dump_fields", bool, True),
        field_stride=_convert(entries, "output.field_stride", int, 100),
        dump_ensembles=_convert(entries, "output.dump_ensembles", bool, False),
        plot_data=_convert(entries, "output.plot_data", bool, False),
    )
    if output.field_stride < 1:
        raise ConfigError("stride must be positive", "output.field_stride",
                          line_of("output.field_stride"))

    floor = _convert(entries, "solver.density_floor", float, 1e-10)
    if not floor > 0:
        raise ConfigError("density floor must be positive", "solver.density_floor",
                          line_of("solver.density_floor"))
    tolerances = []
    for key in sorted(k for k in entries if k.startswith("tolerance.")):
        check = key.split(".", 1)[1]
        if check not in CHECKS:
            raise ConfigError(f"unknown check {check!r}", key, line_of(key))
        tolerances.append((check, _convert(entries, key, float, None)))

    return RunConfig(scenario, grid, tgrid, params, sampler, tuple(checks), output,
                     floor, _convert(entries, "fault.drift_shift", float, 0.0),
                     tuple(tolerances))


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


# execution settings that cannot change any computed number
RUNTIME_KEYS = frozenset({"sampler.threads", "output.dir"})


def config_items(cfg: RunConfig, runtime: bool = True) -> list[tuple[str, str]]:
    """Every setting with its effective value, in a fixed order.

    ``runtime=False`` drops :data:`RUNTIME_KEYS`, so reports of runs that
    differ only in thread count or output location are byte-identical.
    """
    items = [
        ("scenario", cfg.scenario),
        ("checks", ", ".join(cfg.checks)),
        ("grid.x_min", cfg.grid.x_min), ("grid.x_max", cfg.grid.x_max),
        ("grid.n_points", cfg.grid.n_points),
        ("time.t_start", cfg.tgrid.t_start), ("time.t_end", cfg.tgrid.t_end),
        ("time.n_steps", cfg.tgrid.n_steps),
        ("physics.mass", cfg.params.mass), ("physics.hbar", cfg.params.hbar),
        ("physics.nu", cfg.params.nu), ("physics.potential", cfg.params.potential_id),
        ("physics.potential_args", tuple(float(a) for a in cfg.params.potential_args)),
        ("solver.density_floor", cfg.density_floor),
        ("fault.drift_shift", cfg.drift_shift),
    ]
    if cfg.sampler is not None:
        s = cfg.sampler
        items[1:1] = [("seed", s.seed)]
        items += [("sampler.n_paths", s.n_paths), ("sampler.step_rule", s.step_rule),
                  ("sampler.interpolation", s.interpolation), ("sampler.threads", s.threads)]
    o = cfg.output
    items += [("output.dir", o.directory), ("output.format", o.format),
              ("output.dump_fields", o.dump_fields), ("output.field_stride", o.field_stride),
              ("output.dump_ensembles", o.dump_ensembles), ("output.plot_data", o.plot_data)]
    items += [(f"tolerance.{k}", v) for k, v in cfg.tolerances]
    return [(k, _fmt(v)) for k, v in items if runtime or k not in RUNTIME_KEYS]


def emit_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config_items(cfg))


def with_overrides(cfg: RunConfig, *, seed: int | None = None, out: str | None = None,
                   checks: list[str] | None = None, fmt: str | None = None,
                   threads: int | None = None) -> RunConfig:
    """Apply command-line overrides, re-validating through the parser."""
    text = emit_config(cfg)
    lines = dict(line.split(" = ", 1) for line in text.splitlines())
    if seed is not None:
        lines["seed"] = str(seed)
    if out is not None:
        lines["output.dir"] = out
    if checks:
        lines["checks"] = ", ".join(checks)
    if fmt is not None:
        lines["output.format"] = fmt
    if threads is not None:
        lines["sampler.threads"] = str(threads)
    return parse_config("".join(f"{k} = {v}\n" for k, v in lines.items()))
