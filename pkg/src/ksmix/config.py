"""Flat ``dotted.key = value`` experiment configuration.

One pair per line, ``#`` starts a comment.  Unknown keys are rejected and
every value is validated against the model and policy constructors before
any run starts.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, KsmixError
from .evolve import ModelParams, StepPolicy, initial_data
from .flows import FlowSpec, load_custom_flow
from .grid import PhysicalField, TorusGrid

_REQUIRED = object()


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _str_list(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "dim": (int, _REQUIRED),
    "n": (int, _REQUIRED),
    "alpha": (float, _REQUIRED),
    "beta": (float, 2.0),
    "amplitude_A": (float, 0.0),
    "flow.kind": (str, "none"),
    "flow.m": (int, 1),
    "flow.axis": (int, 0),
    "flow.tau_f": (float, None),
    "flow.file": (_str_list, None),
    "nonlinear": (_bool, True),
    "transport": (str, "explicit"),
    "dt_max": (float, 1e-3),
    "cfl": (float, 0.4),
    "t_end": (float, _REQUIRED),
    "record_every": (int, 1),
    "record_dt": (float, None),
    "blowup.linf_factor": (float, 1e3),
    "blowup.tail_ratio": (float, 1e-2),
    "init.kind": (str, _REQUIRED),
    "init.mass": (float, None),
    "init.width": (float, None),
    "init.band": (int, None),
    "init.amplitude": (float, None),
    "init.k": (_int_list, None),
    "init.c": (float, None),
    "init.mean_zero": (_bool, None),
    "seed": (int, 0),
    "p_diag": (float, 2.0),
    "output.dir": (str, "out"),
    "output.snapshot_every": (int, 0),
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """Explicitly set keys; defaults are filled in on access."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        if key not in SCHEMA:
            raise KeyError(key)
        if key in self.values:
            return self.values[key]
        default = SCHEMA[key][1]
        if default is _REQUIRED:
            raise ConfigError(f"missing required key '{key}'")
        return default

    def with_values(self, **updates) -> ExperimentConfig:
        new = dict(self.values)
        for k, v in updates.items():
            new[k.replace("__", ".")] = v
        return ExperimentConfig(new)

    def digest(self) -> str:
        """Hash of the experiment-defining keys (output location excluded)."""
        kept = ExperimentConfig({k: v for k, v in self.values.items() if not k.startswith("output.")})
        return hashlib.sha256(serialize(kept).encode()).hexdigest()[:16]

    # -- builders ----------------------------------------------------------

    def grid(self) -> TorusGrid:
        return TorusGrid(self["dim"], self["n"])

    def flow(self) -> FlowSpec:
        kind = self["flow.kind"]
        if kind == "none":
            return FlowSpec.none()
        if kind == "steady_shear":
            return FlowSpec.steady_shear(self["flow.m"], self["flow.axis"])
        if kind == "alternating_shear":
            return FlowSpec.alternating_shear(self["flow.tau_f"], self["flow.m"])
        if kind == "custom":
            if not self["flow.file"]:
                raise ConfigError("flow.kind = custom needs flow.file")
            return load_custom_flow(self["flow.file"])
        raise ConfigError(f"unknown flow.kind '{kind}'")

    def params(self) -> ModelParams:
        return ModelParams(
            alpha=self["alpha"], beta=self["beta"], A=self["amplitude_A"],
            flow=self.flow(), nonlinear_enabled=self["nonlinear"],
        )

    def policy(self, keep_snapshots: bool = False) -> StepPolicy:
        return StepPolicy(
            t_end=self["t_end"], dt_max=self["dt_max"], cfl_constant=self["cfl"],
            blowup_linf_factor=self["blowup.linf_factor"],
            blowup_tail_ratio=self["blowup.tail_ratio"],
            record_every=self["record_every"], record_dt=self["record_dt"],
            transport=self["transport"], keep_snapshots=keep_snapshots,
        )

    def initial_field(self) -> PhysicalField:
        kw = {}
        for key in ("mass", "width", "band", "amplitude", "k", "c", "mean_zero"):
            v = self[f"init.{key}"]
            if v is not None:
                kw[key] = v
        if self["init.kind"] == "random_smooth":
            kw["seed"] = self["seed"]
        return initial_data(self["init.kind"], self.grid(), **kw)

    def validate(self) -> ExperimentConfig:
        """Raise ConfigError unless every builder accepts the values."""
        for key, (_, default) in SCHEMA.items():
            if default is _REQUIRED and key not in self.values:
                raise ConfigError(f"missing required key '{key}'")
        try:
            grid = self.grid()
            params = self.params()
            if params.nonlinear_enabled:
                params.kernel(grid.d)
            flow = params.flow
            if flow.kind in ("steady_shear", "alternating_shear") and grid.d < 2:
                raise ConfigError("shear flows need dim >= 2")
            if flow.kind == "custom" and flow.components[0].shape != grid.shape:
                raise ConfigError("custom flow resolution does not match the grid")
            self.policy()
            self.initial_field()
        except ConfigError:
            raise
        except KsmixError as exc:
            raise ConfigError(str(exc)) from exc
        return self


def parse(text: str) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for '{key}': {exc}") from exc
    return ExperimentConfig(values)


def serialize(cfg: ExperimentConfig) -> str:
    lines = [f"{k} = {_format(cfg.values[k])}" for k in SCHEMA if k in cfg.values]
    return "\n".join(lines) + "\n"


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse(text)
