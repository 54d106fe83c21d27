"""Flat key = value experiment configuration with dotted sections.

Example::

    kind = trajectory
    model.alpha = 0.5
    sweep.L = 8, 10
    sweep.h = 0.9
    sweep.p = 0.1, 0.2, 0.3
    plan.trajectories = 200
    plan.cycles = 150

Lines starting with ``#`` are comments.  Unknown keys, type mismatches and
empty grids raise :class:`ConfigError` naming the key.
"""

from __future__ import annotations

from dataclasses import dataclass, field

KINDS = ("trajectory", "average_dm", "conditioned_dm", "permsym", "meanfield", "cluster_mf",
         "ref_qubit", "snapshots", "collapse")


class ConfigError(ValueError):
    pass


def _floats(v):
    return tuple(float(x) for x in v)


def _ints(v):
    return tuple(int(x) for x in v)


def _strs(v):
    return tuple(str(x) for x in v)


# key -> (kind of value, default)
SCHEMA = {
    "kind": ("str", None),
    "model.alpha": ("float", 0.0),
    "model.J": ("float", 1.0),
    "model.T": ("float", 1.0),
    "sweep.L": ("ints", None),
    "sweep.h": ("floats", (0.9,)),
    "sweep.p": ("floats", None),
    "plan.trajectories": ("int", 500),
    "plan.cycles": ("int", 200),
    "plan.observables": ("strs", ("X", "X2", "M2", "M4")),
    "plan.sample_phase": ("str", "both"),
    "plan.init": ("str", "x_polarized"),
    "run.seed": ("int", 0),
    "run.out": ("str", "results"),
    "run.threads": ("int", 1),
    "permsym.method": ("str", "blocks"),
    "meanfield.max_cycles": ("int", 20000),
    "cluster_mf.n_steps": ("int", 1000),
    "ref_qubit.prep": ("str", "stochastic"),
    "ref_qubit.s0": ("float", 0.15),
    "snapshots.m": ("int", 10),
    "snapshots.n": ("int", 5000),
    "snapshots.burn_in": ("int", 0),
    "snapshots.gap": ("int", 0),
    "snapshots.metric": ("str", "hamming"),
    "snapshots.basis": ("str", "X"),
    "collapse.inputs": ("strs", ()),
    "collapse.form": ("str", "binder"),
    "collapse.observable": ("str", "binder"),
    "collapse.phase": ("str", "after"),
    "collapse.p_c": ("float", 0.5),
    "collapse.nu": ("float", 1.0),
    "collapse.expo": ("float", 0.0),
    "collapse.bootstrap": ("int", 200),
}

REQUIRED = ("kind",)
CHOICES = {
    "kind": KINDS,
    "plan.sample_phase": ("before", "after", "both"),
    "plan.init": ("x_polarized", "all_down", "mixed"),
    "permsym.method": ("blocks", "sectors", "krylov"),
    "ref_qubit.prep": ("stochastic", "xx_chain"),
    "snapshots.metric": ("hamming", "integer_xor"),
    "snapshots.basis": ("X", "Z"),
    "collapse.form": ("binder", "qmi", "tau"),
    "collapse.phase": ("before", "after"),
}


def _coerce(key: str, kind: str, raw: str):
    try:
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        items = [x.strip() for x in raw.split(",") if x.strip()]
        if kind == "floats":
            return _floats(items)
        if kind == "ints":
            return _ints(items)
        if kind == "strs":
            return _strs(items)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind}") from exc
    raise AssertionError(kind)


def _fmt(kind: str, v) -> str:
    if kind in ("floats", "ints", "strs"):
        return ", ".join(repr(x) if kind == "floats" else str(x) for x in v)
    if kind == "float":
        return repr(float(v))
    return str(v)


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def kind(self) -> str:
        return self.values["kind"]

    def updated(self, changes: dict) -> "ExperimentConfig":
        """Copy with the given dotted keys replaced, re-validated."""
        v = dict(self.values)
        v.update(changes)
        return validate(v)


def validate(values: dict) -> ExperimentConfig:
    v = {}
    for key in values:
        if key not in SCHEMA:
            raise ConfigError(f"{key}: unknown key")
    for key, (kind, default) in SCHEMA.items():
        v[key] = values.get(key, default)
    for key in REQUIRED:
        if v[key] is None:
            raise ConfigError(f"{key}: required")
    for key, allowed in CHOICES.items():
        if v[key] is not None and v[key] not in allowed:
            raise ConfigError(f"{key}: {v[key]!r} not one of {allowed}")
    kind = v["kind"]
    needs_L = kind not in ("meanfield", "collapse")
    needs_p = kind != "collapse"
    for key, need in (("sweep.L", needs_L), ("sweep.p", needs_p), ("sweep.h", needs_p)):
        if v[key] is None:
            if need:
                raise ConfigError(f"{key}: required for kind {kind}")
            v[key] = ()
        elif need and len(v[key]) == 0:
            raise ConfigError(f"{key}: empty grid")
    for p in v["sweep.p"]:
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"sweep.p: {p} outside [0, 1]")
    for L in v["sweep.L"]:
        if L < 1:
            raise ConfigError(f"sweep.L: {L} is not a positive size")
    for key in ("plan.trajectories", "plan.cycles", "run.threads"):
        if v[key] < 1:
            raise ConfigError(f"{key}: must be >= 1")
    if kind == "collapse" and not v["collapse.inputs"]:
        raise ConfigError("collapse.inputs: empty list")
    return ExperimentConfig(v)


def parse_config(text: str) -> ExperimentConfig:
    raw = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, val = (x.strip() for x in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{key}: unknown key (line {n})")
        if key in raw:
            raise ConfigError(f"{key}: duplicate key (line {n})")
        raw[key] = _coerce(key, SCHEMA[key][0], val)
    return validate(raw)


def emit_config(cfg: ExperimentConfig) -> str:
    """Canonical form: every key, sorted, with defaults written out."""
    lines = []
    for key in sorted(SCHEMA):
        kind = SCHEMA[key][0]
        val = cfg.values[key]
        if val is None:
            continue
        if kind in ("floats", "ints", "strs") and len(val) == 0:
            continue
        lines.append(f"{key} = {_fmt(kind, val)}")
    return "\n".join(lines) + "\n"


def config_dict(cfg: ExperimentConfig) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(cfg.values.items())}
