"""Experiment configuration: TOML parsing, validation, overrides.

A config names one experiment, a grid size, a seed, and the potential
specs plus per-experiment tables.  Scalar values can be overridden on
the command line (`--set key=value` with dotted paths), which is how
sweeps reuse one file.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .potentials import GaussianBump, PotentialSpec

EXPERIMENT_NAMES = (
    "forward", "dn", "cgo-decay", "reconstruct", "stability",
    "borg-levinson", "s-limit",
)

# experiments whose checks lean on dense oracles cap the grid size
GRID_LIMITS = {
    "forward": 48,
    "dn": 16,
    "cgo-decay": 48,
    "reconstruct": 48,
    "stability": 16,
    "borg-levinson": 16,
    "s-limit": 48,
}


def potential_from_table(table: dict) -> PotentialSpec:
    if not isinstance(table, dict):
        raise ConfigurationError("potential table must be a mapping")
    kind = table.get("kind")
    if kind is None:
        raise ConfigurationError("potential table needs a 'kind' key")
    sigma = float(table.get("sigma", 2.0))
    if kind == "zero":
        return PotentialSpec(kind="zero", sigma=sigma)
    if kind == "constant":
        return PotentialSpec(kind="constant", constant=float(table.get("value", 0.0)),
                             sigma=sigma)
    if kind == "gaussian-bumps":
        bumps = []
        for b in table.get("bumps", []):
            bumps.append(GaussianBump(tuple(float(x) for x in b["center"]),
                                      float(b["width"]), float(b["amplitude"])))
        if not bumps:
            raise ConfigurationError("gaussian-bumps potential needs a bumps array")
        return PotentialSpec(kind="gaussian-bumps", bumps=tuple(bumps), sigma=sigma)
    if kind == "rough-sample":
        return PotentialSpec(
            kind="rough-sample",
            seed=int(table.get("seed", 0)),
            law=str(table.get("law", "uniform")),
            singular_exponent=float(table.get("singular_exponent", 1.5)),
            noise_amplitude=float(table.get("noise_amplitude", 0.0)),
            sigma=float(table.get("sigma", 0.5)),
        )
    raise ConfigurationError(f"unknown potential kind {kind!r}")


@dataclass
class ExperimentConfig:
    experiment: str
    n: int
    seed: int
    out_dir: Path
    potential: Optional[PotentialSpec]
    potential_b: Optional[PotentialSpec]
    options: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def config_hash(self) -> str:
        blob = json.dumps(_canonical(self.raw), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _canonical(obj: Any):
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _apply_override(raw: dict, dotted: str, value: str) -> None:
    keys = dotted.split(".")
    cur = raw
    for k in keys[:-1]:
        if k not in cur or not isinstance(cur[k], dict):
            cur[k] = {}
        cur = cur[k]
    leaf = keys[-1]
    old = cur.get(leaf)
    if isinstance(old, bool):
        cur[leaf] = value.lower() in ("1", "true", "yes")
    elif isinstance(old, int) and not isinstance(old, bool):
        cur[leaf] = int(value)
    elif isinstance(old, float):
        cur[leaf] = float(value)
    elif isinstance(old, str) or old is None:
        try:
            cur[leaf] = json.loads(value)
        except json.JSONDecodeError:
            cur[leaf] = value
    else:
        raise ConfigurationError(
            f"cannot override non-scalar config key {dotted!r}")


def load_config(path, overrides=(), out_root: Optional[str] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config parse error in {path}: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} must look like key=value")
        key, _, value = item.partition("=")
        _apply_override(raw, key.strip(), value.strip())
    return validate_config(raw, path, out_root=out_root)


def validate_config(raw: dict, path: Optional[Path] = None,
                    out_root: Optional[str] = None) -> ExperimentConfig:
    name = raw.get("experiment")
    if name not in EXPERIMENT_NAMES:
        raise ConfigurationError(
            f"config field 'experiment' must be one of {EXPERIMENT_NAMES}, got {name!r}")
    if "n" not in raw:
        raise ConfigurationError("config needs the grid size key 'n'")
    n = raw["n"]
    if not isinstance(n, int) or n < 4:
        raise ConfigurationError(f"'n' must be an integer >= 4, got {n!r}")
    limit = GRID_LIMITS[name]
    if n > limit:
        raise ConfigurationError(
            f"experiment {name!r} caps the grid at n = {limit} (dense oracles); got {n}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigurationError("'seed' must be an integer")

    pot_tbl = raw.get("potential")
    pot = potential_from_table(pot_tbl) if pot_tbl is not None else None
    pot_b_tbl = raw.get("potential_b")
    pot_b = potential_from_table(pot_b_tbl) if pot_b_tbl is not None else None

    needs_primary = name != "stability" or "potential" in raw
    if pot is None and needs_primary:
        raise ConfigurationError(f"experiment {name!r} needs a [potential] table")

    options = {k: v for k, v in raw.items()
               if k not in ("experiment", "n", "seed", "out_dir",
                            "potential", "potential_b")}

    if out_root is not None:
        base = Path(out_root)
    else:
        base = Path(raw.get("out_dir", "runs"))
    stem = path.stem if path is not None else name
    out_dir = base / f"{stem}"
    return ExperimentConfig(experiment=name, n=n, seed=seed, out_dir=out_dir,
                            potential=pot, potential_b=pot_b,
                            options=options, raw=raw)
