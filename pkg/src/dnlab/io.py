"""Artifact I/O: flat binary volumes, DN matrices, CSV tables, checksums.

Binary volume format: little-endian float64 (re, im) pairs in C order
with the z index fastest, plus a JSON sidecar carrying the grid
metadata.  CSV values are printed with repr-stable %.17g so reruns are
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError
from .fields import ScalarField
from .grid import Grid3, build_grid

FLOAT_FMT = "%.17g"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, complex):
        raise ConfigurationError("split complex values into re/im columns")
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ConfigurationError(
                f"row width {len(row)} != header width {len(header)} in {path.name}")
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_field(path_base, field: ScalarField, description: str = "") -> list:
    """Write <base>.bin (re/im float64 pairs, z-fastest) and <base>.json."""
    base = Path(path_base)
    base.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(field.values, dtype=complex)
    pairs = np.empty(data.shape + (2,), dtype="<f8")
    pairs[..., 0] = data.real
    pairs[..., 1] = data.imag
    bin_path = base.with_suffix(".bin")
    pairs.tofile(bin_path)
    sidecar = {
        "format": "dnlab-field-v1",
        "n": field.grid.n,
        "dx": field.grid.dx,
        "shape": list(field.grid.full_shape),
        "has_boundary": bool(field.has_boundary),
        "layout": "c-order-z-fastest, little-endian float64 (re, im) pairs",
        "description": description,
    }
    json_path = base.with_suffix(".json")
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return [bin_path, json_path]


def read_field(path_base) -> ScalarField:
    base = Path(path_base)
    meta = json.loads(base.with_suffix(".json").read_text())
    if meta.get("format") != "dnlab-field-v1":
        raise ConfigurationError(f"unknown field format in {base}.json")
    n = int(meta["n"])
    raw = np.fromfile(base.with_suffix(".bin"), dtype="<f8")
    shape = tuple(meta["shape"])
    raw = raw.reshape(shape + (2,))
    vals = raw[..., 0] + 1j * raw[..., 1]
    grid = build_grid(n)
    return ScalarField(grid, vals, has_boundary=bool(meta["has_boundary"]))


def write_dn_matrix(path_base, dn, gram_checksum: str = "") -> list:
    """Binary complex DN matrix plus sidecar (grid, lambda, fingerprint)."""
    if dn.matrix is None:
        raise ConfigurationError("cannot export a lazy (non-materialized) DN matrix")
    base = Path(path_base)
    base.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(dn.matrix, dtype=complex)
    pairs = np.empty(data.shape + (2,), dtype="<f8")
    pairs[..., 0] = data.real
    pairs[..., 1] = data.imag
    bin_path = base.with_suffix(".bin")
    pairs.tofile(bin_path)
    sidecar = {
        "format": "dnlab-dn-v1",
        "n": dn.grid.n,
        "n_boundary": dn.grid.n_boundary,
        "lambda_re": float(np.real(dn.lam)),
        "lambda_im": float(np.imag(dn.lam)),
        "potential_fingerprint": dn.potential_fingerprint,
        "gram_checksum": gram_checksum,
        "layout": "c-order row-major, little-endian float64 (re, im) pairs",
    }
    json_path = base.with_suffix(".json")
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return [bin_path, json_path]


def gram_checksum(grid: Grid3) -> str:
    """Checksum of the boundary mass + surface weights defining the pairing."""
    h = hashlib.sha256()
    h.update(grid.boundary_weight.tobytes())
    h.update(grid.boundary_volume_weight.tobytes())
    return h.hexdigest()[:16]


def write_spectral_csv(path, spectral, psi_norms=None) -> Path:
    header = ["k", "lambda"]
    rows = []
    if psi_norms is None:
        for i, lam in enumerate(spectral.eigenvalues, start=1):
            rows.append([i, float(lam)])
    else:
        header.append("psi_l2")
        for i, (lam, pn) in enumerate(zip(spectral.eigenvalues, psi_norms), start=1):
            rows.append([i, float(lam), float(pn)])
    return write_csv(path, header, rows)
