"""File formats: run configuration, CSV tables, plot-data columns and run manifests."""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
import platform
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .cylinder import CylinderField, CylinderGrid
from .effective import EffectiveTable, TableRow

__all__ = [
    "ConfigError",
    "read_config",
    "fmt",
    "write_csv",
    "read_csv",
    "write_field_csv",
    "read_field_csv",
    "write_table_csv",
    "read_table_csv",
    "emit_plotdata",
    "config_hash",
    "write_manifest",
]


class ConfigError(ValueError):
    pass


def read_config(path) -> dict:
    """Flat ``{key: str}`` view of an INI file; section names are dropped, later sections win."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    out = dict(cp.defaults())
    for sec in cp.sections():
        for k, v in cp.items(sec):
            out[k.replace("-", "_")] = v
    return out


def fmt(x) -> str:
    """Deterministic text for a CSV cell (shortest round-trip repr for floats)."""
    if isinstance(x, (float, np.floating)):
        if np.isnan(x):
            return "nan"
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# Cylinder fields


def write_field_csv(U: CylinderField, path) -> Path:
    """One row per ``s`` node, columns ``s`` then the x-nodes in C order; a comment line carries the grid."""
    g = U.grid
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = U.values.reshape(g.n_s, -1)
    with path.open("w", newline="") as fh:
        fh.write(f"# L={fmt(g.L)},n_s={g.n_s},n_x={'x'.join(str(n) for n in g.n_x)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s"] + [f"u{j}" for j in range(flat.shape[1])])
        for s, row in zip(g.s, flat):
            w.writerow([fmt(s)] + [fmt(v) for v in row])
    return path


def read_field_csv(path) -> CylinderField:
    path = Path(path)
    with path.open() as fh:
        meta = fh.readline().lstrip("#").strip()
    kv = dict(item.split("=") for item in meta.split(","))
    n_x = tuple(int(n) for n in kv["n_x"].split("x"))
    g = CylinderGrid(float(kv["L"]), int(kv["n_s"]), n_x)
    data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    return CylinderField(g, data[:, 1:].reshape(g.shape))


# ---------------------------------------------------------------------------
# Effective tables


def _table_header(d: int) -> list[str]:
    hess = [f"hess_{i + 1}{j + 1}" for i in range(d) for j in range(i, d)]
    return ([f"e_{i + 1}" for i in range(d)] + ["phi"] + [f"dphi_{i + 1}" for i in range(d)]
            + hess + ["mobility", "flags"])


def write_table_csv(table: EffectiveTable, path) -> Path:
    d = table.d
    iu = np.triu_indices(d)
    rows = []
    for r in table.rows:
        rows.append(list(r.e) + [r.phi] + list(r.dphi) + list(np.asarray(r.hess)[iu]) + [r.mobility,
                                                                                           ";".join(r.flags)])
    return write_csv(path, _table_header(d), rows)


def read_table_csv(path) -> EffectiveTable:
    header, rows = read_csv(path)
    d = sum(1 for h in header if h.startswith("e_"))
    if header != _table_header(d):
        raise ConfigError(f"{path}: unexpected table header")
    iu = np.triu_indices(d)
    out = []
    for row in rows:
        v = [float(x) for x in row[:-1]]
        e = np.array(v[:d])
        phi = v[d]
        dphi = np.array(v[d + 1:2 * d + 1])
        nh = d * (d + 1) // 2
        H = np.zeros((d, d))
        H[iu] = v[2 * d + 1:2 * d + 1 + nh]
        H = H + np.triu(H, 1).T
        mob = v[2 * d + 1 + nh]
        flags = [f for f in row[-1].split(";") if f]
        out.append(TableRow(e, phi, dphi, H, mob, flags))
    return EffectiveTable(d, out)


# ---------------------------------------------------------------------------
# Plot data and manifests


def emit_plotdata(path, columns: Mapping[str, Sequence[float]], units: Optional[Mapping[str, str]] = None,
                  title: str = "") -> Path:
    """Whitespace-separated columns with a ``#`` header naming each column and its unit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    units = units or {}
    names = list(columns)
    cols = [np.asarray(columns[n], dtype=float) for n in names]
    n = {c.size for c in cols}
    if len(n) != 1:
        raise ValueError("all columns must have the same length")
    with path.open("w") as fh:
        if title:
            fh.write(f"# {title}\n")
        fh.write("# " + " ".join(f"{nm}[{units.get(nm, '1')}]" for nm in names) + "\n")
        for row in zip(*cols):
            fh.write(" ".join(fmt(float(v)) for v in row) + "\n")
    return path


def config_hash(config: Mapping) -> str:
    blob = json.dumps({k: config[k] for k in sorted(config)}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out_dir, config: Mapping, wall_time: float, outputs: Sequence[str], extra: Optional[dict] = None) -> Path:
    import scipy

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": {k: config[k] for k in sorted(config)},
        "config_hash": config_hash(config),
        "versions": {"pulsewave": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "wall_time_s": wall_time,
        "outputs": sorted(outputs),
    }
    if extra:
        doc.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return path
