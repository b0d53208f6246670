"""File codecs: CSV for tables, JSON for fitted artefacts, TOML or JSON for configs.

CSV files may start with ``#`` comment lines (provenance); JSON artefacts
carry the same information under a ``"provenance"`` key. Floats are written
with 17 significant digits so finite doubles survive a round trip exactly.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .detrend import TrendModel
from .model import CoefficientStack, VarModel
from .spatial import SiteGeometry

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class DataError(ValueError):
    """Malformed or inconsistent input file."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (non-convergence, non-stationarity, ...)."""


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(x)


def config_hash(config: dict) -> str:
    """Short SHA-256 of a canonical JSON dump of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(command: str, config: dict, seed: int | None) -> dict:
    from . import __version__

    return {"command": command, "config_hash": config_hash(config), "seed": seed, "version": __version__}


def _header_lines(prov: dict | None) -> list[str]:
    if not prov:
        return []
    return [f"# {k}: {'none' if v is None else v}" for k, v in prov.items()]


def _read_csv_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Header and ``(line_number, cells)`` rows, skipping ``#`` comments and blank lines."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    header = None
    rows = []
    for lineno, cells in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not cells or (len(cells) == 1 and not cells[0].strip()):
            continue
        if cells[0].lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in cells]
        if header is None:
            header = cells
        else:
            rows.append((lineno, cells))
    if header is None:
        raise DataError(f"{path}: no header row")
    return header, rows


def _float(cell: str, path, lineno: int) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"{path}: non-numeric value {cell!r} on line {lineno}") from None


def _check_ids(ids, path):
    if any(not i for i in ids):
        raise DataError(f"{path}: empty site id in header")
    seen = set()
    for i in ids:
        if i in seen:
            raise DataError(f"{path}: duplicate site id {i!r}")
        seen.add(i)


def _write_csv(path, header, rows, prov=None):
    buf = io.StringIO()
    for line in _header_lines(prov):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    Path(path).write_text(buf.getvalue())


def _write_json(path, payload, prov=None):
    out = dict(payload)
    if prov:
        out["provenance"] = prov
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=False, allow_nan=True) + "\n")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


# ---------------------------------------------------------------- panels

def read_panel(path, allow_nan: bool = False):
    """Return ``(site_ids, values, times)``.

    A leading ``time`` column is optional; ``times`` is ``None`` without it.
    """
    header, rows = _read_csv_rows(path)
    has_time = header[0].lower() in ("time", "t")
    ids = header[1:] if has_time else header
    _check_ids(ids, path)
    if not ids:
        raise DataError(f"{path}: no site columns")
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.empty((len(rows), len(ids)))
    times = np.empty(len(rows), dtype=np.int64) if has_time else None
    for k, (lineno, cells) in enumerate(rows):
        if len(cells) != len(header):
            raise DataError(f"{path}: ragged row on line {lineno} ({len(cells)} cells, expected {len(header)})")
        if has_time:
            t = _float(cells[0], path, lineno)
            if t != int(t):
                raise DataError(f"{path}: non-integer time on line {lineno}")
            times[k] = int(t)
            cells = cells[1:]
        values[k] = [_float(c, path, lineno) for c in cells]
    if not allow_nan and not np.all(np.isfinite(values)):
        raise DataError(f"{path}: panel contains non-finite values")
    return tuple(ids), values, times


def write_panel(path, site_ids, values, times=None, prov=None):
    v = np.asarray(values, dtype=float)
    ids = list(site_ids)
    if v.ndim != 2 or v.shape[1] != len(ids):
        raise ValueError("values must be (T, m) with one column per site id")
    header = (["time"] if times is not None else []) + ids
    rows = ([int(t)] + list(r) for t, r in zip(times, v)) if times is not None else (list(r) for r in v)
    _write_csv(path, header, rows, prov)


# ---------------------------------------------------------------- geometry

def read_geometry(path) -> SiteGeometry:
    """Site table with columns ``site_id, x, y``."""
    header, rows = _read_csv_rows(path)
    if [h.lower() for h in header[:3]] != ["site_id", "x", "y"] or len(header) != 3:
        raise DataError(f"{path}: expected header site_id,x,y")
    ids, coords = [], []
    for lineno, cells in rows:
        if len(cells) != 3:
            raise DataError(f"{path}: ragged row on line {lineno}")
        ids.append(cells[0])
        coords.append([_float(cells[1], path, lineno), _float(cells[2], path, lineno)])
    _check_ids(ids, path)
    pts = np.asarray(coords, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise DataError(f"{path}: coordinates must be finite")
    return SiteGeometry.from_coords(pts, site_ids=tuple(ids))


def write_geometry(path, geometry: SiteGeometry, prov=None):
    if geometry.coords is None:
        raise ValueError("geometry has no coordinates")
    ids = geometry.site_ids or tuple(f"s{i}" for i in range(geometry.m))
    _write_csv(path, ["site_id", "x", "y"], ([i, x, y] for i, (x, y) in zip(ids, geometry.coords)), prov)


def read_distance_matrix(path, unreachable: str = "dmax") -> SiteGeometry:
    """Square distance table; header holds site ids, an optional first column repeats them."""
    header, rows = _read_csv_rows(path)
    labelled = header[0] in ("", "site_id")
    ids = header[1:] if labelled else header
    _check_ids(ids, path)
    if len(rows) != len(ids):
        raise DataError(f"{path}: expected {len(ids)} rows, found {len(rows)}")
    d = np.empty((len(ids), len(ids)))
    for k, (lineno, cells) in enumerate(rows):
        if len(cells) != len(header):
            raise DataError(f"{path}: ragged row on line {lineno}")
        if labelled:
            if cells[0] != ids[k]:
                raise DataError(f"{path}: row label {cells[0]!r} on line {lineno} does not match {ids[k]!r}")
            cells = cells[1:]
        d[k] = [_float(c, path, lineno) for c in cells]
    try:
        return SiteGeometry.from_distance_matrix(d, unreachable=unreachable, site_ids=tuple(ids))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def align_geometry(geometry: SiteGeometry, site_ids) -> SiteGeometry:
    """Reorder ``geometry`` to match the panel's site order."""
    if geometry.site_ids is None:
        if geometry.m != len(site_ids):
            raise DataError("geometry and panel have different numbers of sites")
        return geometry
    pos = {s: k for k, s in enumerate(geometry.site_ids)}
    missing = [s for s in site_ids if s not in pos]
    if missing:
        raise DataError(f"sites missing from geometry: {', '.join(missing[:5])}")
    return geometry.subset([pos[s] for s in site_ids])


# ---------------------------------------------------------------- models and fits

def _blocks(phis: np.ndarray) -> list:
    # adding 0.0 turns -0.0 into 0.0
    return [[[float(v) + 0.0 for v in row] for row in block] for block in phis]


def _phis_from(payload, key, path) -> np.ndarray:
    try:
        phis = np.asarray(payload[key], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: missing or malformed {key!r}") from exc
    if phis.ndim != 3 or phis.shape[1] != phis.shape[2]:
        raise DataError(f"{path}: {key!r} must be p blocks of m x m")
    return phis


def write_fit(path, fit, site_ids=None, prov=None, extra: dict | None = None):
    coeffs = fit.coeffs
    payload = {
        "p": coeffs.p,
        "m": coeffs.m,
        "lambda": float(fit.lam),
        "coefficients": _blocks(coeffs.phis),
        "support_count": fit.n_nonzero,
        "converged": fit.all_converged,
    }
    if site_ids is not None:
        payload["site_ids"] = list(site_ids)
    if extra:
        payload.update(extra)
    _write_json(path, payload, prov)


def read_fit(path):
    """Return ``(CoefficientStack, payload)``."""
    payload = _read_json(path)
    phis = _phis_from(payload, "coefficients", path)
    if payload.get("p", phis.shape[0]) != phis.shape[0] or payload.get("m", phis.shape[1]) != phis.shape[1]:
        raise DataError(f"{path}: p/m disagree with the coefficient blocks")
    return CoefficientStack.from_phis(phis), payload


def write_model(path, model: VarModel, site_ids=None, prov=None):
    payload = {"p": model.p, "m": model.m, "phis": _blocks(model.phis),
               "sigma": [list(map(float, r)) for r in model.sigma]}
    if site_ids is not None:
        payload["site_ids"] = list(site_ids)
    _write_json(path, payload, prov)


def read_model(path):
    """Return ``(VarModel, site_ids or None)``."""
    payload = _read_json(path)
    phis = _phis_from(payload, "phis", path)
    try:
        model = VarModel(phis, np.asarray(payload["sigma"], dtype=float))
    except KeyError as exc:
        raise DataError(f"{path}: missing 'sigma'") from exc
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    ids = payload.get("site_ids")
    return model, (tuple(ids) if ids is not None else None)


def write_trends(path, site_ids, trends, prov=None):
    payload = {"sites": {s: t.to_dict() for s, t in zip(site_ids, trends)}}
    _write_json(path, payload, prov)


def read_trends(path) -> dict:
    payload = _read_json(path)
    try:
        return {s: TrendModel.from_dict(d) for s, d in payload["sites"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed trend file ({exc})") from exc


# ---------------------------------------------------------------- tables

def write_table(path, rows: list[dict], columns=None, prov=None):
    """Write a list of dicts as CSV; columns default to the keys of the first row."""
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    _write_csv(path, list(columns), ([r.get(c, "") for c in columns] for r in rows), prov)


def read_table(path) -> list[dict]:
    header, rows = _read_csv_rows(path)
    out = []
    for lineno, cells in rows:
        if len(cells) != len(header):
            raise DataError(f"{path}: ragged row on line {lineno}")
        out.append(dict(zip(header, cells)))
    return out


def write_edges(path, classification, site_ids=None, prov=None, include_negatives: bool = False):
    rows = classification.rows(site_ids, include_negatives=include_negatives)
    _write_csv(path, ["from_site", "to_site", "lag", "class"], rows, prov)


# ---------------------------------------------------------------- configs

def read_config(path) -> dict:
    """Load a TOML or JSON config (chosen by extension)."""
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    try:
        if p.suffix.lower() == ".json":
            return json.loads(raw)
        return tomllib.loads(raw.decode())
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: invalid config ({exc})") from exc
