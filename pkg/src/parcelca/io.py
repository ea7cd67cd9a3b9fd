"""Reading and writing parcels, cities, exclusions, results and run manifests.

Parcel and exclusion files are GeoJSON feature collections. Geographic
(lon/lat) input is reprojected to planar meters on load; a legacy ``crs``
member naming a projected CRS marks a file as already planar.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from pyproj import CRS, Transformer

from . import __version__
from .errors import DataError, GeometryError, SchemaError
from .geometry import EXCLUSION_TAGS, ExclusionSet, ExclusionZone, Polygon, PointM
from .parcels import NON_URBAN, URBAN, ParcelRecord
from .scenarios import CityRecord

log = logging.getLogger(__name__)

CITY_HEADER = ["city_id", "name", "admin_level", "center_x", "center_y", "area2007_km2", "area2012_km2", "in_ua"]
GEOGRAPHIC = "EPSG:4326"


@dataclass
class IngestReport:
    source_crs: str
    target_crs: str
    repaired: list = field(default_factory=list)
    rejected: list = field(default_factory=list)  # (feature index, parcel id, reason)


def _read_collection(path) -> dict:
    raw = Path(path).read_text(encoding="utf-8")
    if not raw.strip():
        return {"type": "FeatureCollection", "features": []}
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection" or not isinstance(doc.get("features"), list):
        raise SchemaError(f"{path}: expected a GeoJSON FeatureCollection")
    return doc


def _crs_of(doc: dict) -> str:
    member = doc.get("crs")
    if member is None:
        return GEOGRAPHIC
    try:
        name = member["properties"]["name"]
        CRS.from_user_input(name)
    except Exception:
        raise SchemaError(f"unrecognised crs member {member!r}") from None
    return name


def _auto_utm(lonlats: np.ndarray) -> str:
    lon, lat = lonlats.mean(axis=0)
    zone = int((lon + 180.0) // 6) % 60 + 1
    return f"EPSG:{(32600 if lat >= 0 else 32700) + zone}"


class _Projector:
    def __init__(self, source: str, target: str | None, sample: np.ndarray):
        self.source = source
        src = CRS.from_user_input(source)
        if target is None:
            target = _auto_utm(sample) if src.is_geographic and len(sample) else source
        self.target = target
        dst = CRS.from_user_input(target)
        # an empty geographic file has nothing to project
        if dst.is_geographic and (len(sample) or dst != src):
            raise SchemaError(f"target CRS {target} is not projected")
        self._tf = None if src == dst else Transformer.from_crs(src, dst, always_xy=True)

    def __call__(self, ring) -> np.ndarray:
        arr = np.asarray(ring, dtype=float)
        if self._tf is None:
            return arr
        x, y = self._tf.transform(arr[:, 0], arr[:, 1])
        return np.column_stack([x, y])


def _polygon_rings(geom, where: str):
    if not isinstance(geom, dict) or geom.get("type") != "Polygon":
        kind = geom.get("type") if isinstance(geom, dict) else type(geom).__name__
        raise SchemaError(f"{where}: geometry must be a Polygon, got {kind}")
    rings = geom.get("coordinates")
    if not isinstance(rings, list) or not rings:
        raise SchemaError(f"{where}: polygon has no rings")
    try:
        return [np.asarray(r, dtype=float).reshape(-1, 2) for r in rings]
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: malformed coordinates") from None


def _was_repaired(raw: np.ndarray, clean: np.ndarray) -> bool:
    return len(raw) != len(clean) or not np.array_equal(raw, clean)


def _sample_coords(features) -> np.ndarray:
    pts = []
    for f in features[:1000]:
        try:
            pts.append(np.asarray(f["geometry"]["coordinates"][0][0], dtype=float))
        except Exception:
            continue
    return np.array(pts).reshape(-1, 2)


def _parse_state(value, where):
    if value in (URBAN, 1, True, "1"):
        return True
    if value in (NON_URBAN, 0, False, "0"):
        return False
    raise SchemaError(f"{where}: state must be 'urban' or 'non-urban', got {value!r}")


def _parse_id(value, where) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise SchemaError(f"{where}: parcel_id must be an integer, got {value!r}")
    return int(value)


def ingest_parcels(path, *, target_crs: str | None = None, strict: bool = True) -> tuple[list[ParcelRecord], IngestReport]:
    """Load and validate a parcel file.

    With ``strict`` any invalid geometry raises; otherwise the feature is
    skipped and listed in ``report.rejected``. Missing or mistyped properties
    always raise.
    """
    doc = _read_collection(path)
    feats = doc["features"]
    proj = _Projector(_crs_of(doc), target_crs, _sample_coords(feats))
    report = IngestReport(proj.source, proj.target)
    parcels: list[ParcelRecord] = []
    seen: dict[int, int] = {}
    for k, f in enumerate(feats):
        where = f"{path}: feature {k}"
        props = f.get("properties") if isinstance(f, dict) else None
        if not isinstance(props, dict):
            raise SchemaError(f"{where}: missing properties")
        for key in ("parcel_id", "city_id", "state", "raw_density"):
            if key not in props:
                raise SchemaError(f"{where}: missing property {key!r}")
        pid = _parse_id(props["parcel_id"], where)
        where = f"{path}: feature {k} (parcel {pid})"
        if pid in seen:
            raise SchemaError(f"{where}: duplicate parcel_id {pid} (first at feature {seen[pid]})")
        seen[pid] = k
        city = props["city_id"]
        if isinstance(city, bool) or not isinstance(city, (str, int)):
            raise SchemaError(f"{where}: city_id must be a string or integer")
        density = props["raw_density"]
        if isinstance(density, bool) or not isinstance(density, (int, float)) or not math.isfinite(density) or density < 0:
            raise SchemaError(f"{where}: raw_density must be a non-negative number, got {density!r}")
        urban = _parse_state(props["state"], where)
        rings = _polygon_rings(f.get("geometry"), where)
        try:
            projected = [proj(r) for r in rings]
            poly = Polygon(projected[0], tuple(projected[1:]))
        except (GeometryError, ValueError) as exc:
            if strict:
                raise SchemaError(f"{where}: invalid geometry: {exc}") from None
            report.rejected.append((k, pid, str(exc)))
            continue
        if any(_was_repaired(r, c) for r, c in zip(projected, poly.rings)):
            report.repaired.append(pid)
        parcels.append(ParcelRecord(pid, str(city), poly, urban, float(density)))
    if report.repaired:
        log.info("%s: repaired %d parcel rings", path, len(report.repaired))
    if report.rejected:
        log.warning("%s: rejected %d invalid parcels", path, len(report.rejected))
    return parcels, report


def load_parcels(path, *, target_crs: str | None = None, strict: bool = True) -> list[ParcelRecord]:
    return ingest_parcels(path, target_crs=target_crs, strict=strict)[0]


def _crs_member(crs: str | None) -> dict:
    return {} if crs is None else {"crs": {"type": "name", "properties": {"name": crs}}}


def _dump(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def _rings_json(poly: Polygon, tf: Transformer | None = None) -> list:
    out = []
    for ring in poly.rings:
        if tf is not None:
            x, y = tf.transform(ring[:, 0], ring[:, 1])
            ring = np.column_stack([x, y])
        out.append(ring.tolist())
    return out


def write_parcels(parcels: Iterable[ParcelRecord], path, crs: str | None) -> None:
    """Write parcels with planar coordinates, tagging the file with ``crs``."""
    feats = [
        {
            "type": "Feature",
            "properties": {"parcel_id": p.parcel_id, "city_id": p.city_id, "state": p.state, "raw_density": p.raw_density},
            "geometry": {"type": "Polygon", "coordinates": _rings_json(p.polygon)},
        }
        for p in sorted(parcels, key=lambda r: r.parcel_id)
    ]
    _dump({"type": "FeatureCollection", **_crs_member(crs), "features": feats}, path)


def load_cities(path) -> list[CityRecord]:
    out = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CITY_HEADER:
            raise SchemaError(f"{path}:1: expected header {','.join(CITY_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not v.strip() for v in row):
                continue
            if len(row) != len(CITY_HEADER):
                raise SchemaError(f"{path}:{lineno}: expected {len(CITY_HEADER)} fields, got {len(row)}")
            cid, name, level, cx, cy, a07, a12, ua = (v.strip() for v in row)
            if cid in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate city_id {cid}")
            seen.add(cid)
            if ua not in ("0", "1"):
                raise SchemaError(f"{path}:{lineno}: in_ua must be 0 or 1, got {ua!r}")
            try:
                nums = [float(v) for v in (cx, cy, a07, a12)]
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
            try:
                out.append(CityRecord(cid, name, level, PointM(nums[0], nums[1]), nums[2], nums[3], ua == "1"))
            except (DataError, GeometryError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return out


def write_cities(cities: Iterable[CityRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CITY_HEADER)
        for c in cities:
            w.writerow([c.city_id, c.name, c.admin_level, repr(c.center.x), repr(c.center.y),
                        repr(c.urban_area_2007), repr(c.urban_area_2012), int(c.in_urban_agglomeration)])


def load_exclusions(path, *, target_crs: str | None = None) -> ExclusionSet:
    doc = _read_collection(path)
    feats = doc["features"]
    proj = _Projector(_crs_of(doc), target_crs, _sample_coords(feats))
    zones = []
    for k, f in enumerate(feats):
        where = f"{path}: feature {k}"
        props = f.get("properties") if isinstance(f, dict) else None
        tag = props.get("tag") if isinstance(props, dict) else None
        if tag not in EXCLUSION_TAGS:
            raise SchemaError(f"{where}: tag must be one of {EXCLUSION_TAGS}, got {tag!r}")
        rings = _polygon_rings(f.get("geometry"), where)
        try:
            projected = [proj(r) for r in rings]
            zones.append(ExclusionZone(Polygon(projected[0], tuple(projected[1:])), tag))
        except GeometryError as exc:
            raise SchemaError(f"{where}: invalid geometry: {exc}") from None
    return ExclusionSet(zones)


def write_exclusions(ex: ExclusionSet, path, crs: str | None) -> None:
    feats = [
        {"type": "Feature", "properties": {"tag": z.tag},
         "geometry": {"type": "Polygon", "coordinates": _rings_json(z.polygon)}}
        for z in ex
    ]
    _dump({"type": "FeatureCollection", **_crs_member(crs), "features": feats}, path)


def export_result(result, parcels: Sequence[ParcelRecord], path, *, crs: str | None = None,
                  geographic: bool = True, summary_rows=None) -> None:
    """Write one feature per parcel with its start state and conversion year.

    When ``crs`` names the parcels' planar CRS and ``geographic`` is set,
    coordinates are written as lon/lat so ordinary map viewers can style the
    file; otherwise they stay planar. A summary CSV is written alongside.
    """
    tf = None
    out_crs = crs
    if crs is not None and geographic:
        tf = Transformer.from_crs(CRS.from_user_input(crs), CRS.from_user_input(GEOGRAPHIC), always_xy=True)
        out_crs = None
    years = result.converted_year()
    state_key = f"state_{result.base_year}"
    feats = []
    for p in sorted(parcels, key=lambda r: r.parcel_id):
        feats.append({
            "type": "Feature",
            "properties": {
                "parcel_id": p.parcel_id,
                "city_id": p.city_id,
                "area_km2": p.area_km2,
                state_key: URBAN if result.initial_states[p.parcel_id] else NON_URBAN,
                "converted_year": years.get(p.parcel_id),
                "scenario": result.scenario,
            },
            "geometry": {"type": "Polygon", "coordinates": _rings_json(p.polygon, tf)},
        })
    doc = {"type": "FeatureCollection", **_crs_member(out_crs), "base_year": result.base_year,
           "horizon_years": result.horizon_years, "features": feats}
    _dump(doc, path)
    if summary_rows is None:
        from .metrics import summarize
        summary_rows = summarize(result, [])
    write_summary_csv(summary_rows, summary_path(path))


def summary_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".summary.csv")


@dataclass
class ExportedRun:
    scenario: str
    base_year: int
    initial_states: dict[int, bool]
    converted_year: dict[int, int | None]
    city_of: dict[int, str]
    area_km2: dict[int, float]

    def converted_ids(self, year: int | None = None) -> set[int]:
        return {pid for pid, y in self.converted_year.items() if y is not None and (year is None or y == year)}


def load_export(path) -> ExportedRun:
    doc = _read_collection(path)
    base = doc.get("base_year")
    if not isinstance(base, int):
        raise SchemaError(f"{path}: missing base_year")
    key = f"state_{base}"
    scenario = None
    init, conv, city, area = {}, {}, {}, {}
    for k, f in enumerate(doc["features"]):
        props = f.get("properties") or {}
        try:
            pid = _parse_id(props["parcel_id"], f"{path}: feature {k}")
            init[pid] = _parse_state(props[key], f"{path}: feature {k}")
            y = props["converted_year"]
            city[pid] = str(props["city_id"])
            area[pid] = float(props["area_km2"])
            scenario = props["scenario"]
        except KeyError as exc:
            raise SchemaError(f"{path}: feature {k}: missing property {exc}") from None
        if y is not None and (not isinstance(y, int) or isinstance(y, bool)):
            raise SchemaError(f"{path}: feature {k}: converted_year must be an integer or null")
        conv[pid] = y
    return ExportedRun(scenario or "", base, init, conv, city, area)


def write_summary_csv(rows, path) -> None:
    cols = ["label", "n_cities", "initial_km2", "final_km2", "growth_km2", "growth_pct"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            d = r.as_dict()
            d["initial_km2"] = f"{d['initial_km2']:.3f}"
            d["final_km2"] = f"{d['final_km2']:.3f}"
            d["growth_km2"] = f"{d['growth_km2']:.3f}"
            d["growth_pct"] = f"{d['growth_pct']:.1f}"
            w.writerow(d)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _created_at() -> str:
    # SOURCE_DATE_EPOCH pins the stamp for reproducible outputs
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch is not None else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def manifest_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".manifest.json")


def write_manifest(output, inputs: Mapping[str, str | os.PathLike | None], config: Mapping, seed: int,
                   extra: Mapping | None = None) -> Path:
    doc = {
        "tool": "parcelca",
        "version": __version__,
        "output": Path(output).name,
        "inputs": {k: ({"path": Path(v).name, "sha256": file_digest(v)} if v else None) for k, v in sorted(inputs.items())},
        "config": dict(config),
        "seed": seed,
        "timestamps": {"created": _created_at()},
    }
    if extra:
        doc.update(extra)
    out = manifest_path(output)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
