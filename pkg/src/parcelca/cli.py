"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 schema/data error,
3 stale neighbour cache, 4 quota shortfall (results were still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .calibration import classification_precision, fit_logistic, load_samples, save_coefficients
from .config import RunConfig, load_config
from .engine import prepare_parcels, simulate
from .errors import ParcelCAError
from .geometry import ExclusionSet
from .io import (
    export_result,
    ingest_parcels,
    load_cities,
    load_exclusions,
    load_export,
    load_parcels,
    write_cities,
    write_exclusions,
    write_manifest,
    write_parcels,
    write_summary_csv,
)
from .metrics import ExpansionSet, confusion_precision, overlap_precision, rasterize, summarize
from .neighbors import compute_neighbors, load_graph, save_graph
from .scenarios import aggregate_growth_rates
from .synth import SynthSpec, generate_synthetic

log = logging.getLogger("parcelca")

EXIT_SHORTFALL = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.__post_init__()
    return cfg


def _base_dir(args) -> Path | None:
    return Path(args.config).parent if args.config else None


def cmd_ingest(args, cfg: RunConfig) -> int:
    parcels, report = ingest_parcels(args.parcels, target_crs=args.target_crs or cfg.target_crs, strict=not args.lenient)
    write_parcels(parcels, args.out, report.target_crs)
    if args.exclusions:
        ex = load_exclusions(args.exclusions, target_crs=report.target_crs)
        out = args.exclusions_out or Path(args.out).with_name(Path(args.out).stem + ".exclusions.geojson")
        write_exclusions(ex, out, report.target_crs)
    print(json.dumps({"parcels": len(parcels), "crs": report.target_crs,
                      "repaired": report.repaired, "rejected": report.rejected}))
    return 0


def cmd_neighbors(args, cfg: RunConfig) -> int:
    parcels = load_parcels(args.parcels, target_crs=cfg.target_crs)
    radius = args.radius if args.radius is not None else cfg.radius_m
    g = compute_neighbors(parcels, radius, mode=args.mode or cfg.neighbor_mode, jobs=args.jobs)
    save_graph(g, args.out)
    print(json.dumps({"parcels": g.parcel_count, "edges": len(g.indices) // 2, "radius_m": g.radius_m}))
    return 0


def cmd_calibrate(args, cfg: RunConfig) -> int:
    samples = load_samples(args.samples)
    w = fit_logistic(samples, ridge=args.ridge)
    save_coefficients(w, args.out)
    print(json.dumps({**w.to_json(), "converged": w.converged, "n_iter": w.n_iter,
                      "precision": classification_precision(w, samples, args.cutoff)}))
    return 0


def cmd_simulate(args, cfg: RunConfig) -> int:
    if args.scenario:
        cfg.scenario = args.scenario
        cfg.__post_init__()
    parcels = load_parcels(args.parcels, target_crs=cfg.target_crs)
    cities = load_cities(args.cities)
    ex = load_exclusions(args.exclusions, target_crs=cfg.target_crs) if args.exclusions else ExclusionSet()
    g = load_graph(args.graph, parcels)
    params = cfg.ca_params(_base_dir(args))
    prepared = prepare_parcels(parcels, cities, ex, exclusion_threshold=cfg.exclusion_threshold)
    result = simulate(cities, prepared, g, cfg.scenario_spec(), params, jobs=args.jobs)
    rows = summarize(result, cities, by_ua=True)
    crs = json.loads(Path(args.parcels).read_text(encoding="utf-8")).get("crs", {}).get("properties", {}).get("name")
    export_result(result, prepared, args.out, crs=crs, geographic=not args.planar, summary_rows=rows)
    inputs = {"parcels": args.parcels, "cities": args.cities, "exclusions": args.exclusions, "graph": args.graph}
    if cfg.coefficients_path:
        inputs["coefficients"] = str((_base_dir(args) or Path()) / cfg.coefficients_path)
    write_manifest(args.out, inputs, cfg.snapshot(), cfg.seed, extra={
        "period": {"base_year": cfg.base_year, "final_year": cfg.base_year + cfg.horizon_years},
        "shortfalls": [[s.city_id, s.year] for s in result.shortfalls],
    })
    if result.shortfalls:
        log.warning("%d city-years fell short of their quota", len(result.shortfalls))
        return EXIT_SHORTFALL
    return 0


def _expansion(run, ids) -> ExpansionSet:
    return ExpansionSet((pid, run.area_km2[pid]) for pid in ids)


def cmd_compare(args, cfg: RunConfig) -> int:
    ref = load_export(args.reference)
    other = load_export(args.other)
    out = {}
    if args.cell_size:
        if not args.parcels:
            raise ParcelCAError("--cell-size needs --parcels (planar parcel file) to rasterise")
        parcels = load_parcels(args.parcels, target_crs=cfg.target_crs)
        a = rasterize(ref.converted_ids(), parcels, args.cell_size)
        b = rasterize(other.converted_ids(), parcels, args.cell_size)
    else:
        a = _expansion(ref, ref.converted_ids())
        b = _expansion(other, other.converted_ids())
    out["overlap_precision"] = overlap_precision(a, b) if a else None
    out["reference_km2"] = round(a.area, 3)
    out["shared_km2"] = round(sum(v for k, v in a.items() if k in b), 3)
    if not args.cell_size:
        universe = ExpansionSet(ref.area_km2)
        out["confusion_precision"] = confusion_precision(a, b, universe)
    print(json.dumps(out))
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    from .engine import CityResult, SimulationResult

    run = load_export(args.result)
    cities = load_cities(args.cities)
    per_city: dict[str, CityResult] = {}
    for pid, cid in run.city_of.items():
        cr = per_city.setdefault(cid, CityResult(cid, float("nan"), 0.0, realized_km2=[0.0]))
        if run.initial_states[pid]:
            cr.initial_area_km2 += run.area_km2[pid]
            cr.realized_km2[0] += run.area_km2[pid]
        elif run.converted_year[pid] is not None:
            cr.realized_km2[0] += run.area_km2[pid]
    result = SimulationResult(run.scenario, 0, run.base_year, 0, per_city, {}, {})
    rows = summarize(result, cities, by_ua=args.by_ua)
    write_summary_csv(rows, args.out)
    report = {
        "scenario": run.scenario,
        "rows": [r.as_dict() for r in rows],
        "historical_growth_2007_2012": aggregate_growth_rates(cities),
    }
    Path(args.out).with_suffix(".json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    total = rows[-1]
    print(f"TOTAL {total.initial_km2:.3f} -> {total.final_km2:.3f} km² (+{total.growth_pct:.1f}%)")
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    spec = SynthSpec(
        cities=args.cities,
        parcels_per_city=args.parcels_per_city,
        parcel_size_m=args.parcel_size,
        urban_seed_fraction=args.urban_fraction,
        density_model=args.density,
        seed=cfg.seed,
        exclusion_band=args.exclusion_band,
        jitter=args.jitter,
    )
    country = generate_synthetic(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_parcels(country.parcels, out / "parcels.geojson", country.crs)
    write_cities(country.cities, out / "cities.csv")
    write_exclusions(country.exclusions, out / "exclusions.geojson", country.crs)
    print(json.dumps({"parcels": len(country.parcels), "cities": len(country.cities),
                      "exclusions": len(country.exclusions), "total_area_m2": country.total_area_m2}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="parcelca", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="validate, reproject and cache a parcel file")
    s.add_argument("--parcels", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--exclusions")
    s.add_argument("--exclusions-out")
    s.add_argument("--target-crs")
    s.add_argument("--lenient", action="store_true", help="skip invalid geometries instead of failing")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("neighbors", help="build and save the neighbour graph")
    s.add_argument("--parcels", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--radius", type=float)
    s.add_argument("--mode", choices=["boundary", "centroid"])
    s.set_defaults(func=cmd_neighbors)

    s = sub.add_parser("calibrate", help="fit local-potential coefficients from a samples CSV")
    s.add_argument("--samples", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--ridge", type=float, default=0.0)
    s.add_argument("--cutoff", type=float, default=0.5)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("simulate", help="run a scenario")
    s.add_argument("--parcels", required=True)
    s.add_argument("--cities", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--exclusions")
    s.add_argument("--out", required=True)
    s.add_argument("--scenario", choices=["BAU", "UAO", "NTU", "CUSTOM"])
    s.add_argument("--planar", action="store_true", help="keep planar coordinates in the export")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("compare", help="overlap and confusion precision of two exported runs")
    s.add_argument("reference")
    s.add_argument("other")
    s.add_argument("--cell-size", type=float, help="rasterise both patterns to this grid first")
    s.add_argument("--parcels")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("report", help="summary accounts of an exported run")
    s.add_argument("--result", required=True)
    s.add_argument("--cities", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--by-ua", action="store_true")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", help="generate a synthetic country")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--cities", type=int, default=3)
    s.add_argument("--parcels-per-city", type=int, default=400)
    s.add_argument("--parcel-size", type=float, default=200.0)
    s.add_argument("--urban-fraction", type=float, default=0.2)
    s.add_argument("--density", choices=["decay", "uniform"], default="decay")
    s.add_argument("--exclusion-band", action="store_true")
    s.add_argument("--jitter", type=float, default=0.0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except ParcelCAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
