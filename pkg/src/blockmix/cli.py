"""Command-line driver: ``blockmix {fit,select,simulate,report,replay}``.

Failures print ``blockmix: error[<category>]: <message>`` on stderr and exit
with a category-specific nonzero code.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .aecm import FitConfig, fit
from .errors import BlockmixError, InvalidInputError
from .io import (
    apply_standardization,
    emit_results,
    file_sha256,
    fit_from_document,
    load_csv,
    load_result,
    save_csv,
    standardize,
    table_from_document,
    write_csv,
    write_json,
)
from .model import Dimensions, ModelVariant
from .selection import GridSpec, SelectionTable, grid_search, record_from_fit
from .synth import get_scenario, sample

logger = logging.getLogger("blockmix")

EXIT_CODES = {
    "parse-error": 2,
    "invalid-input": 2,
    "invalid-parameter": 2,
    "fit-failure": 3,
    "selection-failure": 4,
    "io-error": 5,
    "numerical-error": 6,
}


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _variant_list(text: str) -> list:
    out = []
    for v in text.split(","):
        try:
            out.append(ModelVariant.parse(v.strip()).value)
        except BlockmixError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return out


def _add_fit_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="CSV file: header row of indicator ids, first column of unit ids")
    p.add_argument("--restarts", type=int, default=10, help="AECM restarts per cell (default 10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8, help="relative log-likelihood tolerance")
    p.add_argument("--max-cycles", type=int, default=500)
    p.add_argument("--variance-floor", type=float, default=1e-6)
    p.add_argument(
        "--init",
        dest="init_method",
        choices=["distance-based-partition", "random-partition"],
        default="distance-based-partition",
    )
    p.add_argument("--no-standardize", action="store_true", help="fit the raw values")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", type=Path, default=Path("blockmix-out"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockmix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"blockmix {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a single (variant, K, L) cell")
    _add_fit_options(p)
    p.add_argument("--variant", type=lambda s: _variant_list(s)[0], default="UU")
    p.add_argument("-K", "--k", dest="K", type=int, required=True)
    p.add_argument("-L", "--l", dest="L", type=_int_list, required=True, help="one L or one per component")

    p = sub.add_parser("select", help="grid search over variants, K and L")
    _add_fit_options(p)
    p.add_argument("--variants", type=_variant_list, default=["CC", "CU", "UC", "UU"])
    p.add_argument("--k-min", type=int, default=1)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--l-min", type=int, default=1)
    p.add_argument("--l-max", type=int, default=6)
    p.add_argument("--l-mode", choices=["shared-L", "per-component-L"], default="shared-L")
    p.add_argument("--criterion", type=str.upper, choices=["AIC", "BIC"], default="BIC")
    p.add_argument("--max-cells", type=int, default=500)
    p.add_argument("--warm-start", action="store_true")

    p = sub.add_parser("simulate", help="sample a preset scenario")
    p.add_argument("--scenario", default="A")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, default=Path("blockmix-sim"))

    p = sub.add_parser("report", help="re-emit outputs from a saved result document")
    p.add_argument("result", type=Path)
    p.add_argument("data", type=Path)
    p.add_argument("--out-dir", type=Path, default=Path("blockmix-report"))

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out-dir", type=Path, default=None)
    return parser


def settings_from_args(args: argparse.Namespace) -> dict:
    s = {
        "command": args.command,
        "input": str(args.data),
        "standardize": not args.no_standardize,
        "restarts": args.restarts,
        "seed": args.seed,
        "tol": args.tol,
        "max_cycles": args.max_cycles,
        "variance_floor": args.variance_floor,
        "init_method": args.init_method,
        "threads": args.threads,
    }
    if args.command == "fit":
        s.update(variant=args.variant, K=args.K, L=args.L)
    else:
        s.update(
            variants=args.variants,
            k_min=args.k_min,
            k_max=args.k_max,
            l_min=args.l_min,
            l_max=args.l_max,
            l_mode=args.l_mode,
            criterion=args.criterion,
            max_cells=args.max_cells,
            warm_start=args.warm_start,
        )
    return s


def execute(settings: dict, out_dir: Path, argv=None) -> dict:
    """Run a ``fit`` or ``select`` described by ``settings``; write outputs and manifest."""
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    raw = load_csv(settings["input"])
    sha = file_sha256(settings["input"])
    if settings.get("input_sha256") and settings["input_sha256"] != sha:
        raise InvalidInputError(f"{settings['input']} changed since the manifest was written")
    data = standardize(raw) if settings["standardize"] else raw
    config = FitConfig(
        max_cycles=settings["max_cycles"],
        tol=settings["tol"],
        n_restarts=settings["restarts"],
        seed=settings["seed"],
        variance_floor=settings["variance_floor"],
        init_method=settings["init_method"],
    )
    if settings["command"] == "fit":
        L = settings["L"]
        dims = Dimensions(settings["K"], L[0] if len(L) == 1 else tuple(L))
        result = fit(data, settings["variant"], dims, config)
        table = SelectionTable((record_from_fit(result, data.n),), "BIC", data.n, data.J)
    else:
        grid = GridSpec(
            variants=tuple(settings["variants"]),
            K_range=(settings["k_min"], settings["k_max"]),
            L_range=(settings["l_min"], settings["l_max"]),
            L_mode=settings["l_mode"],
            criterion=settings["criterion"],
            max_cells=settings["max_cells"],
            warm_start=settings["warm_start"],
        )
        result, table = grid_search(data, grid, config, threads=settings["threads"])

    # the result document must not depend on paths, parallelism or time
    doc_settings = {k: v for k, v in settings.items() if k not in ("input", "threads", "input_sha256")}
    doc_settings["input_sha256"] = sha
    paths = emit_results(result, table, data, out_dir, doc_settings)
    manifest = {
        "tool": "blockmix",
        "version": __version__,
        "argv": list(argv) if argv is not None else None,
        "settings": {**settings, "input_sha256": sha},
        "input": {"path": str(Path(settings["input"]).resolve()), "sha256": sha},
        "standardization": {
            "standardized": data.standardized,
            "ddof": 1,
            "means": None if data.means is None else dict(zip(data.column_ids, map(float, data.means))),
            "sds": None if data.sds is None else dict(zip(data.column_ids, map(float, data.sds))),
        },
        "selected": {
            "variant": result.variant.value,
            "K": result.dims.K,
            "L": list(result.dims.L),
            "loglik": result.loglik,
            "criterion": table.criterion,
        },
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": time.perf_counter() - t0,
    }
    paths["manifest"] = write_json(Path(out_dir) / "manifest.json", manifest)
    return paths


def _simulate(args) -> None:
    scenario = get_scenario(args.scenario, args.n, args.seed)
    data, labels, cols = sample(scenario)
    out = args.out_dir
    save_csv(data, out / "data.csv")
    write_csv(out / "truth_rows.csv", [["id", "cluster"]] + [[r, int(l) + 1] for r, l in zip(data.row_ids, labels)])
    header = ["column", *(f"component_{k + 1}" for k in range(len(cols)))]
    body = [[cid, *(int(c[j]) for c in cols)] for j, cid in enumerate(data.column_ids)]
    write_csv(out / "truth_columns.csv", [header] + body)
    print(out / "data.csv")


def _report(args) -> None:
    doc = load_result(args.result)
    data = load_csv(args.data)
    std = doc["data"].get("standardization")
    if doc["data"]["standardized"] and std:
        cols = data.column_ids
        data = apply_standardization(data, [std["means"][c] for c in cols], [std["sds"][c] for c in cols], True)
    result = fit_from_document(doc, data)
    emit_results(result, table_from_document(doc), data, args.out_dir, doc.get("settings"))
    print(args.out_dir / "result.json")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command in ("fit", "select"):
            paths = execute(settings_from_args(args), args.out_dir, argv)
            print(paths["result"])
        elif args.command == "simulate":
            _simulate(args)
        elif args.command == "report":
            _report(args)
        elif args.command == "replay":
            with open(args.manifest, encoding="utf-8") as fh:
                manifest = json.load(fh)
            out = args.out_dir or args.manifest.parent
            paths = execute(manifest["settings"], out, argv)
            print(paths["result"])
    except BlockmixError as exc:
        print(f"blockmix: error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"blockmix: error[io-error]: {exc}", file=sys.stderr)
        return EXIT_CODES["io-error"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
