"""Command-line entry point.

Every subcommand accepts ``--config FILE``: a JSON object whose keys are the
subcommand's option names (dashes or underscores). Values from the file replace
the defaults, and explicit flags override the file. Every file written carries the
seed, a hash of the resolved options and the tool version.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bvae import (
    DEFAULT_RECIPES,
    MODELS,
    TrainedBvae,
    decode,
    denormalize,
    encode,
    encode_table,
    model_spec,
    rounded_cells,
    train_bvae,
)
from .elements import ElementDataError, load_element_table, madelung_violations, validation_report
from .experiments import (
    MENDELEEV_HOLDOUT,
    REFERENCE_EPOCHS,
    ClassifierConfig,
    FilterBand,
    StudyError,
    mendeleev_subset,
    run_classification_study,
    run_dual_representation,
    run_mendeleev_study,
)
from .features import (
    PERIOD_ENCODINGS,
    VARIANTS,
    NoiseSpec,
    Recipe,
    build_feature_matrix,
    empty_cell_report,
    featurize_configs,
    grid_labels,
)
from .latent import (
    AnalysisError,
    LatentMap,
    category_separation,
    central_estimate,
    decode_grid,
    element_labels,
    encode_elements,
    estimate_center,
    export_scatter,
    header_lines,
    outlier_scores,
    polar_transform,
    render_images_svg,
    separation_permutation_test,
    sequence_order_score,
    svg_with_header,
)
from .nn import OptimizerSpec, TrainConfig

log = logging.getLogger("elemvae")

PLOTS = {"period": "period", "group": "group", "block": "block", "type": "category",
         "melting": "melting_point"}
FIGURES = ("figure3", "figure5", "figure6", "figure7", "figure8", "figure9", "figure10",
           "figure12", "figure14")
FIGURE5_ELEMENTS = ("H", "C", "Fe", "Ir", "U", "Og")
# options that only name where output goes; they do not enter the config hash
_OUTPUT_KEYS = {"out", "report", "config", "func", "verbose", "command", "elements_command"}


# -- output helpers ----------------------------------------------------------------


def config_hash(options: dict) -> str:
    payload = {k: v for k, v in options.items() if k not in _OUTPUT_KEYS}
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def run_meta(args) -> dict:
    options = vars(args)
    return {"seed": options.get("seed", ""), "config_hash": config_hash(options),
            "tool_version": __version__}


def _clean(value):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path, payload: dict, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"meta": meta}
    doc.update(_clean(payload))
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path


def write_csv(path, columns: list[str], rows, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    for line in header_lines(meta):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ""
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_svg(path, svg: str, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg_with_header(svg, meta), encoding="utf-8")
    return path


# -- shared building blocks --------------------------------------------------------


def _table(args):
    return load_element_table(getattr(args, "data", None))


def _recipe_from(args, base: Recipe) -> Recipe:
    kw = {}
    for key in ("variant", "normalization", "period_encoding"):
        if getattr(args, key, None) is not None:
            kw[key] = getattr(args, key)
    if getattr(args, "sqrt", False):
        kw["sqrt"] = True
    if getattr(args, "dup", None) is not None:
        kw["duplication"] = args.dup
    if getattr(args, "alpha", None):
        kw["noise"] = NoiseSpec(args.alpha, args.noise_seed)
    return replace(base, **kw)


def train_reference(table, model_name: str, seed: int, epochs: int | None = None,
                    beta: float = 0.03, batch_size: int = 32, recipe: Recipe | None = None,
                    lr: float | None = None, split: float = 0.67,
                    granularity: str = "row") -> TrainedBvae:
    recipe = recipe or DEFAULT_RECIPES[model_name]
    matrix = build_feature_matrix(table, recipe)
    spec, opt = model_spec(model_name, matrix.shape[1])
    if lr is not None:
        opt = replace(opt, lr=lr)
    epochs = REFERENCE_EPOCHS[model_name] if epochs is None else epochs
    cfg = TrainConfig(beta=beta, epochs=epochs, batch_size=batch_size, split=split, seed=seed,
                      granularity=granularity)

    def progress(epoch, rec):
        log.info("epoch %d/%d train %.4f test %.4f", epoch + 1, epochs, rec["train_loss"],
                 rec["test_loss"])

    return train_bvae(matrix, spec, opt, cfg, name=model_name, progress=progress)


def _history_rows(records):
    keys = sorted({k for r in records for k in r} - {"epoch"})
    return ["epoch"] + keys, [[int(r.get("epoch", i))] + [r.get(k) for k in keys]
                              for i, r in enumerate(records)]


# -- commands ----------------------------------------------------------------------


def cmd_elements(args) -> int:
    table = load_element_table(args.path)
    if args.elements_command == "validate":
        lines = validation_report(table)
        empty = empty_cell_report(table)
        lines.append("structural empty cells: " + ("all empty" if not empty else
                     ", ".join(f"{z}:{cell}" for z, cell in empty)))
        lines.append(f"period sizes: {table.period_sizes()}")
        print("\n".join(lines))
        return 0 if not empty else 1
    rec = table[args.symbol]
    print(f"{rec.z} {rec.symbol} {rec.name} period={rec.period} group={rec.group} "
          f"block={rec.block} category={rec.category}\n{rec.config}")
    return 0


def cmd_featurize(args) -> int:
    table = _table(args)
    recipe = _recipe_from(args, Recipe(transposed=args.transposed))
    matrix = build_feature_matrix(table, recipe)
    meta = run_meta(args)
    meta["recipe"] = json.dumps(matrix.recipe.to_dict(), sort_keys=True)
    text = matrix.to_csv({k: meta[k] for k in sorted(meta)})
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(text, encoding="utf-8")
    print(f"wrote {args.out} ({matrix.shape[0]} x {matrix.shape[1]})")
    return 0


def cmd_train(args) -> int:
    table = _table(args)
    if args.cutoff is not None:
        table = mendeleev_subset(table, args.cutoff)
    recipe = _recipe_from(args, DEFAULT_RECIPES[args.model])
    model = train_reference(table, args.model, args.seed, args.epochs, args.beta, args.batch_size,
                            recipe, args.lr, args.split, args.granularity)
    meta = run_meta(args)
    model.save(args.out, {"config_hash": meta["config_hash"]})
    cols, rows = _history_rows(model.history.records)
    write_csv(Path(args.out).with_suffix(".history.csv"), cols, rows, meta)
    last = model.history.records[-1] if model.history.records else {}
    print(f"wrote {args.out}; final train loss {last.get('train_loss', float('nan')):.4f}")
    return 0


def cmd_encode(args) -> int:
    model = TrainedBvae.load(args.model)
    table = _table(args)
    meta = run_meta(args)
    if model.recipe.transposed:
        matrix = build_feature_matrix(table, replace(model.recipe, duplication=1))
        mu, lv = encode(model, matrix.rows)
        rows = [[lab, *m, *v] for lab, m, v in zip(matrix.row_labels, mu, lv)]
        write_csv(args.out, ["orbital", "mu1", "mu2", "logvar1", "logvar2"], rows, meta)
    else:
        mu, lv = encode_table(model, table)
        rows = [[rec.z, rec.symbol, *m, *v] for rec, m, v in zip(table, mu, lv)]
        write_csv(args.out, ["z", "symbol", "mu1", "mu2", "logvar1", "logvar2"], rows, meta)
    print(f"wrote {args.out}")
    return 0


def _parse_center(text: str):
    if text in ("centroid", "symmetry"):
        return text, None
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"center must be centroid, symmetry or x,y: {text!r}")
    return "override", (x, y)


def analyze_map(latent: LatentMap, table, out: Path, meta: dict, plots, polar: bool,
                center: str = "centroid", k: int = 3, permutations: int = 100, seed: int = 0,
                prefix: str = "latent") -> dict:
    """Scatter exports plus the separation, ordering and outlier metrics."""
    mode, override = _parse_center(center)
    centers = {"centroid": estimate_center(latent).tolist(),
               "symmetry": estimate_center(latent, "symmetry", table).tolist()}
    c = override if mode == "override" else centers[mode]
    pol = polar_transform(latent, c)
    symbols = {rec.z: rec.symbol for rec in table}
    metrics = {"centers": centers, "center_used": list(c), "separation": {}}
    for plot in plots:
        key = PLOTS[plot]
        labels = element_labels(table, key)
        export_scatter(latent, out / f"{prefix}_{plot}", labels, key, header=meta,
                       title=f"latent space: {plot}", annotations=symbols)
        if polar:
            export_scatter(pol, out / f"polar_{plot}", labels, key, header=meta,
                           title=f"polar coordinates: {plot}", annotations=symbols)
        if key not in ("melting_point",):
            metrics["separation"][plot] = category_separation(latent, labels)
    perm = separation_permutation_test(latent, element_labels(table, "period"), permutations, seed)
    metrics["period_permutation"] = {"score": perm.score, "quantile99": perm.quantile99,
                                     "significant": perm.significant}
    for axis in ("angle", "radius"):
        score = sequence_order_score(pol, table, axis=axis)
        metrics[f"order_{axis}"] = {"overall": score.overall, "per_period": score.per_period}
    violations = madelung_violations(table)
    report = outlier_scores(latent, table, k=k)
    late = outlier_scores(latent, table, k=k, periods=(6, 7))
    metrics["outliers"] = [{"z": z, "symbol": symbols[z], "score": s, "violation": z in violations}
                           for z, s in report.ranked]
    top = late.top(10)
    metrics["late_top10"] = [symbols[z] for z in top]
    metrics["late_top10_violations"] = sum(z in violations for z in top)
    return metrics


def cmd_analyze(args) -> int:
    model = TrainedBvae.load(args.model)
    table = _table(args)
    out = Path(args.out)
    meta = run_meta(args)
    latent = encode_elements(model, table)
    metrics = analyze_map(latent, table, out, meta, args.plot, args.polar, args.center, args.k,
                          args.permutations, args.seed)
    write_json(out / "metrics.json", metrics, meta)
    print(f"wrote {out}/")
    return 0


def _parse_bounds(text):
    if text is None:
        return None
    vals = [float(v) for v in text.split(":")]
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("bounds must be xmin:xmax:ymin:ymax")
    return tuple(vals)


def write_grid(model, table, n: int, bounds, out: Path, meta: dict, latent=None):
    latent = latent or encode_elements(model, table)
    grid = decode_grid(model, _parse_bounds(bounds) if isinstance(bounds, str) else bounds,
                       n=n, latent=latent)
    cells = grid.cells if grid.cells is not None else denormalize(model, grid.decoded)
    cols = ["i", "j", "x", "y", "z_estimate"] + (
        grid_labels() if model.recipe.variant == "image28" else [f"c{i}" for i in range(cells.shape[1])])
    rows = ([int(i), int(j), x, y, None if grid.z_estimate is None else int(z), *map(int, c)]
            for (i, j), (x, y), z, c in zip(grid.index, grid.nodes,
                                            grid.z_estimate if grid.z_estimate is not None
                                            else [None] * len(grid), cells))
    write_csv(out, cols, rows, meta)
    if grid.z_estimate is not None:
        labels = {tuple(ix): float(z) for ix, z in zip(grid.index.tolist(), grid.z_estimate)}
        export_scatter(grid, out.with_name(out.stem + "_atomic"), labels, "z_estimate",
                       continuous=True, header=meta, title="decoded grid: atomic number estimate")
    return grid, latent


def cmd_grid(args) -> int:
    model = TrainedBvae.load(args.model)
    table = _table(args)
    grid, latent = write_grid(model, table, args.n, args.bounds, Path(args.out), run_meta(args))
    print(f"wrote {args.out} ({len(grid)} nodes)")
    return 0


def classification(model, table, args, out_report: Path, meta: dict, latent=None):
    band = FilterBand.parse(args.band, args.sigma)
    cfg = ClassifierConfig(epochs=args.classifier_epochs, batch_size=args.classifier_batch,
                           seed=args.seed)
    report = run_classification_study(table, model, band, cfg, args.grid_n, latent)
    payload = report.to_dict()
    generated = payload.pop("generated")
    write_json(out_report, payload, meta)
    cols = ["i", "j", "x", "y", "distance", "config", "exact_match", "predicted"]
    write_csv(out_report.with_suffix(".csv"), cols, ([g[c] for c in cols] for g in generated), meta)
    return report, generated


def cmd_classify(args) -> int:
    model = TrainedBvae.load(args.model)
    report, _ = classification(model, _table(args), args, Path(args.report), run_meta(args))
    print(f"test accuracy {report.test_accuracy:.3f}; oracle {report.oracle_accuracy_matches_as_real:.3f}")
    return 0


def dual(table, args, out_report: Path, meta: dict):
    report, model = run_dual_representation(table, args.dup, args.seed, args.epochs,
                                            args.batch_size, args.beta)
    write_json(out_report, report.to_dict(), meta)
    rows = [[lab, x, y, a] for lab, (x, y), a in zip(report.labels, report.points, report.angles)]
    write_csv(out_report.with_suffix(".csv"), ["orbital", "mu1", "mu2", "angle"], rows, meta)
    latent = LatentMap(tuple(report.labels), report.points)
    order_rank = {lab: i + 1 for i, lab in enumerate(report.order)}
    export_scatter(latent, out_report.with_name(out_report.stem + "_variables"),
                   order_rank or None, "angular_rank", continuous=True, header=meta,
                   title="orbital variables on the latent space",
                   annotations={lab: lab for lab in report.labels}, svg=True)
    return report, model


def cmd_dual(args) -> int:
    report, _ = dual(_table(args), args, Path(args.report), run_meta(args))
    print(f"best tau {report.tau:.3f}; exact Madelung order: {report.exact_match}")
    return 0


def mendeleev(table, args, out_report: Path, meta: dict):
    holdout = tuple(s.strip() for s in args.holdout.split(","))
    report, model = run_mendeleev_study(table, args.cutoff, holdout, args.seed, "conv", args.dup,
                                        args.epochs, args.batch_size, args.beta)
    write_json(out_report, report.to_dict(), meta)
    cols = ["symbol", "z", "year", "mu1", "mu2", "distance", "percentile"]
    write_csv(out_report.with_suffix(".csv"), cols,
              ([h["symbol"], h["z"], h["year"], *h["point"], h["distance"], h["percentile"]]
               for h in report.holdout), meta)
    subset = mendeleev_subset(table, args.cutoff)
    everything = table.subset(sorted(set(subset.zs) | {table[s].z for s in holdout}))
    latent = encode_elements(model, everything)
    status = {z: ("held out" if z not in set(subset.zs) else "known") for z in everything.zs}
    export_scatter(latent, out_report.with_name(out_report.stem + "_map"), status, "status",
                   header=meta, title=f"elements known by {args.cutoff} and later discoveries",
                   annotations={rec.z: rec.symbol for rec in everything})
    return report, model


def cmd_mendeleev(args) -> int:
    report, _ = mendeleev(_table(args), args, Path(args.report), run_meta(args))
    print("within 95th percentile: " + ", ".join(f"{k}={v}" for k, v in report.within().items()))
    return 0


# -- reproduce ---------------------------------------------------------------------


def _figure5(model, table, out: Path, meta: dict):
    recs = [table[s] for s in FIGURE5_ELEMENTS]
    base = featurize_configs([r.config for r in recs], model.recipe)
    mu, _ = encode(model, base)
    decoded = decode(model, mu)
    inputs = denormalize(model, base)
    outputs = denormalize(model, decoded)
    rounded = rounded_cells(model.recipe, decoded)
    panels = [(r.symbol, img) for r, img in zip(recs, inputs)]
    panels += [(f"({m[0]:.2f}, {m[1]:.2f})", img) for m, img in zip(mu, outputs)]
    write_svg(out / "figure5.svg", render_images_svg(panels, "inputs (first six) and decoded images"),
              meta)
    cols = ["symbol", "kind", "mu1", "mu2"] + grid_labels()
    rows = []
    for r, m, a, b, c in zip(recs, mu, inputs, outputs, rounded):
        rows += [[r.symbol, "input", *m, *a], [r.symbol, "decoded", *m, *b],
                 [r.symbol, "rounded", *m, *c]]
    write_csv(out / "figure5.csv", cols, rows, meta)


def cmd_reproduce(args) -> int:
    table = _table(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = run_meta(args)
    targets = FIGURES if args.target == "all" else (args.target,)
    needs_model = {"figure3", "figure5", "figure6", "figure7", "figure9", "figure10", "figure12"}
    model = latent = None
    if needs_model & set(targets):
        if args.model:
            model = TrainedBvae.load(args.model)
        else:
            model = train_reference(table, "conv", args.seed, args.epochs)
            model.save(out / "conv.ckpt", {"config_hash": meta["config_hash"]})
        latent = encode_elements(model, table)
    symbols = {rec.z: rec.symbol for rec in table}
    summary = {}
    for target in targets:
        log.info("reproducing %s", target)
        if target == "figure3":
            for plot in ("period", "group"):
                export_scatter(latent, out / f"figure3_{plot}", element_labels(table, PLOTS[plot]),
                               PLOTS[plot], header=meta, annotations=symbols,
                               title=f"realigned 7x4 images: {plot}")
        elif target == "figure5":
            _figure5(model, table, out, meta)
        elif target == "figure6":
            summary["figure6"] = analyze_map(latent, table, out, meta,
                                             ("period", "group", "block", "type"), False,
                                             seed=args.seed, prefix="figure6")
        elif target == "figure7":
            export_scatter(latent, out / "figure7_melting", element_labels(table, "melting_point"),
                           "melting_point", header=meta, annotations=symbols,
                           title="melting point (K)")
            violations = madelung_violations(table)
            flags = {z: ("violation" if z in violations else "consistent") for z in table.zs}
            export_scatter(latent, out / "figure7_violations", flags, "madelung", header=meta,
                           annotations=symbols, title="Madelung rule violations")
            report = outlier_scores(latent, table)
            write_csv(out / "figure7_outliers.csv", ["z", "symbol", "score", "violation"],
                      ([z, symbols[z], s, z in violations] for z, s in report.ranked), meta)
        elif target == "figure8":
            margs = argparse.Namespace(cutoff=1869, holdout=",".join(MENDELEEV_HOLDOUT),
                                       seed=args.seed, dup=100, epochs=args.mendeleev_epochs,
                                       batch_size=32, beta=0.03)
            report, _ = mendeleev(table, margs, out / "figure8.json", meta)
            summary["figure8"] = report.within()
        elif target == "figure9":
            pol = polar_transform(latent, estimate_center(latent))
            for plot in ("period", "group"):
                export_scatter(pol, out / f"figure9_{plot}", element_labels(table, PLOTS[plot]),
                               PLOTS[plot], header=meta, annotations=symbols,
                               title=f"polar coordinates: {plot}")
        elif target == "figure10":
            grid, _ = write_grid(model, table, 50, None, out / "figure10_grid.csv", meta, latent)
            radius = 0.1 * min(grid.bounds[1] - grid.bounds[0], grid.bounds[3] - grid.bounds[2])
            summary["figure10"] = {"central_mean_estimate":
                                   central_estimate(grid, estimate_center(latent), radius)}
        elif target == "figure12":
            cargs = argparse.Namespace(band="0.2:0.7", sigma=1.0, seed=args.seed, grid_n=50,
                                       classifier_epochs=args.classifier_epochs,
                                       classifier_batch=16)
            report, generated = classification(model, table, cargs, out / "figure12.json", meta,
                                               latent)
            pts = list(latent.points) + [[g["x"], g["y"]] for g in generated]
            keys = [symbols[z] for z in table.zs] + [f"g{i}" for i in range(len(generated))]
            kind = {k: ("real" if i < len(table) else "generated") for i, k in enumerate(keys)}
            export_scatter(LatentMap(tuple(keys), pts), out / "figure12_map", kind, "kind",
                           header=meta, title="real elements and filtered generated grid")
            summary["figure12"] = {"test_accuracy": report.test_accuracy,
                                   "generated": report.n_generated}
        elif target == "figure14":
            dargs = argparse.Namespace(dup=500, seed=args.seed, epochs=args.dual_epochs,
                                       batch_size=32, beta=0.03)
            report, _ = dual(table, dargs, out / "figure14.json", meta)
            summary["figure14"] = {"tau": report.tau, "exact_match": report.exact_match}
    write_json(out / "summary.json", summary, meta)
    print(json.dumps(_clean(summary), sort_keys=True))
    return 0


# -- parser ------------------------------------------------------------------------


def _add_data(p):
    p.add_argument("--data", help="element CSV (default: bundled snapshot)")


def _add_recipe(p, default_variant=None):
    p.add_argument("--variant", choices=VARIANTS, default=default_variant)
    p.add_argument("--normalization", choices=("total", "per_column"))
    p.add_argument("--sqrt", action="store_true", help="square-root inputs before normalizing")
    p.add_argument("--dup", type=int, help="duplicate every row this many times")
    p.add_argument("--alpha", type=float, default=0.0, help="Gaussian noise scale")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--period-encoding", choices=PERIOD_ENCODINGS)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="elemvae", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"elemvae {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with option defaults")
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = sub.add_parser("elements", help="inspect or validate element data")
    esub = p.add_subparsers(dest="elements_command", required=True)
    v = esub.add_parser("validate", help="validate an element CSV and print a per-element report")
    v.add_argument("path", nargs="?", help="element CSV (default: bundled snapshot)")
    v.set_defaults(func=cmd_elements)
    s = esub.add_parser("show", help="print one element")
    s.add_argument("symbol")
    s.add_argument("--path", help="element CSV (default: bundled snapshot)")
    s.set_defaults(func=cmd_elements)

    p = add("featurize", cmd_featurize, "build a feature matrix CSV")
    _add_data(p)
    _add_recipe(p, "image28")
    p.add_argument("--transposed", action="store_true", help="19 x 118 variable matrix")
    p.add_argument("--out", required=True)

    p = add("train", cmd_train, "train a beta-VAE and write a checkpoint")
    _add_data(p)
    p.add_argument("--model", choices=sorted(MODELS), default="conv")
    _add_recipe(p)
    p.add_argument("--beta", type=float, default=0.03)
    p.add_argument("--epochs", type=int, help="default: the model's reference epoch count")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--split", type=float, default=0.67)
    p.add_argument("--granularity", choices=("row", "entity"), default="row")
    p.add_argument("--lr", type=float, help="override the optimizer learning rate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cutoff", type=int, help="train only on elements discovered by this year")
    p.add_argument("--out", required=True)

    p = add("encode", cmd_encode, "encode elements (or orbital variables) to latent means")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--out", required=True)

    p = add("analyze", cmd_analyze, "latent maps, polar maps and separation/order/outlier metrics")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--plot", nargs="+", choices=sorted(PLOTS), default=sorted(PLOTS))
    p.add_argument("--polar", action="store_true")
    p.add_argument("--center", default="centroid", help="centroid, symmetry or x,y")
    p.add_argument("--k", type=int, default=3, help="neighbours for outlier scores")
    p.add_argument("--permutations", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = add("grid", cmd_grid, "decode a regular grid over the latent space")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--bounds", help="xmin:xmax:ymin:ymax (default: padded data bounds)")
    p.add_argument("--out", required=True)

    p = add("classify", cmd_classify, "real-vs-generated classification study")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--band", default="0.2:0.7", help="lo:hi distance band in sigma units")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--grid-n", type=int, default=50)
    p.add_argument("--classifier-epochs", type=int, default=ClassifierConfig.epochs)
    p.add_argument("--classifier-batch", type=int, default=ClassifierConfig.batch_size)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)

    p = add("dual", cmd_dual, "dual representation: encode the orbital variables")
    _add_data(p)
    p.add_argument("--dup", type=int, default=500)
    p.add_argument("--epochs", type=int, default=REFERENCE_EPOCHS["dense118"])
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--beta", type=float, default=0.03)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)

    p = add("mendeleev", cmd_mendeleev, "train on elements known by a year and place later ones")
    _add_data(p)
    p.add_argument("--cutoff", type=int, default=1869)
    p.add_argument("--holdout", default=",".join(MENDELEEV_HOLDOUT))
    p.add_argument("--dup", type=int, default=100)
    p.add_argument("--epochs", type=int, default=REFERENCE_EPOCHS["conv"])
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--beta", type=float, default=0.03)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)

    p = add("reproduce", cmd_reproduce, "regenerate a figure's data and plot (or all of them)")
    p.add_argument("target", choices=FIGURES + ("all",))
    _add_data(p)
    p.add_argument("--model", help="reuse a trained conv checkpoint instead of training")
    p.add_argument("--epochs", type=int, default=REFERENCE_EPOCHS["conv"])
    p.add_argument("--mendeleev-epochs", type=int, default=REFERENCE_EPOCHS["conv"])
    p.add_argument("--dual-epochs", type=int, default=REFERENCE_EPOCHS["dense118"])
    p.add_argument("--classifier-epochs", type=int, default=ClassifierConfig.epochs)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    return parser, subs


def _apply_config_file(parser, subs, argv, args):
    if not getattr(args, "config", None):
        return args
    data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{args.config}: config must be a JSON object")
    sp = subs[args.command]
    known = {a.dest for a in sp._actions}
    defaults = {}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            raise ValueError(f"{args.config}: unknown option {key!r} for {args.command}")
        defaults[dest] = value
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _apply_config_file(parser, subs, argv, args)
        return args.func(args)
    except (ElementDataError, StudyError, AnalysisError, FileNotFoundError, KeyError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
