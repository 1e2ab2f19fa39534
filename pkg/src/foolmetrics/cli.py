"""Command-line front end: simulate -> attack -> eval / curves / report.

Every subcommand writes deterministic files (no timestamps, relative paths
only) that embed the tool version and the run seed.  Errors are printed to
stderr as a single JSON object; bad arguments exit with status 2 and bad
inputs with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import io as fio
from . import metrics as M
from .analysis import CategorySubset, comparison_report
from .attacklab.evaluate import STANDARD_ATTACKS, AttackConfig, evaluate_attack, read_attack_config
from .attacklab.model import load_model, save_model, train_model
from .attacklab.task import generate_task, read_task, write_task
from .errors import FoolMetricsError, ParseError, UsageError
from .manifest import MANIFEST_NAME, RunManifest, read_manifest, write_manifest
from .taxonomy import pairwise_wup_matrix, read_taxonomy, write_taxonomy
from .visual_sim import (
    pairwise_vis_matrix,
    percentile_curve,
    read_templates,
    write_matrix,
    write_templates,
)

log = logging.getLogger("foolmetrics")

OUT_ENV = "FOOLMETRICS_OUT"
DEFAULT_OUT = "foolmetrics-out"
DEFAULT_THRESHOLDS = tuple(round(0.05 * k, 2) for k in range(1, 21))


def default_out_dir() -> str:
    return os.environ.get(OUT_ENV) or DEFAULT_OUT


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- argument types ------------------------------------------------------------

def _int_list(text: str) -> tuple:
    try:
        vals = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _float_list(text: str) -> tuple:
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _name_list(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _metric_config(args) -> M.MetricConfig:
    try:
        return M.MetricConfig(args.ts, args.tv, args.kgrid)
    except FoolMetricsError as exc:
        raise UsageError(str(exc)) from None


def _add_metric_flags(p):
    p.add_argument("--ts", type=float, default=0.7, help="semantic (Wu-Palmer) threshold, default 0.7")
    p.add_argument("--tv", type=float, default=0.1, help="visual (template cosine) threshold, default 0.1")
    p.add_argument("--kgrid", type=_int_list, default=None,
                   help="K values, e.g. 1,2,5,10 (default: 1,2,5,10,20,50,100 below the class count)")


def _add_context_flags(p):
    p.add_argument("--taxonomy", help="taxonomy file (enables semantic metrics)")
    p.add_argument("--templates", help="weight-template CSV (enables visual metrics)")
    p.add_argument("--subsets", help="JSON object {name: [class ids]} for fine-grained confusion")


def _add_sim_flags(p):
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--classes", type=int, default=16)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--super", dest="n_super", type=int, default=4, help="number of super-classes")
    p.add_argument("--samples", type=int, default=40, help="samples per class")
    p.add_argument("--hidden", type=_int_list, default=(64, 64))
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.01)


def _add_attack_flags(p):
    p.add_argument("--attacks", type=_name_list, default=None,
                   help=f"comma-separated attack kinds (default: {','.join(STANDARD_ATTACKS)})")
    p.add_argument("--config", help="attack configuration file with one [section] per run")
    p.add_argument("--eps", type=float, default=None, help="override the budget for every attack")
    p.add_argument("--eps-scale", type=float, default=None,
                   help="budget as a multiple of the median nearest class-mean distance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="foolmetrics", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"foolmetrics {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("simulate", help="generate a task, train a model, export templates")
    _add_sim_flags(p)
    p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or {DEFAULT_OUT})")

    p = sub.add_parser("attack", help="run attacks and write record files")
    p.add_argument("--manifest", default=None, help="run directory or manifest file from `simulate`")
    p.add_argument("--task")
    p.add_argument("--taxonomy")
    p.add_argument("--model")
    _add_attack_flags(p)
    p.add_argument("--seed", type=int, default=None, help="attack seed (default: the run seed)")
    p.add_argument("--out", default=None, help="output directory (default: the manifest's directory)")

    p = sub.add_parser("eval", help="metric report JSON for record files")
    p.add_argument("--records", nargs="+", required=True)
    _add_context_flags(p)
    _add_metric_flags(p)
    p.add_argument("--out", help="report path (default: stdout)")

    p = sub.add_parser("curves", help="FR@K, threshold-sweep and percentile CSVs")
    p.add_argument("--records", nargs="*", default=[])
    p.add_argument("--taxonomy")
    p.add_argument("--templates")
    p.add_argument("--thresholds", type=_float_list, default=DEFAULT_THRESHOLDS)
    _add_metric_flags(p)
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("report", help="comparison table over several record files")
    p.add_argument("--records", nargs="+", required=True)
    _add_context_flags(p)
    _add_metric_flags(p)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.add_argument("--json", dest="json_out", help="also write the report as JSON")

    p = sub.add_parser("pipeline", help="simulate, run all attacks, report and export curves")
    _add_sim_flags(p)
    _add_attack_flags(p)
    _add_metric_flags(p)
    p.add_argument("--thresholds", type=_float_list, default=DEFAULT_THRESHOLDS)
    p.add_argument("--out", default=None)
    return parser


# -- subcommands ---------------------------------------------------------------

def _emit(obj):
    sys.stdout.write(fio.dumps(obj))


def _out_dir(args) -> str:
    out = args.out or default_out_dir()
    os.makedirs(out, exist_ok=True)
    return out


def _simulate(args) -> tuple:
    out = _out_dir(args)
    task = generate_task(seed=args.seed, class_count=args.classes, dim=args.dim, n_super=args.n_super,
                         samples_per_class=args.samples)
    tr = train_model(task, hidden=args.hidden, epochs=args.epochs, lr=args.lr, seed=args.seed)
    if tr.train_accuracy < 0.95:
        log.warning("train accuracy %.3f is below 0.95", tr.train_accuracy)
    settings = {"classes": args.classes, "dim": args.dim, "n_super": args.n_super, "samples": args.samples,
                "hidden": list(args.hidden), "epochs": args.epochs, "lr": args.lr,
                "train_accuracy": tr.train_accuracy}
    header = fio.header_line(fio.provenance(args.seed, command="simulate"))
    files = {"task": "task.csv", "taxonomy": "taxonomy.txt", "model": "model.json",
             "templates": "templates.csv", "vis_matrix": "vis_matrix.csv"}
    write_task(task, os.path.join(out, files["task"]), header)
    write_taxonomy(task.taxonomy, os.path.join(out, files["taxonomy"]), header)
    save_model(tr.model, os.path.join(out, files["model"]), provenance=fio.provenance(args.seed))
    write_templates(tr.model.templates(), os.path.join(out, files["templates"]), header)
    write_matrix(pairwise_vis_matrix(tr.model.templates()), os.path.join(out, files["vis_matrix"]), header)
    groups = [CategorySubset(name, frozenset(ids)) for name, ids in task.sibling_groups().items()]
    files["subsets"] = "subsets.json"
    fio.write_text(os.path.join(out, files["subsets"]),
                   fio.format_subsets(groups, fio.provenance(args.seed, command="simulate")))
    m = RunManifest(root=out, seed=args.seed, files=files, simulate=settings)
    write_manifest(m)
    return m, tr


def cmd_simulate(args):
    m, tr = _simulate(args)
    _emit({"command": "simulate", "seed": args.seed, "train_accuracy": tr.train_accuracy,
           "manifest": m.path(MANIFEST_NAME)})


def _attack_configs(args, seed) -> dict:
    if args.config and args.attacks:
        raise UsageError("give either --attacks or --config, not both")
    if args.config:
        configs = read_attack_config(args.config)
    else:
        kinds = args.attacks or STANDARD_ATTACKS
        try:
            configs = {k: AttackConfig(k) for k in kinds}
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    out = {}
    for name, cfg in configs.items():
        cfg = replace(cfg, seed=seed)
        if args.eps is not None:
            cfg = replace(cfg, eps=args.eps)
        if args.eps_scale is not None:
            cfg = replace(cfg, eps_scale=args.eps_scale)
        out[name] = cfg
    return out


def _run_attacks(args, manifest: RunManifest, task, model, seed) -> dict:
    os.makedirs(manifest.path("records"), exist_ok=True)
    written = {}
    for name, cfg in _attack_configs(args, seed).items():
        rs = evaluate_attack(model, task, cfg, name=name)
        rs.meta["provenance"] = fio.provenance(seed, command="attack")
        rel = os.path.join("records", f"{name}.jsonl")
        fio.write_records(rs, manifest.path(rel))
        manifest.records[name] = rel
        manifest.attacks[name] = rs.meta["config"]
        written[name] = {"records": len(rs), "fooling_rate": M.fooling_rate(rs) if len(rs) else None,
                         "errors": rs.meta["errors"]}
    return written


def cmd_attack(args):
    if args.manifest:
        m = read_manifest(args.manifest)
        task_path, tax_path, model_path = m.file("task"), m.file("taxonomy"), m.file("model")
        if args.out:
            raise UsageError("--out cannot be combined with --manifest; records go next to the manifest")
    else:
        if not (args.task and args.taxonomy and args.model):
            raise UsageError("need --manifest, or all of --task, --taxonomy and --model")
        task_path, tax_path, model_path = args.task, args.taxonomy, args.model
        m = RunManifest(root=_out_dir(args))
    seed = args.seed if args.seed is not None else (m.seed if m.seed is not None else 0)
    task = read_task(task_path, read_taxonomy(tax_path))
    model = load_model(model_path)
    if model.input_dim != task.feature_dim or model.class_count != task.class_count:
        raise ParseError(f"model shape {model.sizes} does not fit the task "
                         f"(D={task.feature_dim}, C={task.class_count})", model_path)
    written = _run_attacks(args, m, task, model, seed)
    if m.seed is None:
        m.seed = seed
    write_manifest(m)
    _emit({"command": "attack", "seed": seed, "runs": written})


def _load_runs(paths: Sequence[str]) -> list:
    runs = []
    seen = set()
    for p in paths:
        rs = fio.read_records(p)
        name = rs.attack or os.path.splitext(os.path.basename(p))[0]
        if name in seen:
            raise UsageError(f"two record files share the run name {name!r}")
        seen.add(name)
        runs.append((name, rs))
    return runs


def _run_seed(runs) -> Optional[int]:
    for _, rs in runs:
        seed = rs.meta.get("provenance", {}).get("seed")
        if seed is not None:
            return seed
    return None


def _build_report(args, runs):
    cfg = _metric_config(args)
    t = read_taxonomy(args.taxonomy) if args.taxonomy else None
    v = pairwise_vis_matrix(read_templates(args.templates), args.templates) if args.templates else None
    subsets = fio.read_subsets(args.subsets) if getattr(args, "subsets", None) else ()
    return comparison_report(runs, cfg, t, v, subsets)


def _write_or_print(path, text):
    if path:
        fio.write_text(path, text)
    else:
        sys.stdout.write(text)


def cmd_eval(args):
    runs = _load_runs(args.records)
    report = _build_report(args, runs)
    _write_or_print(args.out, fio.format_report(report, fio.provenance(_run_seed(runs), command="eval")))


def cmd_report(args):
    runs = _load_runs(args.records)
    report = _build_report(args, runs)
    prov = fio.provenance(_run_seed(runs), command="report")
    if args.json_out:
        fio.write_text(args.json_out, fio.format_report(report, prov))
    _write_or_print(args.out, fio.format_report_csv(report, prov))


def write_curves(out, runs, cfg, t, templates, thresholds, prov) -> list:
    """Write the curve CSVs for ``runs`` into ``out``; returns the file names."""
    os.makedirs(out, exist_ok=True)
    names = []

    def put(name, text):
        fio.write_text(os.path.join(out, name), text)
        names.append(name)

    v = pairwise_vis_matrix(templates) if templates is not None else None
    for name, rs in runs:
        put(f"{name}.fr_curve.csv", fio.format_fr_curve(M.fr_curve(rs, cfg), prov))
        if t is not None:
            put(f"{name}.sweep_wup.csv", fio.format_sweep(M.threshold_sweep(rs, M.SEMANTIC, t, thresholds), prov))
        if v is not None:
            put(f"{name}.sweep_vis.csv", fio.format_sweep(M.threshold_sweep(rs, M.VISUAL, v, thresholds), prov))
    if t is not None:
        w = pairwise_wup_matrix(t, t.labels)
        off = w[~np.eye(len(w), dtype=bool)]
        if off.size:
            put("wup_percentiles.csv", fio.format_percentiles(percentile_curve(off), prov))
    if v is not None and v.class_count > 1:
        put("vis_percentiles.csv", fio.format_percentiles(percentile_curve(v.off_diagonal()), prov))
    return names


def cmd_curves(args):
    if not (args.records or args.taxonomy or args.templates):
        raise UsageError("nothing to plot: give --records, --taxonomy or --templates")
    runs = _load_runs(args.records)
    cfg = _metric_config(args)
    t = read_taxonomy(args.taxonomy) if args.taxonomy else None
    w = read_templates(args.templates) if args.templates else None
    out = _out_dir(args)
    names = write_curves(out, runs, cfg, t, w, args.thresholds,
                         fio.provenance(_run_seed(runs), command="curves"))
    _emit({"command": "curves", "files": names})


def cmd_pipeline(args):
    m, tr = _simulate(args)
    task = read_task(m.file("task"), read_taxonomy(m.file("taxonomy")))
    model = load_model(m.file("model"))
    _run_attacks(args, m, task, model, args.seed)
    runs = [(name, fio.read_records(m.path(rel))) for name, rel in m.records.items()]
    args.taxonomy, args.templates, args.subsets = m.file("taxonomy"), m.file("templates"), m.file("subsets")
    report = _build_report(args, runs)
    prov = fio.provenance(args.seed, command="pipeline")
    fio.write_text(m.path("comparison.csv"), fio.format_report_csv(report, prov))
    fio.write_text(m.path("report.json"), fio.format_report(report, prov))
    names = write_curves(m.path("curves"), runs, _metric_config(args), task.taxonomy,
                         read_templates(m.file("templates")), args.thresholds, prov)
    m.reports = {"comparison": "comparison.csv", "report": "report.json"}
    m.metric_config = report.as_dict()
    m.metric_config.pop("rows")
    write_manifest(m)
    _emit({"command": "pipeline", "seed": args.seed, "train_accuracy": tr.train_accuracy, "rows": len(report.rows),
           "comparison": m.path("comparison.csv"), "curves": len(names)})


COMMANDS = {
    "simulate": cmd_simulate,
    "attack": cmd_attack,
    "eval": cmd_eval,
    "curves": cmd_curves,
    "report": cmd_report,
    "pipeline": cmd_pipeline,
}


# -- entry point ---------------------------------------------------------------

def _error_payload(exc) -> dict:
    d = {"error": type(exc).__name__, "message": str(exc)}
    for key in ("path", "line", "record_id", "filename"):
        val = getattr(exc, key, None)
        if val is not None:
            d[key] = val
    return d


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(json.dumps(_error_payload(exc), sort_keys=True) + "\n")
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(json.dumps(_error_payload(exc), sort_keys=True) + "\n")
        return 2
    except (FoolMetricsError, OSError, ValueError, KeyError) as exc:
        sys.stderr.write(json.dumps(_error_payload(exc), sort_keys=True) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
