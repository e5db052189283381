"""Command-line pipeline: synth, fit, simulate, baseline, evaluate, sweep.

Every subcommand writes its artifacts under --out: traces in the
tab-separated format, reports as CSV with a `# seed=` header line, and
a rendered figure next to each report. Option precedence is flags over
config file (flat key=value lines) over defaults; defaults follow the
stock operating point (normal fit, percentile 0.4, 1500-byte cells).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from types import SimpleNamespace

import numpy as np

from . import baselines, plots
from .errors import InvalidParams, WTFPadError
from .evaluation import (
    closed_world_eval,
    features_matrix,
    open_world_eval,
    proc_curve,
    roc_binarized,
)
from .fitting import materialize_histograms, split_burst_gap
from .histograms import HistogramSet, disabled_histogram_set
from .simulator import LinkModel, overheads, simulate_corpus
from .traces import (
    BurstProfile,
    iter_label_instance,
    load_corpus,
    save_corpus,
    synth_corpus,
)

DEFAULT_PERCENTILES = (0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01)


# --- option plumbing ---

def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidParams(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _coerce(raw: str, kind: type):
    if kind is bool:
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise InvalidParams(f"not a boolean: {raw!r}")
    return kind(raw)


def _resolve(args: argparse.Namespace, spec: dict[str, tuple[object, type]]) -> SimpleNamespace:
    """Merge flag > config-file > default, per option."""
    config = _parse_config_file(args.config) if getattr(args, "config", None) else {}
    resolved = {}
    for key, (default, kind) in spec.items():
        value = getattr(args, key, None)
        if value is None and key in config:
            value = _coerce(config[key], kind)
        if value is None:
            value = default
        resolved[key] = value
    return SimpleNamespace(**resolved)


def _write_manifest(out_dir: str, command: str, options: SimpleNamespace) -> None:
    os.makedirs(out_dir, exist_ok=True)
    lines = [f"command={command}"]
    for key in sorted(vars(options)):
        lines.append(f"{key}={getattr(options, key)}")
    with open(os.path.join(out_dir, "run.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_csv(path: str, seed: int, header: list[str], rows: list[list]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# seed={seed}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return "%.6f" % value
    if value is None:
        return ""
    return str(value)


def _write_json(path: str, payload: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- subcommands ---

SYNTH_SPEC = {
    "pages": (20, int),
    "instances": (20, int),
    "seed": (0, int),
    "cell_size": (1500, int),
    "out": (None, str),
}


def cmd_synth(opts: SimpleNamespace) -> int:
    profile = BurstProfile(cell_size=opts.cell_size)
    corpus = synth_corpus(opts.pages, opts.instances, profile, seed=opts.seed)
    save_corpus(corpus, opts.out)
    _write_manifest(opts.out, "synth", opts)
    print(f"wrote {len(corpus)} traces to {opts.out}")
    return 0


FIT_SPEC = {
    "corpus": (None, str),
    "family": ("normal", str),
    "percentile": (0.4, float),
    "bins": (20, int),
    "max_iat": (None, float),
    "tokens": (300, int),
    "pn_burst": (0.4, float),
    "window": (2, int),
    "threshold": ("auto", str),
    "rounding": ("nearest", str),
    "seed": (0, int),
    "out": (None, str),
}


def cmd_fit(opts: SimpleNamespace) -> int:
    corpus = load_corpus(opts.corpus)
    threshold = opts.threshold if opts.threshold == "auto" else float(opts.threshold)
    split = split_burst_gap(corpus, window=opts.window, threshold=threshold)
    rng = np.random.default_rng([opts.seed, 11])
    hists, fits = materialize_histograms(
        split,
        family=opts.family,
        percentile=opts.percentile,
        n=opts.bins,
        max_iat=opts.max_iat,
        token_budget=opts.tokens,
        pn_burst=opts.pn_burst,
        rng=rng,
        rounding=opts.rounding,
    )
    _write_json(
        os.path.join(opts.out, "histograms.json"),
        {"seed": opts.seed, "histograms": hists.to_dict()},
    )
    report = {
        "seed": opts.seed,
        "family": opts.family,
        "percentile": opts.percentile,
        "window": split.window,
        "threshold": {d.name.lower(): t for d, t in split.threshold.items()},
        "mean_burst_length": split.mean_burst_length,
        "roles": {
            role: {
                "mu": rf.fit.mu,
                "sigma": rf.fit.sigma,
                "mu_tuned": rf.tuned.mu,
                "sigma_tuned": rf.tuned.sigma,
                "ks_statistic": rf.fit.ks_statistic,
                "sample_count": rf.fit.sample_count,
            }
            for role, rf in fits.items()
        },
    }
    _write_json(os.path.join(opts.out, "fit_report.json"), report)
    _write_manifest(opts.out, "fit", opts)
    print(f"fit {len(fits)} roles; histograms in {opts.out}/histograms.json")
    return 0


SIM_SPEC = {
    "corpus": (None, str),
    "histograms": (None, str),
    "disable_padding": (False, bool),
    "seed": (0, int),
    "cell_size": (1500, int),
    "one_way_delay": (0.0, float),
    "annotate": (False, bool),
    "out": (None, str),
}


def _overhead_rows(original, padded) -> tuple[list[list], list[float]]:
    rows, bw = [], []
    padded_by_key = {
        (label, idx): trace for label, idx, trace in iter_label_instance(padded)
    }
    for label, idx, trace in iter_label_instance(original):
        report = overheads(trace, padded_by_key[(label, idx)])
        rows.append(
            [label, idx, report.bandwidth_overhead, report.latency_overhead,
             report.dummy_count, report.control_count]
        )
        bw.append(report.bandwidth_overhead)
    return rows, bw


def cmd_simulate(opts: SimpleNamespace) -> int:
    corpus = load_corpus(opts.corpus)
    if opts.disable_padding:
        hists = disabled_histogram_set()
    elif opts.histograms:
        with open(opts.histograms, encoding="utf-8") as fh:
            hists = HistogramSet.from_dict(json.load(fh)["histograms"])
    else:
        raise InvalidParams("need --histograms FILE or --disable-padding")
    link = LinkModel(opts.one_way_delay)
    padded = simulate_corpus(corpus, hists, link, base_seed=opts.seed,
                             cell_size=opts.cell_size)
    save_corpus(padded, os.path.join(opts.out, "padded"), annotate=opts.annotate)
    rows, bw = _overhead_rows(corpus, padded)
    _write_csv(
        os.path.join(opts.out, "overheads.csv"), opts.seed,
        ["label", "instance", "bw_overhead", "lat_overhead", "dummies", "controls"],
        rows,
    )
    plots.save_overhead_figure({"wtfpad": bw}, os.path.join(opts.out, "overheads.png"))
    _write_manifest(opts.out, "simulate", opts)
    print(f"padded {len(corpus)} traces; median bw overhead "
          f"{float(np.median(bw)):.3f}")
    return 0


BASELINE_SPEC = {
    "corpus": (None, str),
    "defense": ("both", str),
    "tau": (10.0, float),
    "rho": (0.02, float),
    "rho_out": (0.053, float),
    "rho_in": (0.138, float),
    "pad_multiple": (100, int),
    "cell_size": (1500, int),
    "annotate": (False, bool),
    "seed": (0, int),
    "out": (None, str),
}


def cmd_baseline(opts: SimpleNamespace) -> int:
    corpus = load_corpus(opts.corpus)
    wanted = ("buflo", "tamaraw") if opts.defense == "both" else (opts.defense,)
    box: dict[str, list[float]] = {}
    for name in wanted:
        if name == "buflo":
            params = baselines.BuFLOParams(opts.tau, opts.rho, opts.cell_size)
        else:
            params = baselines.TamarawParams(
                opts.rho_out, opts.rho_in, opts.cell_size, opts.pad_multiple
            )
        padded = baselines.transform_corpus(corpus, name, params)
        save_corpus(padded, os.path.join(opts.out, name), annotate=opts.annotate)
        rows, bw = _overhead_rows(corpus, padded)
        _write_csv(
            os.path.join(opts.out, f"overheads_{name}.csv"), opts.seed,
            ["label", "instance", "bw_overhead", "lat_overhead", "dummies", "controls"],
            rows,
        )
        box[name] = bw
    plots.save_overhead_figure(box, os.path.join(opts.out, "overheads.png"))
    _write_manifest(opts.out, "baseline", opts)
    print(f"applied {', '.join(wanted)} to {len(corpus)} traces")
    return 0


EVAL_SPEC = {
    "corpus": (None, str),
    "background": (None, str),
    "world_sizes": ("0,50,100", str),
    "k": (5, int),
    "open_k": (4, int),
    "folds": (10, int),
    "percentile": (None, float),
    "seed": (0, int),
    "out": (None, str),
}


def cmd_evaluate(opts: SimpleNamespace) -> int:
    corpora = {"raw": load_corpus(opts.corpus)}
    for item in opts.protected:
        if "=" not in item:
            raise InvalidParams(f"--protected wants NAME=DIR, got {item!r}")
        name, path = item.split("=", 1)
        corpora[name] = load_corpus(path)

    rows = []
    roc_curves: dict[str, list[tuple[float, float]]] = {}
    proc_curves: dict[str, list[tuple[float, float]]] = {}
    proc_baselines: dict[str, float] = {}
    for name, corpus in corpora.items():
        feats = features_matrix(corpus)
        closed = closed_world_eval(corpus, k=opts.k, folds=opts.folds,
                                   seed=opts.seed, features=feats)
        rows.append(["closed", name, None, opts.percentile, closed.accuracy,
                     closed.tpr, None, closed.precision, closed.f1, None, None])
        roc = roc_binarized(corpus, k=opts.k, seed=opts.seed, folds=opts.folds,
                            features=feats)
        rows.append(["roc", name, None, opts.percentile, None, None, None,
                     None, None, roc.auc, None])
        roc_curves[name] = roc.points
        _write_csv(os.path.join(opts.out, f"roc_{name}.csv"), opts.seed,
                   ["x", "y"], [[x, y] for x, y in roc.points])
        proc = proc_curve([s for s, _ in roc.scores],
                          [p for _, p in roc.scores], max_score=opts.k)
        rows.append(["proc", name, None, opts.percentile, None, None, None,
                     None, None, proc.auc, proc.random_baseline])
        proc_curves[name] = proc.points
        proc_baselines[name] = proc.random_baseline
        _write_csv(os.path.join(opts.out, f"proc_{name}.csv"), opts.seed,
                   ["x", "y"], [[x, y] for x, y in proc.points])

    if opts.background:
        background = load_corpus(opts.background)
        sizes = [int(s) for s in str(opts.world_sizes).split(",") if s != ""]
        reports = open_world_eval(corpora["raw"], background, k=opts.open_k,
                                  world_sizes=sizes, seed=opts.seed)
        auc_points = []
        base_points = []
        for rep in reports:
            rows.append(["open", "raw", rep.world_size, opts.percentile,
                         rep.accuracy, rep.tpr, rep.fpr, rep.precision,
                         rep.f1, rep.auc, rep.random_baseline])
            auc_points.append((rep.world_size, rep.auc))
            base_points.append((rep.world_size, rep.random_baseline))
        _write_csv(os.path.join(opts.out, "world_auc.csv"), opts.seed,
                   ["world_size", "auc", "random_baseline"],
                   [[w, a, b] for (w, a), (_, b) in zip(auc_points, base_points)])
        plots.save_world_size_figure({"raw": auc_points},
                                     os.path.join(opts.out, "world_auc.png"),
                                     baseline=base_points)

    _write_csv(
        os.path.join(opts.out, "report.csv"), opts.seed,
        ["experiment", "corpus", "world_size", "percentile", "accuracy",
         "tpr", "fpr", "precision", "f1", "auc", "random_baseline"],
        rows,
    )
    plots.save_roc_figure(roc_curves, os.path.join(opts.out, "roc.png"))
    plots.save_proc_figure(proc_curves, os.path.join(opts.out, "proc.png"),
                           baselines=proc_baselines)
    _write_manifest(opts.out, "evaluate", opts)
    for row in rows:
        if row[0] == "closed":
            print(f"closed-world accuracy [{row[1]}]: {row[4]:.3f}")
    return 0


SWEEP_SPEC = {
    "corpus": (None, str),
    "percentiles": (",".join(str(p) for p in DEFAULT_PERCENTILES), str),
    "family": ("normal", str),
    "bins": (20, int),
    "max_iat": (None, float),
    "tokens": (300, int),
    "pn_burst": (0.4, float),
    "window": (2, int),
    "cell_size": (1500, int),
    "k": (5, int),
    "folds": (10, int),
    "seed": (0, int),
    "out": (None, str),
}


def cmd_sweep(opts: SimpleNamespace) -> int:
    corpus = load_corpus(opts.corpus)
    grid = [float(p) for p in str(opts.percentiles).split(",") if p != ""]
    split = split_burst_gap(corpus, window=opts.window)
    raw_acc = closed_world_eval(corpus, k=opts.k, folds=opts.folds,
                                seed=opts.seed).accuracy
    rows = []
    for i, p in enumerate(grid):
        rng = np.random.default_rng([opts.seed, 17, i])
        hists, _ = materialize_histograms(
            split, family=opts.family, percentile=p, n=opts.bins,
            max_iat=opts.max_iat, token_budget=opts.tokens,
            pn_burst=opts.pn_burst, rng=rng,
        )
        padded = simulate_corpus(corpus, hists, base_seed=opts.seed,
                                 cell_size=opts.cell_size)
        _, bw = _overhead_rows(corpus, padded)
        acc = closed_world_eval(padded, k=opts.k, folds=opts.folds,
                                seed=opts.seed).accuracy
        rows.append([p, float(np.median(bw)), acc])
        print(f"p={p:g}: median bw overhead {rows[-1][1]:.3f}, "
              f"accuracy {acc:.3f} (raw {raw_acc:.3f})")
    _write_csv(os.path.join(opts.out, "sweep.csv"), opts.seed,
               ["percentile", "median_bw_overhead", "mean_accuracy"], rows)
    plots.save_tradeoff_figure([(r[0], r[1], r[2]) for r in rows],
                               os.path.join(opts.out, "sweep.png"))
    _write_manifest(opts.out, "sweep", opts)
    return 0


# --- argument wiring ---

def _add_options(parser: argparse.ArgumentParser, spec: dict) -> None:
    # nothing is marked required here: config files may supply any option
    parser.add_argument("--config", help="flat key=value config file")
    for key, (_, kind) in spec.items():
        flag = "--" + key.replace("_", "-")
        if kind is bool:
            parser.add_argument(flag, action="store_const", const=True,
                                default=None, dest=key)
        else:
            parser.add_argument(flag, type=kind, default=None, dest=key)


def _require(opts: SimpleNamespace, command: str, *keys: str) -> None:
    for key in keys:
        if getattr(opts, key) in (None, ""):
            raise InvalidParams(f"{command}: --{key.replace('_', '-')} is required")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wtfpad",
        description="Adaptive link-padding defense toolkit: build padding "
                    "histograms from traffic, simulate the defense over "
                    "traces, and evaluate attack resistance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_options(p, SYNTH_SPEC)
    p.set_defaults(func=cmd_synth, spec=SYNTH_SPEC, required=("out",))

    p = sub.add_parser("fit", help="fit distributions and materialize histograms")
    _add_options(p, FIT_SPEC)
    p.set_defaults(func=cmd_fit, spec=FIT_SPEC, required=("corpus", "out"))

    p = sub.add_parser("simulate", help="apply the defense to a corpus")
    _add_options(p, SIM_SPEC)
    p.set_defaults(func=cmd_simulate, spec=SIM_SPEC, required=("corpus", "out"))

    p = sub.add_parser("baseline", help="apply BuFLO/Tamaraw to a corpus")
    _add_options(p, BASELINE_SPEC)
    p.set_defaults(func=cmd_baseline, spec=BASELINE_SPEC, required=("corpus", "out"))

    p = sub.add_parser("evaluate", help="run the k-NN attack evaluations")
    _add_options(p, EVAL_SPEC)
    p.add_argument("--protected", action="append", metavar="NAME=DIR",
                   help="defended corpus to compare (repeatable)")
    p.set_defaults(func=cmd_evaluate, spec=EVAL_SPEC, required=("corpus", "out"))

    p = sub.add_parser("sweep", help="overhead/accuracy trade-off over percentiles")
    _add_options(p, SWEEP_SPEC)
    p.set_defaults(func=cmd_sweep, spec=SWEEP_SPEC, required=("corpus", "out"))
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _resolve(args, args.spec)
        opts.protected = list(getattr(args, "protected", None) or [])
        _require(opts, args.command, *args.required)
        return args.func(opts)
    except WTFPadError as exc:
        print(f"wtfpad {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"wtfpad {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
