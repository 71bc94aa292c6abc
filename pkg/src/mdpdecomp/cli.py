"""
Command-line interface.

Exit codes: 0 success, 2 unreadable or non-watertight mesh, 3 no
feasible first cut, 4 bad configuration or dataset, 5 training
diverged. Errors are printed to stderr as one JSON line.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    DatasetError,
    DimensionMismatch,
    DivergenceError,
    NoFeasibleStart,
    ParseError,
    TopologyError,
)
from .evaluation import (
    RandomScorer,
    RunSpec,
    compare_configurations,
    ndcg_table,
    pearson_correlation,
    permutation_importance,
    write_ndcg_csv,
)
from .features import NAMES
from .geometry import load_mesh, save_obj
from .manufacturability import PrintConfig
from .ranking import (
    ScoringModel,
    TrainConfig,
    extract_ranked_lists,
    read_dataset,
    split_by_model,
    train,
    write_dataset,
)
from .search import BaselineSelector, LearnedSelector, SearchConfig, search, write_trace
from .shapes import centered

log = logging.getLogger("mdpdecomp")

EXIT_OK, EXIT_MESH, EXIT_INFEASIBLE, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3, 4, 5
MESH_SUFFIXES = (".obj", ".stl")
SEARCH_KEYS = ("beam_width", "pool", "max_stages", "delta_init", "delta_factor")


class CLIError(Exception):
    def __init__(self, code, kind, message):
        super().__init__(message)
        self.code = code
        self.kind = kind


def _fail(code, kind, message):
    raise CLIError(code, kind, message)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _seed(args):
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    env = os.environ.get("MDP_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        _fail(EXIT_CONFIG, "ConfigError", f"MDP_SEED must be an integer, got {env!r}")


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_configs(args):
    """
    Print and search settings; flags override the file, the file
    overrides built-in defaults.
    """
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    data = dict(data)
    search_part = data.pop("search", {}) or {}
    if not isinstance(search_part, dict):
        raise ConfigError("'search' must be a JSON object")
    extra = set(search_part) - set(SEARCH_KEYS)
    if extra:
        raise ConfigError(f"unknown search keys: {sorted(extra)}")
    for flag, key in (("direction_samples", "direction_samples"), ("plane_step", "plane_step_mm"),
                      ("platform_radius", "platform_radius_mm"), ("alpha_max", "alpha_max_deg")):
        v = getattr(args, flag, None)
        if v is not None:
            data[key] = v
    cfg = PrintConfig.from_dict(data)
    s = dict(search_part)
    for flag, key in (("beam", "beam_width"), ("pool", "pool"), ("max_stages", "max_stages")):
        v = getattr(args, flag, None)
        if v is not None:
            s[key] = v
    try:
        scfg = SearchConfig(**{k: (float if k.startswith("delta") else int)(v) for k, v in s.items()},
                            jobs=getattr(args, "jobs", 1) or 1)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg, scfg


def _load_solid(path, keep_position=False):
    m = load_mesh(path)
    return m if keep_position else centered(m)


def _mesh_files(directory):
    d = Path(directory)
    if not d.is_dir():
        _fail(EXIT_CONFIG, "ConfigError", f"not a directory: {directory}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in MESH_SUFFIXES)


def _manifest(out_dir, command, args, cfg=None, scfg=None, seed=None, inputs=(), outputs=(), wall=0.0,
              extra=None):
    man = {
        "command": command,
        "artifact_version": __version__,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "print_config": cfg.to_dict() if cfg is not None else None,
        "search_config": asdict(scfg) if scfg is not None else None,
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(str(p) for p in outputs),
        "wall_clock_s": round(wall, 3),
    }
    if extra:
        man.update(extra)
    _dump(man, Path(out_dir) / "manifest.json")


def _load_weights(path, flag):
    try:
        return ScoringModel.load(path)
    except DatasetError as exc:
        raise DatasetError(f"{flag}: {exc}") from None


def _plane_json(plane):
    return {"normal": [float(x) for x in plane.n], "offset": float(plane.offset)}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_decompose(args):
    t0 = time.perf_counter()
    cfg, scfg = _load_configs(args)
    seed = _seed(args)
    if args.selector == "learned":
        if not args.model:
            _fail(EXIT_CONFIG, "ConfigError", "--selector learned requires --model")
        selector = LearnedSelector(_load_weights(args.model, "--model"))
    else:
        selector = BaselineSelector()
    mesh = _load_solid(args.mesh, args.keep_position)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    try:
        res = search(mesh, cfg, scfg, selector, model_id=Path(args.mesh).stem)
    except NoFeasibleStart as exc:
        res, code = exc.result, EXIT_INFEASIBLE
    best = res.best
    parts, written = [], []
    for i, (part, plane) in enumerate(best.plan.parts):
        name = f"part_{i:03d}.obj"
        save_obj(part, out / name)
        written.append(name)
        parts.append({"mesh": name, "plane": _plane_json(plane),
                      "direction": [float(x) for x in plane.n], "volume": float(part.volume)})
    plan = {"parts": parts, "J": float(best.cost), "stages": best.cuts,
            "input_volume": float(mesh.volume)}
    _dump(plan, out / "plan.json")
    written.append("plan.json")
    if args.trace:
        write_trace(res.trace, out / "trace.jsonl")
        written.append("trace.jsonl")
    inputs = [args.mesh] + [p for p in (args.config, args.model) if p]
    _manifest(out, "decompose", args, cfg, scfg, seed, inputs, written, time.perf_counter() - t0)
    print(json.dumps({"J": plan["J"], "parts": len(parts)}))
    if code == EXIT_INFEASIBLE:
        _fail(EXIT_INFEASIBLE, "NoFeasibleStart", "no feasible first cut; single-part plan written")
    return EXIT_OK


def cmd_gen_dataset(args):
    t0 = time.perf_counter()
    cfg, scfg = _load_configs(args)
    scfg = replace(scfg, beam_width=scfg.pool)
    seed = _seed(args)
    files = _mesh_files(args.corpus_dir)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lists, stats, ok = [], {}, 0
    for path in files:
        try:
            mesh = _load_solid(path, args.keep_position)
            res = search(mesh, cfg, scfg, model_id=path.stem)
        except NoFeasibleStart as exc:
            res = exc.result
        except (ParseError, TopologyError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            stats[path.name] = {"error": type(exc).__name__}
            continue
        ok += 1
        got = extract_ranked_lists(res.trace, args.label_b)
        lists += got
        stats[path.name] = {"lists": len(got), "J": float(res.best.cost), "cuts": res.best.cuts}
    if files and ok == 0:
        _fail(EXIT_MESH, "ParseError", "no mesh in the corpus could be processed")
    if not lists:
        log.warning("no ranked lists produced; every solid may already be overhang-free")
    write_dataset(lists, out)
    written = [out.name]
    for name, part in zip(("train", "val", "test"), split_by_model(lists)):
        p = out.with_name(f"{out.stem}.{name}.jsonl")
        write_dataset(part, p)
        written.append(p.name)
    _manifest(out.parent, "gen-dataset", args, cfg, scfg, seed, [args.config] if args.config else [],
              written, time.perf_counter() - t0, {"meshes": stats})
    print(json.dumps({"lists": len(lists), "meshes": ok}))
    return EXIT_OK


def cmd_train(args):
    t0 = time.perf_counter()
    seed = _seed(args)
    lists = read_dataset(args.dataset)
    if not lists:
        raise DatasetError("dataset holds no ranked lists")
    if args.val:
        tr, va = lists, read_dataset(args.val)
    else:
        tr, va, _ = split_by_model(lists)
        if not tr:
            tr = lists
    if not va:
        log.warning("no validation lists; validating on the training lists")
        va = tr
    try:
        tc = TrainConfig(learning_rate=args.lr, max_epochs=args.max_epochs,
                         early_stop_patience=min(args.patience, args.max_epochs - 1) if args.max_epochs > 1
                         else args.patience,
                         batch=args.batch, seed=seed, k1=args.k1, k2=args.k2, optimizer=args.optimizer,
                         ranker=args.ranker)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    model, tlog = train(tr, va, tc)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    log_path = out.with_suffix(".log.csv")
    tlog.to_csv(log_path)
    table = ndcg_table(model, va)
    _manifest(out.parent, "train", args, None, None, seed, [args.dataset] + ([args.val] if args.val else []),
              [out.name, log_path.name], time.perf_counter() - t0,
              {"best_epoch": tlog.best_epoch, "val_ndcg": {str(k): v for k, v in table.items()}})
    print(json.dumps({"best_epoch": tlog.best_epoch,
                      "val_ndcg": {f"@{k}": round(v, 6) for k, v in table.items()}}))
    return EXIT_OK


def cmd_evaluate(args):
    t0 = time.perf_counter()
    seed = _seed(args)
    lists = read_dataset(args.dataset)
    if not lists:
        raise DatasetError("dataset holds no ranked lists")
    tables, report = {}, {}
    models = {}
    for w in args.weights:
        name = Path(w).stem
        models[name] = _load_weights(w, "weights")
        try:
            tables[name] = ndcg_table(models[name], lists)
        except DimensionMismatch as exc:
            raise DatasetError(f"{w} does not fit the dataset: {exc}") from None
    tables["random"] = ndcg_table(RandomScorer(seed), lists)
    report["ndcg_at"] = {n: {str(k): v for k, v in t.items()} for n, t in tables.items()}
    if args.analyze:
        r, const = pearson_correlation(np.concatenate([lst.features for lst in lists]))
        report["correlation"] = {"columns": list(NAMES), "matrix": r.tolist(),
                                 "constant_columns": [NAMES[i] for i in np.nonzero(const)[0]]}
        report["importance"] = {
            n: dict(zip(NAMES, permutation_importance(m, lists, args.K, seed).tolist()))
            for n, m in models.items()
        }
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    _dump(report, report_path)
    written = [report_path.name]
    if args.csv:
        write_ndcg_csv(tables, args.csv)
        written.append(Path(args.csv).name)
    _manifest(report_path.parent, "evaluate", args, None, None, seed, [args.dataset] + list(args.weights),
              written, time.perf_counter() - t0)
    for n, t in tables.items():
        print(n, " ".join(f"NDCG@{k}={v:.4f}" for k, v in t.items()))
    return EXIT_OK


def _csv_list(text, cast=str):
    return [cast(x.strip()) for x in text.split(",") if x.strip()]


def cmd_compare(args):
    t0 = time.perf_counter()
    cfg, scfg = _load_configs(args)
    seed = _seed(args)
    try:
        widths = _csv_list(args.widths, int)
    except ValueError:
        raise ConfigError(f"bad --widths {args.widths!r}") from None
    selectors = _csv_list(args.selectors)
    if set(selectors) - {"baseline", "learned"}:
        raise ConfigError(f"unknown selector in {args.selectors!r}")
    model = None
    if "learned" in selectors:
        if not args.model:
            _fail(EXIT_CONFIG, "ConfigError", "--selectors learned requires --model")
        model = _load_weights(args.model, "--model")
    specs = [RunSpec(s, b, model if s == "learned" else None) for s in selectors for b in widths]
    corpus = []
    for path in _mesh_files(args.corpus_dir):
        try:
            corpus.append((path.stem, _load_solid(path, args.keep_position)))
        except (ParseError, TopologyError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
    if not corpus:
        _fail(EXIT_MESH, "ParseError", "no readable mesh in the corpus")
    scfg = replace(scfg, beam_width=1, pool=max([scfg.pool] + widths))
    comp = compare_configurations(corpus, specs, cfg, scfg, repeats=args.repeats)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    comp.write_csv(out / "compare.csv")
    _dump(comp.summary, out / "summary.json")
    comp.write_timing_csv(out / "timing.csv")
    _dump(comp.timing, out / "timing.json")
    inputs = [p for p in (args.config, args.model) if p]
    _manifest(out, "compare", args, cfg, scfg, seed, inputs,
              ["compare.csv", "summary.json", "timing.csv", "timing.json"], time.perf_counter() - t0)
    print(json.dumps({"mean_J": comp.summary["mean_J"]}))
    return EXIT_OK


def cmd_write_corpus(args):
    from .corpus import corpus_config, corpus_search_config, write_corpus

    out = Path(args.out)
    paths = write_corpus(out)
    cfg = corpus_config().to_dict()
    s = corpus_search_config()
    cfg["search"] = {"pool": s.pool, "max_stages": s.max_stages}
    _dump(cfg, out / "config.json")
    print(json.dumps({"meshes": len(paths), "config": str(out / "config.json")}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common(p, search_flags=True):
    p.add_argument("--config", help="JSON print config; an optional 'search' object sets search defaults")
    p.add_argument("--seed", type=int, default=None, help="seed (falls back to $MDP_SEED, then 0)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for candidate evaluation")
    p.add_argument("--direction-samples", type=int, default=None)
    p.add_argument("--plane-step", type=float, default=None, help="candidate plane spacing in mm")
    p.add_argument("--platform-radius", type=float, default=None, help="platform radius in mm")
    p.add_argument("--alpha-max", type=float, default=None, help="self-supporting angle in degrees")
    p.add_argument("--max-stages", type=int, default=None)
    p.add_argument("--keep-position", action="store_true",
                   help="do not re-seat meshes on the platform centre")


def build_parser():
    parser = argparse.ArgumentParser(prog="mdpdecomp", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="decompose one mesh into printable parts")
    p.add_argument("mesh")
    _common(p)
    p.add_argument("--beam", type=int, default=None, help="beam width b")
    p.add_argument("--pool", type=int, default=None, help="pool size B")
    p.add_argument("--selector", choices=("baseline", "learned"), default="baseline")
    p.add_argument("--model", help="weights JSON for the learned selector")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--trace", action="store_true", help="also write the search trace")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("gen-dataset", help="build ranked lists from searches over a corpus")
    p.add_argument("corpus_dir")
    _common(p)
    p.add_argument("--pool", type=int, default=None, help="pool size B, also used as beam width")
    p.add_argument("--label-b", type=int, default=5, help="number of graded positions per list")
    p.add_argument("--out", required=True, help="dataset JSONL path")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="train a scoring model")
    p.add_argument("dataset")
    p.add_argument("--val", help="validation JSONL (default: model-hash split of the dataset)")
    p.add_argument("--ranker", choices=("urank", "ranknet"), default="urank")
    p.add_argument("--k1", type=int, default=100)
    p.add_argument("--k2", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--patience", type=int, default=200)
    p.add_argument("--batch", type=int, default=1, help="lists per optimiser step")
    p.add_argument("--optimizer", choices=("sgd", "momentum", "adam"), default="sgd")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="weights JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="NDCG table and feature analysis")
    p.add_argument("dataset")
    p.add_argument("weights", nargs="+")
    p.add_argument("--report", required=True, help="report JSON path")
    p.add_argument("--csv", help="also write the NDCG table as CSV")
    p.add_argument("--analyze", action="store_true", help="add importance and correlation sections")
    p.add_argument("-K", type=int, default=10, help="permutations per column")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare selectors and beam widths over a corpus")
    p.add_argument("corpus_dir")
    _common(p)
    p.add_argument("--widths", default="1,2,5,10")
    p.add_argument("--selectors", default="baseline")
    p.add_argument("--model", help="weights JSON for the learned selector")
    p.add_argument("--pool", type=int, default=None, help="pool size B")
    p.add_argument("--repeats", type=int, default=3, help="timing runs per search (median)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("write-corpus", help="write the bundled test solids and their config")
    p.add_argument("out")
    p.set_defaults(func=cmd_write_corpus)
    return parser


def _report(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CLIError as exc:
        return _report(exc.code, exc.kind, str(exc))
    except (ParseError, TopologyError) as exc:
        return _report(EXIT_MESH, type(exc).__name__, str(exc))
    except (ConfigError, DatasetError, DimensionMismatch) as exc:
        return _report(EXIT_CONFIG, type(exc).__name__, str(exc))
    except DivergenceError as exc:
        return _report(EXIT_DIVERGED, type(exc).__name__, str(exc))
    except FileNotFoundError as exc:
        return _report(EXIT_CONFIG, "FileNotFoundError", str(exc))


if __name__ == "__main__":
    sys.exit(main())
