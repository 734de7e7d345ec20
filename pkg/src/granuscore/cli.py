"""``granuscore`` command line: every pipeline stage as a subcommand.

Settings come from an optional YAML file (``--config``) and are overridden
by flags. Data goes to standard output or the ``--out`` path, logs go to
standard error. Failures print one JSON object on standard error and exit
with status 1; usage errors exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .errors import ConfigurationError, GranuscoreError

logger = logging.getLogger("granuscore")

SUBCOMMANDS = ("build-index", "train", "calibrate", "score", "evaluate-granola", "analyze-qa",
               "analyze-sections", "sweep-aggregations")

DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "embedding": "hit",
    "aggregation": "sent-lqm-0.8-pool-mean",
    "anchors": {"kind": "random_fixed", "k": 999, "bins": 10, "binning": "equal_count"},
    "features": {"include_dist0": True, "radial": "hyperbolic", "dist0_only": False},
    "regressor": {},
    "index": {"size": 50_000, "title_field": "title"},
    "split": {"ratios": [0.8, 0.1, 0.1]},
    "evaluation": {"methods": ["dist0", "word_count", "taxonomy_depth", "model"], "split": "test"},
    "qa": {"folds": 5, "plot": False},
    "paths": {},
}

# flag dest -> dotted config key
FLAG_KEYS = {
    "seed": "seed",
    "jobs": "jobs",
    "embedding": "embedding",
    "aggregation": "aggregation",
    "anchor_kind": "anchors.kind",
    "k": "anchors.k",
    "bins": "anchors.bins",
    "dist0_only": "features.dist0_only",
    "radial": "features.radial",
    "boosting": "regressor.boosting",
    "max_iterations": "regressor.max_iterations",
    "threads": "regressor.num_threads",
    "index_size": "index.size",
    "title_field": "index.title_field",
    "methods": "evaluation.methods",
    "split_name": "evaluation.split",
    "folds": "qa.folds",
    "plot": "qa.plot",
    "entities": "paths.entities",
    "index": "paths.index",
    "granola": "paths.granola",
    "model": "paths.model",
    "splits": "paths.splits",
    "corpus": "paths.calibration_corpus",
    "records": "paths.records",
    "papers": "paths.papers",
    "out": "paths.out",
}


class CLIError(Exception):
    """Validation failure detected before any computation."""


# ------------------------------------------------------------------ config


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _set(cfg: dict, dotted: str, value) -> None:
    *path, last = dotted.split(".")
    node = cfg
    for p in path:
        node = node.setdefault(p, {})
    node[last] = value


def _get(cfg: dict, dotted: str, default=None):
    node = cfg
    for p in dotted.split("."):
        if not isinstance(node, dict) or p not in node:
            return default
        node = node[p]
    return node


def build_config(args: argparse.Namespace) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CLIError(f"config file {path} not found")
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise CLIError(f"config file {path} is not valid YAML: {exc}") from exc
        if not isinstance(loaded, dict):
            raise CLIError(f"config file {path} must hold a mapping at the top level")
        cfg = _merge(cfg, loaded)
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            _set(cfg, key, value)
    seed = cfg.get("seed")
    if not isinstance(seed, int) or seed < 0:
        raise CLIError(f"seed must be a non-negative integer, got {seed!r}")
    if not isinstance(cfg.get("jobs"), int) or cfg["jobs"] < 1:
        raise CLIError("jobs must be a positive integer")
    return cfg


def _require(cfg: dict, *names: str, must_exist: bool = True) -> dict:
    """Resolve ``paths.<name>`` entries, failing fast on missing values or files."""
    out = {}
    for name in names:
        value = _get(cfg, f"paths.{name}")
        if not value:
            raise CLIError(f"missing required path '{name}' (flag or 'paths.{name}' in the config)")
        if must_exist and not Path(value).exists():
            raise CLIError(f"{name} path {value} does not exist")
        out[name] = Path(value)
    return out


def _optional(cfg: dict, name: str) -> Path | None:
    value = _get(cfg, f"paths.{name}")
    if not value:
        return None
    if not Path(value).exists():
        raise CLIError(f"{name} path {value} does not exist")
    return Path(value)


def _out(cfg: dict, required: bool = True) -> Path | None:
    value = _get(cfg, "paths.out")
    if not value:
        if required:
            raise CLIError("missing output path (--out or 'paths.out' in the config)")
        return None
    parent = Path(value).parent
    if not parent.exists():
        raise CLIError(f"output directory {parent} does not exist")
    return Path(value)


def _embedding_spec(cfg: dict) -> str:
    spec = cfg["embedding"]
    if spec.startswith("table:"):
        p = Path(spec[len("table:"):])
        if not p.is_file():
            raise CLIError(f"embedding table {p} does not exist")
    elif spec.endswith(".npz") and not Path(spec).is_file():
        raise CLIError(f"embedding table {spec} does not exist")
    return spec


def _aggregation(cfg: dict):
    from .textproc.aggregate import AggregationSpec

    try:
        return AggregationSpec.parse(cfg["aggregation"])
    except (ConfigurationError, ValueError) as exc:
        raise CLIError(str(exc)) from exc


def _feature_config(cfg: dict):
    from .anchors import AnchorStrategy, FeatureConfig

    a = cfg["anchors"]
    f = cfg["features"]
    try:
        strategy = None
        if not f.get("dist0_only"):
            strategy = AnchorStrategy(a.get("kind", "random_fixed"), int(a.get("k", 999)), cfg["seed"],
                                      int(a.get("bins", 10)), a.get("binning", "equal_count"))
        return FeatureConfig(strategy, bool(f.get("include_dist0", True)), f.get("radial", "hyperbolic"))
    except (ConfigurationError, ValueError, TypeError) as exc:
        raise CLIError(f"invalid anchor/feature settings: {exc}") from exc


def _regressor_config(cfg: dict):
    from .scorer.ensemble import RegressorConfig

    try:
        return RegressorConfig.from_dict({**cfg["regressor"], "seed": cfg["seed"]})
    except (ConfigurationError, TypeError, ValueError) as exc:
        raise CLIError(f"invalid regressor settings: {exc}") from exc


def _header(cfg: dict, command: str) -> dict:
    return {"tool": f"granuscore {__version__}", "command": command, "seed": cfg["seed"]}


def _write_json(obj, path: Path | None) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


# -------------------------------------------------------------- subcommands
# Each ``plan_*`` validates and returns a zero-argument runner.


def plan_build_index(cfg):
    paths = _require(cfg, "entities")
    out = _out(cfg)
    spec = _embedding_spec(cfg)
    size = int(cfg["index"]["size"])
    if size < 1:
        raise CLIError("index size must be positive")

    def run():
        from .anchors import build_index, load_entity_titles
        from .embedding.providers import resolve_provider

        titles = load_entity_titles(paths["entities"], cfg["index"]["title_field"])
        index = build_index(titles, resolve_provider(spec), size, cfg["seed"], source_id=paths["entities"].name)
        index.save(out)
        logger.info("wrote %d anchors to %s (digest %s)", len(index), out, index.digest)
        return {"header": _header(cfg, "build-index"), "anchors": len(index), "digest": index.digest,
                "out": str(out)}

    return run


def _granola_splits(cfg, entries, paths_splits):
    from .datasets import SplitAssignment, split_by_realization

    if paths_splits is not None:
        return SplitAssignment.from_csv(paths_splits, cfg["seed"])
    ratios = tuple(float(x) for x in cfg["split"]["ratios"])
    return split_by_realization(entries, ratios, cfg["seed"])


def plan_train(cfg):
    needs_index = not cfg["features"].get("dist0_only")
    paths = _require(cfg, "granola", *(["index"] if needs_index else []))
    splits_path = _optional(cfg, "splits")
    corpus = _get(cfg, "paths.calibration_corpus")
    if corpus and corpus != "wordnet" and not Path(corpus).is_file():
        raise CLIError(f"calibration corpus {corpus} does not exist")
    out = _out(cfg)
    spec = _embedding_spec(cfg)
    features = _feature_config(cfg)
    regressor = _regressor_config(cfg)
    ratios = cfg["split"]["ratios"]
    if len(ratios) != 3 or any(float(r) < 0 for r in ratios) or abs(sum(map(float, ratios)) - 1) > 1e-9:
        raise CLIError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    calibrate_after = bool(_get(cfg, "calibration.enabled", True))

    def run():
        from .anchors import AnchorIndex
        from .datasets import load_granola
        from .embedding.providers import resolve_provider
        from .pipeline import calibrate, train_granuscore
        from .scorer.model import save_model

        entries = load_granola(paths["granola"])
        assignment = _granola_splits(cfg, entries, splits_path)
        train = assignment.entries(entries, "train")
        dev = assignment.entries(entries, "dev")
        provider = resolve_provider(spec)
        index = AnchorIndex.load(paths["index"]) if needs_index else None
        model, result = train_granuscore(train, dev, provider, index, features, regressor,
                                         metadata={"seed": cfg["seed"], "split_sizes": assignment.sizes()})
        report = None
        if calibrate_after:
            source = None if not corpus or corpus == "wordnet" else corpus
            from .datasets import load_calibration_corpus

            items = load_calibration_corpus(source)
            model, report = calibrate(model, provider, items,
                                      "wordnet-3.0-nouns" if source is None else Path(source).name)
        save_model(model, out)
        split_out = out.with_suffix(".splits.csv")
        assignment.to_csv(split_out)
        return {"header": _header(cfg, "train"), "out": str(out), "splits": str(split_out),
                "split_sizes": assignment.sizes(), "best_iteration": result.best_iteration,
                "dev_rmse": result.dev_rmse, "calibration": report}

    return run


def plan_calibrate(cfg):
    paths = _require(cfg, "model")
    corpus = _get(cfg, "paths.calibration_corpus")
    if corpus and corpus != "wordnet" and not Path(corpus).is_file():
        raise CLIError(f"calibration corpus {corpus} does not exist")
    out = _out(cfg, required=False) or paths["model"]
    embedding = cfg.get("embedding") if cfg.get("_embedding_flag") else None

    def run():
        from .api import provider_for
        from .datasets import load_calibration_corpus
        from .pipeline import calibrate
        from .scorer.model import load_model, save_model

        model = load_model(paths["model"])
        provider = provider_for(model, embedding)
        source = None if not corpus or corpus == "wordnet" else corpus
        items = load_calibration_corpus(source)
        model, report = calibrate(model, provider, items, "wordnet-3.0-nouns" if source is None else Path(source).name)
        save_model(model, out)
        return {"header": _header(cfg, "calibrate"), "out": str(out), "calibration": report}

    return run


def _scorer(cfg, model_path):
    from .api import Granuscore

    embedding = cfg.get("embedding") if cfg.get("_embedding_flag") else None
    return Granuscore.load(model_path, embedding)


def plan_score(cfg, args):
    paths = _require(cfg, "model")
    spec = _aggregation(cfg)
    out = _out(cfg, required=False)
    if args.text is not None and args.input is not None:
        raise CLIError("give either --text or an input file, not both")
    if args.input not in (None, "-") and not Path(args.input).is_file():
        raise CLIError(f"input file {args.input} does not exist")

    def run():
        if args.text is not None:
            texts = [args.text]
        elif args.input not in (None, "-"):
            raw = Path(args.input).read_text(encoding="utf-8")
            texts = [ln for ln in raw.splitlines() if ln.strip()] if args.lines else [raw]
        else:
            raw = sys.stdin.read()
            texts = [ln for ln in raw.splitlines() if ln.strip()] if args.lines else [raw]
        scorer = _scorer(cfg, paths["model"])
        reports = scorer.score_many(texts, spec, jobs=cfg["jobs"])
        docs = [r.to_dict() for r in reports]
        payload = {"header": _header(cfg, "score"), **docs[0]} if len(docs) == 1 else \
            {"header": _header(cfg, "score"), "documents": docs}
        _write_json(payload, out)
        return None

    return run


def plan_evaluate(cfg):
    paths = _require(cfg, "granola")
    methods = list(cfg["evaluation"]["methods"])
    known = {"dist0", "word_count", "taxonomy_depth", "model"}
    unknown = set(methods) - known
    if unknown:
        raise CLIError(f"unknown evaluation method(s) {sorted(unknown)}; choose from {sorted(known)}")
    model_path = _optional(cfg, "model") if "model" in methods else None
    if "model" in methods and model_path is None:
        methods.remove("model")
        logger.warning("no model given; skipping the trained-model row")
    splits_path = _optional(cfg, "splits")
    split_name = cfg["evaluation"]["split"]
    if split_name not in ("train", "dev", "test", "all"):
        raise CLIError(f"unknown split {split_name!r}")
    out = _out(cfg, required=False)
    spec = _embedding_spec(cfg) if "dist0" in methods else None

    def run():
        from .datasets import load_granola
        from .pipeline import dist0_scorer, evaluate_methods, level_means, model_scorer, taxonomy_scorer, \
            word_count_scorer

        entries = load_granola(paths["granola"])
        if split_name != "all":
            entries = _granola_splits(cfg, entries, splits_path).entries(entries, split_name)
        scorers = {}
        gs = None
        for m in methods:
            if m == "dist0":
                from .embedding.providers import resolve_provider

                scorers["dist0"] = dist0_scorer(resolve_provider(spec))
            elif m == "word_count":
                scorers["word_count"] = word_count_scorer()
            elif m == "taxonomy_depth":
                scorers["taxonomy_depth"] = taxonomy_scorer()
            else:
                gs = _scorer(cfg, model_path)
                scorers["model"] = model_scorer(gs.model, gs.provider)
        header = {**_header(cfg, "evaluate-granola"), "split": split_name, "entries": len(entries)}
        table = evaluate_methods(entries, scorers, header)
        result = {"header": header, "rows": table.rows}
        if gs is not None and gs.model.calibration is not None:
            from .pipeline import flatten

            raw = gs.raw(flatten(entries)[0])
            result["level_means"] = {str(k): v for k, v in level_means(entries, raw, gs.model).items()}
        if out is None:
            table.to_csv(sys.stdout)
        else:
            table.to_csv(out)
            _write_json(result, out.with_suffix(".json"))
        return None

    return run


def plan_analyze_qa(cfg):
    paths = _require(cfg, "records", "model")
    out = _out(cfg)
    folds = int(cfg["qa"]["folds"])
    if folds < 2:
        raise CLIError("folds must be at least 2")

    def run():
        from .analysis.qa import (SCATTER_COLUMNS, dataset_scatter, document_scores, gap_auc, granularity_gap,
                                  plot_scatter, qa_outcome_report, score_records, write_csv)
        from .datasets import load_qa_records
        from .errors import DegenerateTestError

        records = load_qa_records(paths["records"])
        scorer = _scorer(cfg, paths["model"])
        scored = score_records(records, document_scores(scorer, _aggregation(cfg), cfg["jobs"]))
        report = qa_outcome_report(scored)
        gaps = granularity_gap(scored)
        summary = {"header": _header(cfg, "analyze-qa"), "records": len(records), "outcomes": report.to_dict()}
        try:
            auc = gap_auc(gaps, [s.record.failed for s in scored], folds, cfg["seed"])
            summary["gap_auc"] = {"mean": auc.mean, "std": auc.std, "folds": list(auc.fold_aucs),
                                  "seed_used": auc.seed_used}
        except DegenerateTestError as exc:
            summary["gap_auc"] = {"error": str(exc)}
        out.mkdir(parents=True, exist_ok=True)
        write_csv(report.to_rows(), out / "outcomes.csv",
                  ["field", "outcome", "mean", "std_across_models", "pooled_mean", "n", "n_models"])
        rows = dataset_scatter(scored)
        write_csv(rows, out / "datasets.csv", SCATTER_COLUMNS)
        write_csv([{"dataset": s.record.dataset_id, "model": s.record.model_id, "outcome": s.record.outcome.value,
                    "question": s.question, "gold": s.gold_answer, "answer": s.model_answer, "gap": s.gap}
                   for s in scored], out / "records.csv")
        if cfg["qa"].get("plot"):
            plot_scatter(rows, out / "datasets.png")
        _write_json(summary, out / "summary.json")
        return None

    return run


def _sections_plan(cfg, sweep: bool):
    paths = _require(cfg, "papers", "model")
    out = _out(cfg)
    spec = _aggregation(cfg)

    def run():
        from .analysis.qa import write_csv
        from .analysis.sections import aggregation_sweep, load_paper_corpus, pairs_to_rows, section_compare
        from .textproc.aggregate import sweep_strategies

        papers = load_paper_corpus(paths["papers"])
        scorer = _scorer(cfg, paths["model"])
        result, pairs = section_compare(papers, scorer, spec, scorer.annotator, cfg["jobs"])
        if sweep:
            rows = aggregation_sweep(pairs, sweep_strategies())
            with open(out, "w", encoding="utf-8", newline="") as fh:
                for k, v in {**_header(cfg, "sweep-aggregations"), "papers": len(pairs)}.items():
                    fh.write(f"# {k}: {v}\n")
            with open(out, "a", encoding="utf-8", newline="") as fh:
                import csv

                w = csv.DictWriter(fh, ["strategy", "ordering_accuracy", "ties", "reverse", "n"],
                                   lineterminator="\n")
                w.writeheader()
                for r in rows:
                    w.writerow({**r, **{k: f"{r[k]:.2f}" for k in ("ordering_accuracy", "ties", "reverse")}})
            return None
        out.mkdir(parents=True, exist_ok=True)
        _write_json({"header": _header(cfg, "analyze-sections"), "papers_in": len(papers), **result.to_dict()},
                    out / "summary.json")
        write_csv(pairs_to_rows(pairs), out / "pairs.csv")
        return None

    return run


# --------------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML configuration file; flags override its values")
    p.add_argument("--seed", type=int, help="root seed for all randomness (default 0)")
    p.add_argument("--jobs", type=int, help="worker threads for annotation and scoring")
    p.add_argument("--embedding", help="embedding backend: hit, minilm, table:PATH, st:PATH, st-ball:PATH")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--dry-run", action="store_true", help="validate the configuration and exit")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="granuscore", description="Reference-free granularity scoring.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("build-index", help="embed a sample of entity titles as the anchor pool")
    _common(p)
    p.add_argument("--entities", help="JSON-lines (or plain lines) file of entity titles")
    p.add_argument("--size", dest="index_size", type=int, help="number of distinct titles to sample")
    p.add_argument("--title-field", help="record field holding the title")

    p = sub.add_parser("train", help="fit the granularity regressor on GRANOLA-EQ")
    _common(p)
    p.add_argument("--granola", help="GRANOLA-EQ file (JSON, JSON lines, CSV or TSV)")
    p.add_argument("--index", help="anchor index built by build-index")
    p.add_argument("--splits", help="reuse an entry-to-split CSV instead of splitting")
    p.add_argument("--anchors", dest="anchor_kind",
                   choices=["nearest_neighbors", "random_fixed", "random_dynamic", "radial_binned"])
    p.add_argument("--k", type=int, help="anchors per query")
    p.add_argument("--bins", type=int, help="radial bins for radial_binned anchors")
    p.add_argument("--dist0-only", action="store_true", default=None, help="use the radial feature alone")
    p.add_argument("--radial", choices=["hyperbolic", "euclidean"])
    p.add_argument("--boosting", choices=["gbdt", "dart"])
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--threads", type=int, help="LightGBM threads (0 = library default)")
    p.add_argument("--corpus", help="calibration strings, one per line (default: WordNet nouns)")

    p = sub.add_parser("calibrate", help="attach a percentile table to a trained model")
    _common(p)
    p.add_argument("--model", help="model archive")
    p.add_argument("--corpus", help="calibration strings, one per line (default: WordNet nouns)")

    p = sub.add_parser("score", help="score text and print the report as JSON")
    _common(p)
    p.add_argument("input", nargs="?", help="text file to score ('-' or omitted: standard input)")
    p.add_argument("--model", help="calibrated model archive")
    p.add_argument("--text", help="inline text to score")
    p.add_argument("--lines", action="store_true", help="treat every non-empty line as its own document")
    p.add_argument("--aggregation", help="aggregation strategy, e.g. sent-lqm-0.8-pool-mean")

    p = sub.add_parser("evaluate-granola", help="ranking metrics on a GRANOLA-EQ split")
    _common(p)
    p.add_argument("--granola", help="GRANOLA-EQ file")
    p.add_argument("--model", help="model archive for the trained-model row")
    p.add_argument("--splits", help="entry-to-split CSV written by train")
    p.add_argument("--split", dest="split_name", choices=["train", "dev", "test", "all"])
    p.add_argument("--methods", nargs="+", help="dist0 word_count taxonomy_depth model")

    p = sub.add_parser("analyze-qa", help="Granuscore by QA outcome, granularity gap and AUC")
    _common(p)
    p.add_argument("--records", help="graded QA records (JSON lines)")
    p.add_argument("--model", help="calibrated model archive")
    p.add_argument("--folds", type=int)
    p.add_argument("--plot", action="store_true", default=None, help="also write a scatter chart")
    p.add_argument("--aggregation")

    for name, text in (("analyze-sections", "Introduction vs Related Work comparison"),
                       ("sweep-aggregations", "section ordering under every aggregation strategy")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--papers", help="paper sections as JSON lines (paper_id, section, paragraphs)")
        p.add_argument("--model", help="calibrated model archive")
        p.add_argument("--aggregation")
    return parser


def _emit_error(exc: BaseException) -> None:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=max(logging.DEBUG, logging.WARNING - 10 * args.verbose), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        cfg["_embedding_flag"] = args.embedding is not None or "embedding" in _config_keys(args)
        planners = {
            "build-index": plan_build_index,
            "train": plan_train,
            "calibrate": plan_calibrate,
            "score": lambda c: plan_score(c, args),
            "evaluate-granola": plan_evaluate,
            "analyze-qa": plan_analyze_qa,
            "analyze-sections": lambda c: _sections_plan(c, sweep=False),
            "sweep-aggregations": lambda c: _sections_plan(c, sweep=True),
        }
        runner = planners[args.command](cfg)
    except (CLIError, GranuscoreError, OSError, ValueError) as exc:
        _emit_error(exc)
        return 1
    if args.dry_run:
        shown = {k: v for k, v in cfg.items() if not k.startswith("_")}
        _write_json({"command": args.command, "valid": True, "config": shown}, None)
        return 0
    try:
        result = runner()
    except (GranuscoreError, OSError, ValueError, RuntimeError) as exc:
        logger.debug("failure", exc_info=True)
        _emit_error(exc)
        return 1
    if result is not None:
        _write_json(result, None)
    return 0


def _config_keys(args) -> set:
    if not args.config:
        return set()
    try:
        loaded = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError):
        return set()
    return set(loaded) if isinstance(loaded, dict) else set()


if __name__ == "__main__":
    sys.exit(main())
