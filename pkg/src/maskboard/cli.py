"""Command-line driver for the full pipeline:

    ingest -> cohort/filter -> train -> eval -> classify -> explain ->
    expand -> index -> search -> compare -> serve

Every command operates on a project directory and is re-runnable; outputs
are content-addressed in the project store. Seeds are mandatory wherever
randomness is involved, so reruns are replayable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, artifacts, store
from .backends import BACKENDS
from .classify import classify_corpus, evaluate, expand_dataset, predictions_to_jsonl, train
from .embed import CachedEmbedder, provider_from_spec
from .errors import InvalidInput, MaskboardError, NotFoundError
from .explain import DEFAULT_MIN_INFLUENCE, DEFAULT_TOP_K, explain
from .ingest import CohortConfig, SECONDS_PER_DAY, balance, build_transition_cohort, filter_keyword, load_posts, split
from .report import (
    comparison_table,
    comparison_tsv,
    metrics_tsv,
    render_comparison_figure,
    render_confusion_figure,
)
from .search import build_index, top_matches
from .stats import compare_theme
from .themes import DEFAULT_REVIEW_WINDOW, ReviewLog, add_members, new_theme, theme_query_vector


def _project(args) -> store.Project:
    return store.load(args.project)


def _parse_counts(text: str) -> tuple[int, int]:
    try:
        k, n = text.split("/")
        return int(k), int(n)
    except ValueError as exc:
        raise InvalidInput(f"counts must look like K/N, got {text!r}") from exc


def cmd_init(args) -> int:
    root = Path(args.project)
    if (root / store.MANIFEST).exists():
        print(f"project already initialized at {root}")
        return 0
    store.init(root, name=args.name)
    print(f"initialized project at {root}")
    return 0


def cmd_ingest(args) -> int:
    root = Path(args.project)
    project = store.Project(root) if (root / store.MANIFEST).exists() else store.init(root)
    corpus = load_posts(args.infile, name=args.name)
    digest = artifacts.save_corpus(project, corpus, replace=args.replace)
    print(f"corpus {corpus.name}: {len(corpus)} posts, {corpus.manifest['skipped']} skipped, hash {digest[:12]}")
    return 0


def cmd_cohort(args) -> int:
    project = _project(args)
    corpus = artifacts.load_corpus(project, args.corpus)
    cfg = CohortConfig(
        anxiety_forum=args.anxiety,
        adhd_forum=args.adhd,
        exclusion_window=args.window_days * SECONDS_PER_DAY,
        cutoff_date=args.cutoff if args.cutoff is not None else 2**62,
    )
    dataset = build_transition_cohort(corpus, cfg)
    if args.out:
        dataset = type(dataset)(args.out, dataset.examples, dataset.authors, dataset.manifest)
    artifacts.save_dataset(project, dataset, replace=args.replace)
    pos, neg = dataset.class_counts()
    print(f"dataset {dataset.name}: {len(dataset)} examples ({pos} positive / {neg} negative)")
    return 0


def cmd_filter(args) -> int:
    project = _project(args)
    corpus = artifacts.load_corpus(project, args.corpus)
    result = filter_keyword(corpus, args.keyword)
    if args.out:
        result = type(result)(args.out, result.posts, result.manifest)
    artifacts.save_corpus(project, result, replace=args.replace)
    print(f"corpus {result.name}: kept {len(result)} of {len(corpus)} posts containing {args.keyword!r}")
    return 0


def cmd_split(args) -> int:
    project = _project(args)
    dataset = artifacts.load_dataset(project, args.dataset)
    train_ds, test_ds = split(dataset, args.test_frac, args.seed)
    artifacts.save_dataset(project, train_ds, replace=args.replace)
    artifacts.save_dataset(project, test_ds, replace=args.replace)
    print(f"split {dataset.name}: {len(train_ds)} train / {len(test_ds)} test (seed {args.seed})")
    return 0


def cmd_balance(args) -> int:
    project = _project(args)
    dataset = artifacts.load_dataset(project, args.dataset)
    result = balance(dataset, args.seed)
    if args.out:
        result = type(result)(args.out, result.examples, result.authors, result.manifest)
    artifacts.save_dataset(project, result, replace=args.replace)
    pos, neg = result.class_counts()
    print(f"dataset {result.name}: {pos}/{neg} after balancing (seed {args.seed})")
    return 0


def cmd_train(args) -> int:
    project = _project(args)
    dataset = artifacts.load_dataset(project, args.dataset)
    hyper = json.loads(args.hyper) if args.hyper else None
    classifier = train((args.backend, hyper), dataset, args.seed)
    name = args.out or f"{args.backend}-{args.dataset}"
    artifacts.save_model(project, name, classifier, replace=args.replace)
    print(f"model {name}: backend {args.backend}, trained on {len(dataset)} examples (seed {args.seed})")
    return 0


def cmd_eval(args) -> int:
    project = _project(args)
    classifier = artifacts.load_model(project, args.model)
    dataset = artifacts.load_dataset(project, args.dataset)
    metrics = evaluate(classifier, dataset)
    print(f"accuracy {metrics.accuracy:.4f}")
    print(f"precision {metrics.precision:.4f}")
    print(f"recall {metrics.recall:.4f}")
    print(f"f1 {metrics.f1:.4f}")
    print(f"n {metrics.n}")
    if args.report_dir:
        out = Path(args.report_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.tsv").write_text(metrics_tsv(metrics), encoding="utf-8")
        render_confusion_figure(metrics, out / "confusion.png")
        print(f"report written to {out}")
    return 0


def cmd_classify(args) -> int:
    project = _project(args)
    classifier = artifacts.load_model(project, args.model)
    corpus = artifacts.load_corpus(project, args.corpus)
    rows = classify_corpus(classifier, corpus, threshold=args.threshold)
    text = predictions_to_jsonl(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(rows)} predictions to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_explain(args) -> int:
    project = _project(args)
    classifier = artifacts.load_model(project, args.model)
    corpus = artifacts.load_corpus(project, args.corpus)
    posts = corpus.posts
    if args.positives_only:
        rows = classify_corpus(classifier, corpus, threshold=args.threshold)
        keep = {r["post_id"] for r in rows if r["predicted"] == 1}
        posts = tuple(p for p in posts if p.id in keep)
    explanations = [
        explain(classifier, p.text(), post_id=p.id, k=args.top_k, min_influence=args.min_influence)
        for p in posts
    ]
    name = args.out or f"{args.corpus}.expl"
    policy = explanations[0].policy if explanations else {"k": args.top_k, "min_influence": args.min_influence}
    artifacts.save_explanations(project, name, explanations, args.corpus, args.model, policy, replace=args.replace)
    highlighted = sum(1 for e in explanations if e.highlighted)
    print(f"explanations {name}: {len(explanations)} posts explained, {highlighted} with highlights")
    return 0


def cmd_expand(args) -> int:
    project = _project(args)
    classifier = artifacts.load_model(project, args.model)
    corpus = artifacts.load_corpus(project, args.corpus)
    result = expand_dataset(classifier, corpus, threshold=args.threshold)
    if args.out:
        result = type(result)(args.out, result.posts, result.manifest)
    artifacts.save_corpus(project, result, replace=args.replace)
    print(f"corpus {result.name}: {len(result)} of {len(corpus)} posts kept at threshold {args.threshold}")
    return 0


def cmd_index(args) -> int:
    project = _project(args)
    corpus = artifacts.load_corpus(project, args.corpus)
    provider = provider_from_spec(args.provider, dimension=args.dim)
    embedder = CachedEmbedder(provider, cache_dir=project.cache_dir)
    if args.explanations:
        explanations, _ = artifacts.load_explanations(project, args.explanations)
        index = build_index(embedder, corpus, explanations=explanations)
    else:
        index = build_index(embedder, corpus, all_phrases=True)
    name = args.out or f"{args.corpus}.index"
    artifacts.save_index(project, name, index, replace=args.replace)
    print(f"index {name}: {len(index)} phrases, dim {index.dimension}, provider {index.provider_id} "
          f"({embedder.provider_calls} provider calls)")
    return 0


def cmd_search(args) -> int:
    project = _project(args)
    theme = artifacts.find_theme(project, args.theme)
    index = artifacts.index_for_corpus(project, args.corpus)
    provider = provider_from_spec(index.provider_id, dimension=index.dimension)
    embedder = CachedEmbedder(provider, cache_dir=project.cache_dir)
    query = theme_query_vector(embedder, theme)
    for m in top_matches(index, query, args.n):
        print(f"{m.rank}\t{m.cosine:.4f}\t{m.post_id}\t{m.phrase}")
    return 0


def cmd_compare(args) -> int:
    project = _project(args)
    theme = artifacts.find_theme(project, args.theme)
    if args.counts_a and args.counts_b:
        counts_a = _parse_counts(args.counts_a)
        counts_b = _parse_counts(args.counts_b)
    else:
        log = ReviewLog(project.reviews_path)
        counts_a = log.theme_counts(theme.theme_id, args.a, window=args.window)
        counts_b = log.theme_counts(theme.theme_id, args.b, window=args.window)
    result = compare_theme(theme.name, counts_a, counts_b)
    from .report import _fmt_p, _fmt_z

    sig = "significant" if result.significant(args.alpha) else "not significant"
    print(f"{theme.name}\t{100 * result.p1:.1f}\t{100 * result.p2:.1f}\t"
          f"z={_fmt_z(result.z)}\tp_z={_fmt_p(result.p_z)}\tp_fisher={_fmt_p(result.p_fisher)}\t"
          f"{sig} at alpha={args.alpha:g}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.tsv").write_text(comparison_tsv([result]), encoding="utf-8")
        (out / "report.txt").write_text(comparison_table([result], args.a, args.b, args.alpha), encoding="utf-8")
        render_comparison_figure([result], out / "comparison.png", args.a, args.b, args.alpha)
        print(f"report written to {out}")
    return 0


def cmd_theme(args) -> int:
    project = _project(args)
    if args.create:
        theme = new_theme(args.create, notes=args.notes or "")
        artifacts.save_theme(project, theme)
        print(f"theme {theme.theme_id}: {theme.name}")
        return 0
    if args.add:
        if not args.phrase:
            raise InvalidInput("--add needs at least one --phrase")
        theme = add_members(artifacts.find_theme(project, args.add), args.phrase)
        artifacts.save_theme(project, theme)
        print(f"theme {theme.theme_id}: {len(theme.members)} members")
        return 0
    for theme_id in project.list_entries("themes"):
        theme = artifacts.load_theme(project, theme_id)
        print(f"{theme.theme_id}\t{theme.name}\t{len(theme.members)} members")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    project = _project(args)
    serve(project, bind=args.bind, ui_dir=args.ui, token=args.token)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskboard", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"maskboard {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add(verb, func, help_text):
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("--project", required=True, help="project directory")
        p.set_defaults(func=func)
        return p

    p = add("init", cmd_init, "create an empty project")
    p.add_argument("--name", default=None)

    p = add("ingest", cmd_ingest, "load a newline-delimited JSON post dump")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--replace", action="store_true")

    p = add("cohort", cmd_cohort, "build the anxiety-to-ADHD transition cohort dataset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--anxiety", required=True, help="anxiety forum name")
    p.add_argument("--adhd", required=True, help="ADHD forum name")
    p.add_argument("--window-days", type=int, default=183)
    p.add_argument("--cutoff", type=int, default=None, help="epoch seconds; posts at/after are ignored")
    p.add_argument("--out", default=None)
    p.add_argument("--replace", action="store_true")

    p = add("filter", cmd_filter, "keyword sub-corpus (case-insensitive substring)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--keyword", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--replace", action="store_true")

    p = add("split", cmd_split, "author-grouped train/test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--test-frac", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replace", action="store_true")

    p = add("balance", cmd_balance, "downsample to an exact 50/50 base rate")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--replace", action="store_true")

    p = add("train", cmd_train, "fit a classifier backend")
    p.add_argument("--backend", required=True, choices=sorted(BACKENDS))
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--hyper", default=None, help="hyperparameters as JSON")
    p.add_argument("--out", default=None)
    p.add_argument("--replace", action="store_true")

    p = add("eval", cmd_eval, "accuracy / precision / recall / F1 on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--report-dir", default=None)

    p = add("classify", cmd_classify, "score every post in a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", default=None, help="write predictions here instead of stdout")

    p = add("explain", cmd_explain, "occlusion explanations for a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--top-k", type=int, default=DEFAULT_TOP_K)
    p.add_argument("--min-influence", type=float, default=DEFAULT_MIN_INFLUENCE)
    p.add_argument("--positives-only", action="store_true")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.add_argument("--replace", action="store_true")

    p = add("expand", cmd_expand, "keep posts the classifier flags positive")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.add_argument("--replace", action="store_true")

    p = add("index", cmd_index, "embed phrases into a searchable index")
    p.add_argument("--provider", required=True, help="test, test-<dim>, remote, or remote:<model>")
    p.add_argument("--corpus", required=True)
    p.add_argument("--explanations", default=None, help="index highlighted phrases from this set")
    p.add_argument("--all-phrases", action="store_true")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--replace", action="store_true")

    p = add("search", cmd_search, "top-N cosine matches for a theme")
    p.add_argument("--theme", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--n", type=int, default=DEFAULT_REVIEW_WINDOW)

    p = add("compare", cmd_compare, "two-corpus prevalence comparison for a theme")
    p.add_argument("--theme", required=True)
    p.add_argument("--a", required=True, help="first corpus")
    p.add_argument("--b", required=True, help="second corpus")
    p.add_argument("--window", type=int, default=DEFAULT_REVIEW_WINDOW)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--counts-a", default=None, help="override counts as K/N")
    p.add_argument("--counts-b", default=None, help="override counts as K/N")
    p.add_argument("--out", default=None, help="write TSV + text report + figure here")

    p = add("theme", cmd_theme, "list themes, or create/extend one")
    p.add_argument("--create", default=None, help="create a theme with this name")
    p.add_argument("--notes", default=None)
    p.add_argument("--add", default=None, help="theme id or name to extend")
    p.add_argument("--phrase", action="append", default=[], help="member phrase (repeatable)")

    p = add("serve", cmd_serve, "run the local HTTP workbench service")
    p.add_argument("--bind", default="127.0.0.1:8787")
    p.add_argument("--ui", default=None, help="static UI directory to serve at /")
    p.add_argument("--token", default=None, help="require this bearer token (for non-loopback binds)")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MaskboardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        if os.environ.get("MASKBOARD_DEBUG"):
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
