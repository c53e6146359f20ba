"""Command-line pipeline: select, build, eval, merge, sample, gen-jobs,
package, prompt.

Every run writes its outputs under ``--out`` with fixed file names plus a
``manifest.json`` recording the subcommand, flag values, content hashes of
all inputs, and the package version, so identical inputs produce identical
manifests. Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 backend error. No subcommand touches the network unless ``--backend`` is
supplied without ``--replay``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .corpus import build_intent_universe, ingest_jsonl
from .cover import (
    CoverInstance,
    METHOD_GREEDY,
    METHOD_ILP,
    METHOD_LP_ROUNDING,
    lp_round,
    solve_greedy,
    solve_ilp,
)
from .construction import build_flowchart, write_trace_jsonl
from .errors import BackendError, DataError, TofkitError
from .evaluation import (
    classify_by_oracle,
    classify_by_rules,
    coverage,
    per_domain_coverage,
    write_report_json,
)
from .merge import MergeConfig, merge_global, oracle_judge
from .mermaid import load_flowchart, save_flowchart
from .oracles import BackendConfig, Lexicons, DEMO_LEXICONS, RemoteBackend, RuleOracle, backend_suite, rule_suite
from .paths import (
    emit_generation_jobs,
    package_training_samples,
    read_paths_jsonl,
    sample_paths,
    write_jobs_jsonl,
    write_paths_jsonl,
    write_training_jsonl,
)
from .prompting import compose_prompt, load_schemas

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's default 2
        raise _UsageError(message)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace, inputs: list[Path], outputs: list[str]) -> None:
    config = {
        k: v for k, v in sorted(vars(args).items()) if k not in ("func",) and v is not None
    }
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in config.items()}
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": sorted(outputs),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )


def _load_lexicons(path: str | None) -> Lexicons:
    if path is None:
        return DEMO_LEXICONS
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return Lexicons(
        keyword_to_domain=obj.get("keyword_to_domain", {}),
        keyword_to_intent=obj.get("keyword_to_intent", {}),
        intent_to_node_type=obj.get("intent_to_node_type", {}),
        verbs=frozenset(obj.get("verbs", [])),
    )


def _make_backend(args: argparse.Namespace) -> RemoteBackend | None:
    if getattr(args, "backend", None) is None:
        return None
    cfg = BackendConfig.from_json_file(args.backend)
    return RemoteBackend(
        cfg,
        record_path=getattr(args, "record", None),
        replay_path=getattr(args, "replay", None),
    )


def _auto_match_lexicon(chart) -> dict[str, str]:
    """Keyword -> node id mapping derived from node labels: each label token
    points at the lowest node id whose label contains it."""
    from .evaluation import tokenize

    lexicon: dict[str, str] = {}
    for nid in sorted(chart.nodes):
        for token in sorted(tokenize(chart.nodes[nid].label)):
            lexicon.setdefault(token, nid)
    return lexicon


def _cmd_select(args: argparse.Namespace) -> int:
    corpus = ingest_jsonl(args.corpus)
    universe = build_intent_universe(corpus)
    inst = CoverInstance.from_universe(universe, corpus=corpus, weighted=args.weighted)
    if args.method == METHOD_GREEDY:
        solution = solve_greedy(inst)
    elif args.method == METHOD_ILP:
        solution = solve_ilp(inst)
    else:
        solution = lp_round(inst, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "solution.json").write_text(
        json.dumps(solution.to_json_obj(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
        newline="\n",
    )
    _write_manifest(out, "select", args, [Path(args.corpus)], ["solution.json"])
    print(
        f"{solution.method}: {len(solution.selected)} dialogues, "
        f"cost {solution.total_cost:g}, universe {solution.universe_size}"
    )
    return EXIT_OK


def _cmd_build(args: argparse.Namespace) -> int:
    corpus = ingest_jsonl(args.corpus)
    backend = _make_backend(args)
    if backend is not None:
        suite = backend_suite(backend)
    else:
        suite = rule_suite(_load_lexicons(args.lexicons))
    chart, trace = build_flowchart(list(corpus), suite, name=args.name)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_flowchart(chart, out / "chart.mmd", out / "chart.sidecar.json")
    write_trace_jsonl(trace, out / "trace.jsonl")
    inputs = [Path(args.corpus)] + ([Path(args.lexicons)] if args.lexicons else [])
    _write_manifest(out, "build", args, inputs, ["chart.mmd", "chart.sidecar.json", "trace.jsonl"])
    print(
        f"built {len(chart.nodes)} nodes / {len(chart.edges)} edges from "
        f"{len(corpus)} dialogues ({trace.oracle_calls} oracle calls)"
    )
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    chart = load_flowchart(args.chart)
    corpus = ingest_jsonl(args.corpus)
    dialogues = list(corpus)
    backend = _make_backend(args)
    if args.classifier == "oracle":
        if backend is None:
            raise _UsageError("--classifier oracle requires --backend (or --replay)")
        assignments = [
            classify_by_oracle(chart, d, backend, speakers=args.speakers) for d in dialogues
        ]
    else:
        if args.match_lexicon:
            lexicon = json.loads(Path(args.match_lexicon).read_text(encoding="utf-8"))
        else:
            lexicon = _auto_match_lexicon(chart)
        assignments = [
            classify_by_rules(chart, d, lexicon, speakers=args.speakers) for d in dialogues
        ]
    report = coverage(chart, dialogues, assignments, relaxed=args.relaxed, speakers=args.speakers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(report, out / "report.json")
    inputs = [Path(args.chart), Path(args.corpus)]
    if args.match_lexicon:
        inputs.append(Path(args.match_lexicon))
    _write_manifest(out, "eval", args, inputs, ["report.json"])

    per_domain = per_domain_coverage(
        chart, dialogues, assignments, relaxed=args.relaxed, speakers=args.speakers
    )
    print(f"{'domain':<16}{'CPC':>8}{'UMR':>8}{'n':>6}")
    for domain, rep in per_domain.items():
        print(f"{domain:<16}{rep.cpc:>8.2f}{rep.umr_avg:>8.4f}{len(rep.umr_per_dialogue):>6}")
    print(f"{'overall':<16}{report.cpc:>8.2f}{report.umr_avg:>8.4f}{len(dialogues):>6}")
    return EXIT_OK


def _cmd_merge(args: argparse.Namespace) -> int:
    charts = [load_flowchart(p) for p in args.charts]
    backend = _make_backend(args)
    config = MergeConfig(
        cluster_threshold=args.threshold,
        coherence_threshold=args.coherence,
        judge=oracle_judge(backend) if backend is not None else None,
    )
    result = merge_global(charts, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_flowchart(result.chart, out / "chart.mmd", out / "chart.sidecar.json")
    result.write_report(out / "report.json")
    _write_manifest(
        out, "merge", args, [Path(p) for p in args.charts],
        ["chart.mmd", "chart.sidecar.json", "report.json"],
    )
    print(
        f"merged {len(charts)} charts -> {len(result.chart.nodes)} nodes / "
        f"{len(result.chart.edges)} edges"
    )
    return EXIT_OK


def _cmd_sample(args: argparse.Namespace) -> int:
    chart = load_flowchart(args.chart)
    picked = sample_paths(
        chart,
        count=args.count,
        seed=args.seed,
        max_len=args.max_len,
        revisit_budget=args.revisit,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_paths_jsonl(picked, out / "paths.jsonl")
    _write_manifest(out, "sample", args, [Path(args.chart)], ["paths.jsonl"])
    print(f"sampled {len(picked)} paths (revisit budget {args.revisit})")
    return EXIT_OK


def _cmd_gen_jobs(args: argparse.Namespace) -> int:
    chart = load_flowchart(args.chart)
    paths = read_paths_jsonl(args.paths)
    jobs = emit_generation_jobs(paths, chart)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jobs_jsonl(jobs, out / "jobs.jsonl")
    _write_manifest(out, "gen-jobs", args, [Path(args.chart), Path(args.paths)], ["jobs.jsonl"])
    print(f"emitted {len(jobs)} generation jobs")
    return EXIT_OK


def _cmd_package(args: argparse.Namespace) -> int:
    chart = load_flowchart(args.chart)
    corpus = ingest_jsonl(args.dialogues)
    samples = package_training_samples(list(corpus), chart)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_training_jsonl(samples, out / "train.jsonl")
    _write_manifest(
        out, "package", args, [Path(args.chart), Path(args.dialogues)], ["train.jsonl"]
    )
    print(f"packaged {len(samples)} training samples from {len(corpus)} dialogues")
    return EXIT_OK


def _cmd_prompt(args: argparse.Namespace) -> int:
    charts = [load_flowchart(p) for p in args.charts]
    schemas = load_schemas(args.schemas) if args.schemas else {}
    if args.nl_file:
        nl = Path(args.nl_file).read_text(encoding="utf-8")
    else:
        nl = args.nl
    bundle = compose_prompt(nl, charts, schemas, tracking_on=args.tracking)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "prompt.txt").write_text(bundle.rendered, encoding="utf-8", newline="\n")
    inputs = [Path(p) for p in args.charts]
    if args.schemas:
        inputs.append(Path(args.schemas))
    if args.nl_file:
        inputs.append(Path(args.nl_file))
    _write_manifest(out, "prompt", args, inputs, ["prompt.txt"])
    print(f"composed prompt with {len(charts)} charts ({len(bundle.rendered)} chars)")
    return EXIT_OK


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", help="backend config JSON (base_url, model, ...)")
    p.add_argument("--replay", help="replay transcript JSONL; no network is touched")
    p.add_argument("--record", help="record live responses to this transcript JSONL")


def build_parser() -> _Parser:
    parser = _Parser(prog="tofkit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="pick a minimal-cost dialogue subset covering all intents")
    p.add_argument("--corpus", required=True)
    p.add_argument("--method", choices=[METHOD_GREEDY, METHOD_ILP, METHOD_LP_ROUNDING], default=METHOD_GREEDY)
    p.add_argument("--weighted", action="store_true", help="cost = utterance count instead of 1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("build", help="construct a flowchart from dialogues")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicons", help="rule-oracle lexicon JSON (default: built-in demo lexicons)")
    p.add_argument("--name", default="flowchart")
    p.add_argument("--out", required=True)
    _add_backend_flags(p)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("eval", help="score UMR/CPC of a corpus against a chart")
    p.add_argument("--chart", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--relaxed", action="store_true")
    p.add_argument("--classifier", choices=["rules", "oracle"], default="rules")
    p.add_argument("--match-lexicon", help="keyword->node-id JSON for the rules classifier")
    p.add_argument("--speakers", choices=["both", "customer", "agent"], default="both")
    p.add_argument("--out", required=True)
    _add_backend_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("merge", help="merge local charts into a global chart")
    p.add_argument("--charts", nargs="+", required=True)
    p.add_argument("--threshold", type=float, default=0.5, help="clustering similarity cut")
    p.add_argument("--coherence", type=float, default=0.6, help="rule-judge minimum similarity")
    p.add_argument("--out", required=True)
    _add_backend_flags(p)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("sample", help="sample valid start-to-end paths")
    p.add_argument("--chart", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--revisit", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("gen-jobs", help="render dialogue-generation jobs from sampled paths")
    p.add_argument("--paths", required=True)
    p.add_argument("--chart", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_jobs)

    p = sub.add_parser("package", help="package generated dialogues into training samples")
    p.add_argument("--dialogues", required=True)
    p.add_argument("--chart", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_package)

    p = sub.add_parser("prompt", help="compose a flowchart-augmented prompt")
    p.add_argument("--charts", nargs="+", required=True)
    p.add_argument("--schemas", help="schema registry JSON")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--nl", default="You are a customer service agent.", help="global task description text")
    group.add_argument("--nl-file", help="file with the global task description")
    p.add_argument("--tracking", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_prompt)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, TofkitError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
