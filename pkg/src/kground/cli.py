"""Command-line surface: ingest, build, mix, sample, eval, stats.

Every command is deterministic given its config and seed. Exit codes:
0 success, 1 input error (bad files, bad config, misalignment), 2 pipeline
or provider error.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from collections import Counter

from . import adapters, corpus as corpus_mod, metrics as metrics_mod, report as report_mod
from .cascade import CascadeConfig
from .core import FormatError, KnowledgeStore, ProviderError
from .providers import EmbeddingCache, lexical_provider, remote_provider, vector_file_provider

DEFAULT_CONFIG = {
    "store": None,
    "store_format": "tsv",
    "dialogues": None,
    "output": None,
    "keywords": None,
    "profanity": None,
    "provider": "lexical",
    "remote": {"timeout": 5.0, "max_retries": 3},
    "mode": "cascade",
    "max_len": 512,
    "seed": 0,
    "threads": 1,
    "cascade": CascadeConfig().to_dict(),
}


class ConfigError(ValueError):
    pass


def load_config(path) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return cfg
    with open(path, "r", encoding="utf-8") as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = set(user) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys: {', '.join(sorted(unknown))}")
    for key, value in user.items():
        if key in ("cascade", "remote") and isinstance(value, dict):
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = value
    return cfg


def _apply_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    direct = {
        "store": "store",
        "dialogues": "dialogues",
        "output": "output",
        "provider": "provider",
        "mode": "mode",
        "max_len": "max_len",
        "seed": "seed",
        "threads": "threads",
        "keywords": "keywords",
        "profanity": "profanity",
        "store_format": "store_format",
    }
    for attr, key in direct.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg[key] = value
    cascade_overrides = {
        "retrieve_cap": "retrieve_cap",
        "stat_keep": "stat_keep",
        "threshold": "sem_threshold",
        "final_k": "final_k",
        "passage_k": "passage_k",
    }
    for attr, key in cascade_overrides.items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg["cascade"][key] = value
    return cfg


def make_provider(cfg: dict):
    spec = cfg["provider"]
    if not isinstance(spec, str):
        raise ConfigError("provider must be a string")
    if spec == "lexical":
        return lexical_provider()
    if spec.startswith("vectors:"):
        path = spec[len("vectors:") :]
        _require_file(path, "vector file")
        return vector_file_provider(path)
    if spec.startswith("remote:"):
        url = spec[len("remote:") :]
        remote = cfg.get("remote", {})
        return remote_provider(
            url,
            EmbeddingCache(),
            timeout=float(remote.get("timeout", 5.0)),
            max_retries=int(remote.get("max_retries", 3)),
        )
    raise ConfigError(
        f"unknown provider {spec!r}; expected lexical, vectors:<path>, or remote:<url>"
    )


def _require_file(path, what: str) -> None:
    if path is None:
        raise ConfigError(f"no {what} configured")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def _write_meta(output_path, command: str, cfg: dict, extra: dict) -> None:
    meta = {"command": command, "config": cfg}
    meta.update(extra)
    _write_json(f"{output_path}.meta.json", meta)


def _emit(args, obj: dict, text_lines) -> None:
    if args.json:
        print(json.dumps(obj, sort_keys=True, ensure_ascii=False))
    else:
        for line in text_lines:
            print(line)


def cmd_ingest(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    triples = []
    for path in args.files:
        _require_file(path, "triple dump")
        store = adapters.load_triple_dump(path, fmt=args.format)
        triples.extend(store.triples)
    if cfg["profanity"]:
        _require_file(cfg["profanity"], "profanity wordlist")
        triples = adapters.filter_profanity(triples, adapters.load_wordlist(cfg["profanity"]))
    merged = KnowledgeStore.build(triples)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for t in merged.triples:
            fh.write(f"{t.subject}\t{t.relation}\t{t.object}\n")
    summary = {
        "files": list(args.files),
        "triples": len(merged),
        "entities": len(merged.entity_index),
        "out": args.out,
    }
    _write_meta(args.out, "ingest", cfg, summary)
    _emit(args, summary, [f"triples: {len(merged)}", f"entities: {len(merged.entity_index)}"])
    return 0


def _histogram(values) -> dict:
    counts = Counter(values)
    return {str(k): counts[k] for k in sorted(counts)}


def cmd_build(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if cfg["output"] is None:
        raise ConfigError("no output path configured")
    _require_file(cfg["dialogues"], "dialogues file")
    dialogues = adapters.load_dialogues(cfg["dialogues"])
    cascade_cfg = CascadeConfig.from_dict(cfg["cascade"])

    store = None
    provider = None
    if cfg["mode"] == "cascade":
        if float(cfg["cascade"].get("sem_threshold", 0.35)) == 0.35:
            # the stock threshold was calibrated against the original semantic
            # ranking model; other providers score on different scales
            print(
                f"warning: sem_threshold 0.35 is calibrated for the original "
                f"semantic ranking model; provider {cfg['provider']!r} may need "
                f"a recalibrated threshold",
                file=sys.stderr,
            )
        _require_file(cfg["store"], "triple store")
        store = adapters.load_triple_dump(cfg["store"], fmt=cfg["store_format"])
        if cfg["keywords"]:
            _require_file(cfg["keywords"], "keyword source")
            store = store.merged_with(adapters.load_keyword_file(cfg["keywords"]))
        if cfg["profanity"]:
            _require_file(cfg["profanity"], "profanity wordlist")
            wordlist = adapters.load_wordlist(cfg["profanity"])
            store = KnowledgeStore.build(adapters.filter_profanity(store.triples, wordlist))
        provider = make_provider(cfg)

    examples, audits = corpus_mod.build_corpus_audited(
        dialogues,
        store,
        provider,
        cascade_cfg,
        cfg["mode"],
        max_len=int(cfg["max_len"]),
        threads=int(cfg["threads"]),
    )
    corpus_mod.emit_corpus(examples, cfg["output"])

    grounded = sum(1 for a in audits if a.grounded)
    audit_report = {
        "command": "build",
        "config": cfg,
        "dialogues": len(dialogues),
        "responder_turns": sum(
            1 for d in dialogues for t in d.turns if t.speaker == "responder"
        ),
        "examples": len(examples),
        "grounded": grounded,
        "abandoned": len(audits) - grounded,
        "stage_histograms": {
            "retrieved": _histogram(a.counts[0] for a in audits),
            "kept": _histogram(a.counts[1] for a in audits),
            "selected": _histogram(a.counts[2] for a in audits),
        },
    }
    _write_json(f"{cfg['output']}.audit.json", audit_report)
    if args.figures:
        report_mod.render_audit_figure(
            audit_report["stage_histograms"], f"{cfg['output']}.audit.png"
        )
    _emit(
        args,
        {k: audit_report[k] for k in ("examples", "grounded", "abandoned")},
        [
            f"examples: {len(examples)}",
            f"grounded: {grounded}",
            f"abandoned: {len(audits) - grounded}",
        ],
    )
    return 0


def cmd_mix(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    _require_file(args.golden, "golden corpus")
    _require_file(args.retrieved, "retrieved corpus")
    golden = corpus_mod.load_corpus(args.golden)
    retrieved = corpus_mod.load_corpus(args.retrieved)
    try:
        percents = [int(p) for p in args.percents.split(",") if p.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad percents list {args.percents!r}") from exc
    os.makedirs(args.out_dir, exist_ok=True)
    written = []
    for percent in percents:
        mixed = corpus_mod.mix_knowledge(
            golden, retrieved, corpus_mod.MixSpec(golden_percent=percent, seed=args.seed)
        )
        out_path = os.path.join(args.out_dir, f"mix_p{percent:03d}.jsonl")
        corpus_mod.emit_corpus(mixed, out_path)
        _write_meta(out_path, "mix", cfg, {"golden_percent": percent, "seed": args.seed})
        written.append(out_path)
    _emit(args, {"files": written, "seed": args.seed}, written)
    return 0


def cmd_sample(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    _require_file(args.dialogues, "dialogues file")
    dialogues = adapters.load_dialogues(args.dialogues)
    sampled = corpus_mod.sample_few_shot(dialogues, args.n, args.seed)
    adapters.emit_dialogues(sampled, args.out)
    _write_meta(args.out, "sample", cfg, {"n": args.n, "seed": args.seed, "out": args.out})
    _emit(
        args,
        {"sampled": len(sampled), "out": args.out, "seed": args.seed},
        [f"sampled: {len(sampled)}"],
    )
    return 0


def cmd_eval(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    _require_file(args.pred, "prediction file")
    _require_file(args.ref, "reference file")
    if args.dialogues is not None:
        _require_file(args.dialogues, "dialogues file")
    rep = metrics_mod.evaluate_file(
        args.pred, args.ref, dialogues_path=args.dialogues, smooth_bleu=args.smooth_bleu
    )
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_json(os.path.join(args.out_dir, "report.json"), rep.to_dict())
        report_mod.write_tsv(rep, os.path.join(args.out_dir, "report.tsv"))
        report_mod.render_metrics_figure(rep, os.path.join(args.out_dir, "metrics.png"))
        _write_meta(os.path.join(args.out_dir, "report.json"), "eval", cfg, {})
    _emit(args, rep.to_dict(), [report_mod.render_table(rep)])
    return 0


def cmd_stats(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    _require_file(cfg["dialogues"], "dialogues file")
    _require_file(cfg["store"], "triple store")
    dialogues = adapters.load_dialogues(cfg["dialogues"])
    store = adapters.load_triple_dump(cfg["store"], fmt=cfg["store_format"])
    coverage = corpus_mod.coverage_stats(dialogues, store)
    _emit(
        args,
        {"coverage_percent": coverage, "subjects": len({t.subject for t in store.triples})},
        [f"coverage_percent: {coverage:.4f}"],
    )
    return 0


def _common_flags(parser: argparse.ArgumentParser, need_seed: bool = False) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument(
        "--seed", type=int, required=need_seed, help="random seed"
        + (" (required)" if need_seed else ""),
    )
    parser.add_argument("--json", action="store_true", help="machine-readable JSON output")
    parser.add_argument("--threads", type=int, help="worker threads for the build stage")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kground",
        description="Homogenize knowledge sources, attach triples to dialogue turns, "
        "emit seq2seq corpora, and score generations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load triple dumps into a merged store")
    _common_flags(p)
    p.add_argument("files", nargs="+", help="triple dump files")
    p.add_argument("--format", choices=adapters.TRIPLE_FORMATS, default="tsv")
    p.add_argument("--out", required=True, help="output store path (TSV)")
    p.add_argument("--profanity", help="wordlist of blocked tokens")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("build", help="run the cascade and emit a training corpus")
    _common_flags(p)
    p.add_argument("--store", help="triple store path")
    p.add_argument("--store-format", dest="store_format", choices=adapters.TRIPLE_FORMATS)
    p.add_argument("--dialogues", help="dialogue JSON-lines path")
    p.add_argument("--output", help="corpus output path")
    p.add_argument("--provider", help="lexical | vectors:<path> | remote:<url>")
    p.add_argument("--mode", choices=corpus_mod.BUILD_MODES)
    p.add_argument("--max-len", dest="max_len", type=int)
    p.add_argument("--keywords", help="keyword source JSON-lines merged into the store")
    p.add_argument("--profanity", help="wordlist applied to the store")
    p.add_argument("--retrieve-cap", dest="retrieve_cap", type=int)
    p.add_argument("--stat-keep", dest="stat_keep", type=int)
    p.add_argument("--threshold", dest="threshold", type=float)
    p.add_argument("--final-k", dest="final_k", type=int)
    p.add_argument("--figures", action="store_true", help="render audit histogram figure")
    p.set_defaults(handler=cmd_build)

    p = sub.add_parser("mix", help="blend golden and retrieved corpora at given percents")
    _common_flags(p, need_seed=True)
    p.add_argument("--golden", required=True)
    p.add_argument("--retrieved", required=True)
    p.add_argument("--percents", required=True, help="comma-separated, e.g. 0,20,40,60,80,100")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(handler=cmd_mix)

    p = sub.add_parser("sample", help="seeded few-shot sample with distinct topics")
    _common_flags(p, need_seed=True)
    p.add_argument("--dialogues", required=True)
    p.add_argument("-n", type=int, required=True, help="number of dialogues")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("eval", help="score predictions against references")
    _common_flags(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--dialogues", help="dialogues file supplying golden items for Rec")
    p.add_argument("--smooth-bleu", dest="smooth_bleu", action="store_true")
    p.add_argument(
        "--out-dir",
        dest="out_dir",
        help="write report.json, report.tsv, and metrics.png here",
    )
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("stats", help="topic coverage of a store by a dialogue corpus")
    _common_flags(p)
    p.add_argument("--dialogues", help="dialogue JSON-lines path")
    p.add_argument("--store", help="triple store path")
    p.add_argument("--store-format", dest="store_format", choices=adapters.TRIPLE_FORMATS)
    p.set_defaults(handler=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ProviderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ConfigError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
