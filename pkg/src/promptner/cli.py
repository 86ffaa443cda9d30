"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 runtime failure. All randomized
subcommands take --seed; config-driven ones accept a JSON config file plus
dotted-key overrides (``--set model.d_model=64``).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import AppConfig, ConfigError, load_app_config
from .corpus import CorpusError, load_conll, load_jsonl, write_jsonl
from .evalkit import report_table, write_report_json
from .harness import (
    ExperimentPlan,
    resolve_registry,
    run_adapt_step_ablation,
    run_joint_vs_single,
    run_pilot,
    run_prompt_ablation,
)
from .model import load_checkpoint, model_from_checkpoint, save_checkpoint
from .pipeline import RequestError, run_ner
from .prompting import PromptStrategy
from .schema import RegistryError
from .synth import DEFAULT_SIZES, default_corpora
from .training import EvalSettings, evaluate_ner, train_ner, train_prefix_lm


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        raise UsageError(message)


def _write_loss_csv(path: Path, trace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        for step, loss in trace:
            writer.writerow([step, repr(float(loss))])


def _build_parser() -> _Parser:
    parser = _Parser(prog="promptner", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted-key config override")
        p.add_argument("--seed", type=int, help="override config seed")

    p = sub.add_parser("synth", help="generate the bundled synthetic corpora as JSONL")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--sizes", help="e.g. synth_news=304,synth_shop=304,synth_work=72")

    p = sub.add_parser("ingest", help="convert a CoNLL/JSONL corpus to validated JSONL")
    p.add_argument("--format", choices=("conll", "jsonl"), required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--registry", default="bundled:main")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--joiner", choices=("none", "space"), default="none",
                   help="token joiner for CoNLL input")
    p.add_argument("--strict", action="store_true")

    p = sub.add_parser("adapt", help="prefix language modelling adaptation")
    add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--eval-every", type=int)

    p = sub.add_parser("train", help="NER fine-tuning (joint or single-corpus)")
    add_config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--init-from", help="warm-start from an adaptation checkpoint")

    p = sub.add_parser("eval", help="score a checkpoint on a corpus split")
    add_config_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--split", choices=("dev", "test"), default="test")
    p.add_argument("--beam", type=int)
    p.add_argument("--out", help="write report JSON here")

    p = sub.add_parser("pilot", help="adaptation-benefit pilot study")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", help="ablation studies")
    p.add_argument("--which", choices=("prompts", "adapt-steps", "joint-vs-single"),
                   required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--candidate-steps", help="comma list, for adapt-steps")

    p = sub.add_parser("predict", help="on-demand extraction from one text")
    p.add_argument("--model", help="checkpoint path (local mode)")
    p.add_argument("--server", help="base URL of a running service (client mode)")
    p.add_argument("--registry", default="bundled:synth")
    p.add_argument("--text", required=True)
    p.add_argument("--types", required=True, help="comma-separated entity ids")
    p.add_argument("--mode", choices=("greedy", "beam"), default="beam")
    p.add_argument("--width", type=int, default=10)
    p.add_argument("--json", action="store_true", help="print the full response")

    p = sub.add_parser("serve", help="run the HTTP service")
    add_config_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    return parser


def _config(args) -> AppConfig:
    overrides = list(args.overrides or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return load_app_config(args.config, overrides)


def _cmd_synth(args) -> int:
    sizes = dict(DEFAULT_SIZES)
    if args.sizes:
        for part in args.sizes.split(","):
            name, _, value = part.partition("=")
            sizes[name.strip()] = int(value)
    corpora = default_corpora(sizes, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for ds, cs in sorted(corpora.items()):
        for part in ("train", "dev", "test"):
            write_jsonl(getattr(cs, part), out / f"{ds}.{part}.jsonl")
        print(f"{ds}: train={len(cs.train)} dev={len(cs.dev)} test={len(cs.test)}")
    return 0


def _cmd_ingest(args) -> int:
    registry = resolve_registry(args.registry)
    if args.format == "conll":
        joiner = "" if args.joiner == "none" else " "
        sentences = load_conll(args.input, args.dataset, registry,
                               joiner=joiner, strict=args.strict)
    else:
        sentences = load_jsonl(args.input, args.dataset, registry, strict=args.strict)
    write_jsonl(sentences, args.output)
    n_mentions = sum(len(s.mentions) for s in sentences)
    print(f"wrote {len(sentences)} sentences ({n_mentions} mentions) to {args.output}")
    return 0


def _cmd_adapt(args) -> int:
    cfg = _config(args)
    registry = cfg.load_registry()
    corpora = cfg.load_corpora(registry)
    steps = args.steps or cfg.steps
    outcome = train_prefix_lm(
        corpora,
        registry,
        cfg.model_config(),
        cfg.optimizer_config(steps),
        seed=cfg.seed,
        steps=steps,
        eval_every=args.eval_every or cfg.eval_every,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .model import Seq2Seq

    model = Seq2Seq(cfg.model_config(), outcome.vocab, params=outcome.params)
    save_checkpoint(model, out / "adapt.ckpt", global_step=outcome.selected_step)
    outcome.trace.write_csv(out / "adapt_trace.csv")
    _write_loss_csv(out / "adapt_loss_trace.csv", outcome.loss_trace)
    print(f"selected adaptation step {outcome.selected_step}; wrote {out / 'adapt.ckpt'}")
    return 0


def _cmd_train(args) -> int:
    cfg = _config(args)
    registry = cfg.load_registry()
    corpora = cfg.load_corpora(registry)
    vocab = None
    init_params = None
    if args.init_from:
        ckpt = load_checkpoint(args.init_from)
        vocab = ckpt.vocab
        init_params = ckpt.params
    outcome = train_ner(
        corpora,
        registry,
        cfg.model_config(),
        cfg.optimizer_config(cfg.steps),
        PromptStrategy.from_name(cfg.prompt_strategy, cfg.k_max),
        seed=cfg.seed,
        steps=cfg.steps,
        eval_every=cfg.eval_every,
        policy_kind=cfg.sampler_policy,
        vocab=vocab,
        init_params=init_params,
        eval_settings=EvalSettings(beam_width=cfg.eval_beam, max_len=cfg.eval_max_len),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(outcome.model, out / "model.ckpt", global_step=outcome.selected_step)
    _write_loss_csv(out / "loss_trace.csv", outcome.loss_trace)
    outcome.trace.write_csv(out / "joint_trace.csv")
    write_report_json(
        out / "dev_report.json",
        {ds: r.to_dict() for ds, r in outcome.reports.items()},
    )
    mean_f1 = sum(r.macro_f1 for r in outcome.reports.values()) / len(outcome.reports)
    print(
        f"selected step {outcome.selected_step} (mean dev macro F1 {mean_f1:.4f}); "
        f"wrote {out / 'model.ckpt'}"
    )
    return 0


def _cmd_eval(args) -> int:
    cfg = _config(args)
    registry = cfg.load_registry()
    corpora = cfg.load_corpora(registry)
    ckpt = load_checkpoint(args.model)
    model = model_from_checkpoint(ckpt)
    beam = args.beam or cfg.test_beam
    sentences = {ds: getattr(cs, args.split) for ds, cs in corpora.items()}
    reports = evaluate_ner(
        model,
        registry,
        sentences,
        EvalSettings(beam_width=beam, max_len=cfg.eval_max_len),
    )
    table = report_table({f"{args.split} (beam {beam})": reports})
    print(table)
    if args.out:
        write_report_json(args.out, {ds: r.to_dict() for ds, r in reports.items()})
    return 0


def _cmd_pilot(args) -> int:
    plan = ExperimentPlan.from_json(args.plan)
    results = run_pilot(plan, args.out)
    print((Path(args.out) / "table.txt").read_text(encoding="utf-8"))
    med = results["medians"]
    print(f"adapted - scratch = {med['adapted_mean_f1'] - med['scratch_mean_f1']:+.4f}")
    return 0


def _cmd_ablate(args) -> int:
    plan = ExperimentPlan.from_json(args.plan)
    if args.which == "prompts":
        run_prompt_ablation(plan, args.out)
    elif args.which == "joint-vs-single":
        run_joint_vs_single(plan, args.out)
    else:
        if not args.candidate_steps:
            raise UsageError("--candidate-steps is required for adapt-steps")
        candidates = [int(x) for x in args.candidate_steps.split(",")]
        run_adapt_step_ablation(plan, candidates, args.out)
    print((Path(args.out) / "table.txt").read_text(encoding="utf-8"))
    return 0


def _cmd_predict(args) -> int:
    types = [t.strip() for t in args.types.split(",") if t.strip()]
    if args.server:
        import httpx

        resp = httpx.post(
            args.server.rstrip("/") + "/api/ner",
            json={
                "text": args.text,
                "entity_types": types,
                "decode_mode": args.mode,
                "beam_width": args.width,
            },
            timeout=60.0,
        )
        if resp.status_code != 200:
            print(f"server error {resp.status_code}: {resp.text}", file=sys.stderr)
            return 2
        body = resp.json()
        print(json.dumps(body, ensure_ascii=False, indent=2) if args.json
              else body["raw_target"])
        return 0
    if not args.model:
        raise UsageError("predict needs --model or --server")
    ckpt = load_checkpoint(args.model)
    model = model_from_checkpoint(ckpt)
    registry = resolve_registry(args.registry)
    outcome = run_ner(model, registry, args.text, types, mode=args.mode, width=args.width)
    if args.json:
        body = {
            "mentions": [
                {"type": m.type_id, "text": m.text, "start": m.start, "end": m.end}
                for m in outcome.mentions
            ]
            + [{"type": p.type_id, "text": p.payload, "start": None, "end": None}
               for p in outcome.ungrounded],
            "null_types": list(outcome.null_types),
            "raw_target": outcome.raw_target,
            "parse_valid": outcome.parse_valid,
        }
        print(json.dumps(body, ensure_ascii=False, indent=2))
    else:
        print(outcome.raw_target)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ModelHolder, create_app

    cfg = _config(args)
    holder = ModelHolder()
    holder.reload(args.model, cfg.registry, cfg.eval_beam, cfg.test_beam)
    app = create_app(holder)
    uvicorn.run(app, host=args.host or cfg.host, port=args.port or cfg.port)
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "ingest": _cmd_ingest,
    "adapt": _cmd_adapt,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "pilot": _cmd_pilot,
    "ablate": _cmd_ablate,
    "predict": _cmd_predict,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, RegistryError, CorpusError, RequestError, ValueError,
            FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
