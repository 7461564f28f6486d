"""Command-line surface: generate planted data, train, evaluate, inspect
filtering. Exit codes: 0 success, 2 usage/config problems, 3 numeric failure
(a diagnostic dump path is printed for the latter).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import autodiff as ad
from .data import read_container, write_container
from .errors import NarvidError, NumericError, UsageError
from .filtering import filter_pair
from .inference import FUSION_MODES, model_eval, zero_shot_eval
from .model import enhance, load_params, save_params
from .objective import DEFAULTS, TrainConfig, train
from .synth import PlantSpec, gen_planted


def _emit(payload, out_path=None):
    text = json.dumps(payload, sort_keys=True, indent=2)
    if out_path:
        Path(out_path).write_text(text + "\n")
    print(text)


def cmd_gen(args):
    spec = PlantSpec(episodes=args.episodes, frames=args.frames, words=args.words,
                     dim=args.dim, seed=args.seed, signal=args.signal,
                     corrupt=args.corrupt, overlap=args.overlap)
    dataset = gen_planted(spec)
    write_container(dataset, args.out)
    print(f"wrote {len(dataset)} episodes (dim {dataset.dim}) to {args.out}")
    return 0


def cmd_train(args):
    dataset = read_container(args.data)
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from exc
    config = TrainConfig.from_dict(raw)
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log.jsonl")
    records = []

    try:
        with open(log_path, "w") as log:
            def log_fn(record):
                records.append(record)
                log.write(json.dumps(record, sort_keys=True) + "\n")

            params = train(dataset, config, log_fn=log_fn)
    except NumericError as exc:
        dump_path = Path(str(args.out) + ".diag.json")
        dump_path.write_text(json.dumps({
            "error": str(exc),
            "steps_completed": len(records),
            "config": config.__dict__,
        }, sort_keys=True, indent=2) + "\n")
        print(f"numeric failure after {len(records)} steps; diagnostics at {dump_path}",
              file=sys.stderr)
        return 3
    save_params(params, args.out)
    print(f"trained {len(records)} steps; checkpoint at {args.out}, log at {log_path}")
    return 0


def cmd_eval(args):
    dataset = read_container(args.data)
    if args.zero_shot:
        report = zero_shot_eval(dataset, direction=args.direction)[args.mode]
    else:
        if not args.ckpt:
            raise UsageError("--ckpt is required unless --zero-shot is given")
        if not Path(args.ckpt).exists():
            raise UsageError(f"checkpoint not found: {args.ckpt}")
        params = load_params(args.ckpt)
        report = model_eval(dataset, params, p=args.p, tau=args.tau,
                            mode=args.mode, direction=args.direction)
    _emit(report.to_dict(), args.out)
    return 0


def _selection_payload(selection):
    return {
        "raw_sims": [float(x) for x in selection.raw_sims],
        "probs": [float(x) for x in selection.probs.data],
        "selected": selection.selected,
        "weights": [float(x) for x in selection.weights.data],
    }


def cmd_filter(args):
    dataset = read_container(args.data)
    n = len(dataset)
    if not (0 <= args.query < n and 0 <= args.candidate < n):
        raise UsageError(f"episode indices must be in [0, {n}), got "
                         f"query={args.query} candidate={args.candidate}")
    if not Path(args.ckpt).exists():
        raise UsageError(f"checkpoint not found: {args.ckpt}")
    params = load_params(args.ckpt)
    query = dataset[args.query]
    candidate = dataset[args.candidate]
    with ad.no_grad():
        feats = enhance(candidate.frames, candidate.captions, params)
        sel_v, sel_n = filter_pair(ad.Tensor(query.eos.copy()), feats.v_check,
                                   feats.n_check, p=args.p, tau=args.tau)
    _emit({
        "query": query.id,
        "candidate": candidate.id,
        "p": args.p,
        "video": _selection_payload(sel_v),
        "narration": _selection_payload(sel_n),
    }, args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="narvid",
        description="Desk-scale text-video retrieval engine over precomputed embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a planted synthetic container")
    gen.add_argument("--episodes", type=int, default=64)
    gen.add_argument("--frames", type=int, default=12)
    gen.add_argument("--words", type=int, default=6)
    gen.add_argument("--dim", type=int, default=32)
    gen.add_argument("--signal", type=float, default=0.6)
    gen.add_argument("--corrupt", type=float, default=0.0)
    gen.add_argument("--overlap", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    tr = sub.add_parser("train", help="train on a container, write a checkpoint")
    tr.add_argument("--data", required=True)
    tr.add_argument("--config", help="JSON config; missing keys take defaults")
    tr.add_argument("--out", required=True)
    tr.add_argument("--log", help="JSON-lines training log path")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="retrieval metrics report as JSON")
    ev.add_argument("--data", required=True)
    ev.add_argument("--ckpt")
    ev.add_argument("--mode", choices=FUSION_MODES, default="standardized")
    ev.add_argument("--direction", choices=("t2v", "v2t"), default="t2v")
    ev.add_argument("--p", type=float, default=DEFAULTS["p"])
    ev.add_argument("--tau", type=float, default=DEFAULTS["tau"])
    ev.add_argument("--zero-shot", action="store_true",
                    help="skip the checkpoint and score raw features")
    ev.add_argument("--out", help="also write the report JSON here")
    ev.set_defaults(func=cmd_eval)

    fl = sub.add_parser("filter", help="dump filtering decisions for one pair")
    fl.add_argument("--data", required=True)
    fl.add_argument("--ckpt", required=True)
    fl.add_argument("--query", type=int, required=True)
    fl.add_argument("--candidate", type=int, required=True)
    fl.add_argument("--p", type=float, default=DEFAULTS["p"])
    fl.add_argument("--tau", type=float, default=DEFAULTS["tau"])
    fl.add_argument("--out", help="also write the dump JSON here")
    fl.set_defaults(func=cmd_filter)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except NarvidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
