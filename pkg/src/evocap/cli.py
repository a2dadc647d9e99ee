"""Command-line entry point.

Subcommands: synth-data, train, eval, generate, grad-check, inspect.
Exit codes: 0 success, 1 runtime failure, 2 usage error. Every run echoes its
effective configuration into the output directory, so re-running from that
snapshot reproduces the outputs bitwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as cfgmod
from .config import ConfigError, load_config, model_config, train_config, write_effective
from .corpus import load_corpus_dir, synth_corpus, tokenize, EmotionTaxonomy
from .gradcheck import available_modules, grad_check
from .metrics import compute_report
from .training import load_checkpoint, save_checkpoint, train


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON config file with flat dotted keys")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")
    parser.add_argument("--seed", type=int, default=None,
                        help=f"seed (falls back to ${cfgmod.SEED_ENV_VAR})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evocap",
        description="Emotional video captioning with step-synchronized emotion evolution")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a deterministic synthetic corpus")
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("train", help="teacher-forced training on a corpus directory")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("eval", help="score candidate captions against references")
    p.add_argument("--candidates", type=Path, required=True,
                   help='JSONL, one {"id", "caption"} per line')
    p.add_argument("--references", type=Path, required=True,
                   help='JSONL, one {"id", "captions": [...]} per line')
    p.add_argument("--taxonomy", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("generate", help="decode captions for a corpus with a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("grad-check", help="finite-difference gradient verification")
    p.add_argument("--module", default="all", choices=available_modules())
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--out", type=Path, default=None,
                   help="optional directory for report.json")
    _add_common(p)

    p = sub.add_parser("inspect", help="render per-step traces from a generation file")
    p.add_argument("--generation", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_common(p)
    return parser


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_synth_data(args, cfg: dict) -> int:
    synth_corpus(
        seed=cfg["seed"],
        n_videos=int(cfg["synth.videos"]),
        vocab_size=int(cfg["synth.vocab_size"]),
        n_categories=int(cfg["synth.categories"]),
        words_per_category=int(cfg["synth.words_per_category"]),
        feature_dims=(int(cfg["synth.d_appearance"]), int(cfg["synth.d_motion"])),
        n_frames=int(cfg["synth.frames"]),
        out_dir=args.out,
        n_phases=int(cfg["synth.phases"]),
    )
    write_effective(cfg, args.out)
    print(f"wrote synthetic corpus to {args.out}")
    return 0


def _cmd_train(args, cfg: dict) -> int:
    manifest, taxonomy, vocab = load_corpus_dir(args.data)
    sample = manifest.load_sample(taxonomy, 0)
    mcfg = model_config(cfg, sample.appearance.shape[1], sample.motion.shape[1])
    tcfg = train_config(cfg)
    result = train(manifest, taxonomy, vocab, mcfg, tcfg)
    args.out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out, result.model, tcfg, result.final_step,
                    rng_state=result.rng_state, curve=result.curve)
    write_effective(cfg, args.out)
    final = result.curve[-1] if result.curve else (0, float("nan"), 0, 0)
    print(f"trained {result.final_step} steps; final loss {final[1]:.6f}; "
          f"checkpoint at {args.out}")
    return 0


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


def _cmd_eval(args, cfg: dict) -> int:
    cand_rows = {r["id"]: r["caption"] for r in _read_jsonl(args.candidates)}
    ref_rows = _read_jsonl(args.references)
    taxonomy = EmotionTaxonomy.load(args.taxonomy)
    candidates, references = [], []
    for row in ref_rows:
        if row["id"] not in cand_rows:
            raise ValueError(f"no candidate for video {row['id']!r}")
        candidates.append(tokenize(cand_rows[row["id"]]))
        references.append([tokenize(c) for c in row["captions"]])
    report = compute_report(candidates, references, set(taxonomy.words),
                            hybrid_weight=float(cfg["eval.hybrid_weight"]))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "report.json").write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n")
    (args.out / "report.csv").write_text(report.to_csv())
    write_effective(cfg, args.out)
    print(json.dumps(report.to_dict(), sort_keys=True, indent=1))
    return 0


def _cmd_generate(args, cfg: dict) -> int:
    model, _, _ = load_checkpoint(args.checkpoint)
    manifest, taxonomy, _ = load_corpus_dir(args.data)
    mode = str(cfg["decode.mode"])
    beam_size = int(cfg["decode.beam_size"])
    max_len = int(cfg["decode.max_len"])
    lines = []
    for i in range(len(manifest)):
        sample = manifest.load_sample(taxonomy, i)
        tokens, steps = model.generate_caption(sample, mode=mode, beam_size=beam_size,
                                               max_len=max_len)
        lines.append(json.dumps({
            "id": sample.id,
            "caption": " ".join(tokens),
            "per_step": [s.to_json_dict() for s in steps],
        }, sort_keys=True))
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "captions.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""))
    write_effective(cfg, args.out)
    print(f"wrote {len(lines)} captions to {args.out / 'captions.jsonl'}")
    return 0


def _cmd_grad_check(args, cfg: dict) -> int:
    report = grad_check(args.module, seed=cfg["seed"], tolerance=args.tolerance)
    print(report.format_table())
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        payload = {
            "module": report.module,
            "tolerance": report.tolerance,
            "max_rel": report.max_rel,
            "passed": report.passed,
            "groups": {k: {"max_rel": v.max_rel, "mean_rel": v.mean_rel}
                       for k, v in sorted(report.groups.items())},
        }
        (args.out / "report.json").write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")
        write_effective(cfg, args.out)
    return 0 if report.passed else 1


def _cmd_inspect(args, cfg: dict) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = _read_jsonl(args.generation)
    if not rows:
        raise ValueError(f"no generation rows in {args.generation}")
    args.out.mkdir(parents=True, exist_ok=True)

    gate_lines = ["id,t,g_mean,g_max"]
    weight_lines = ["id,t,subspace_index,weight"]
    for row in rows:
        for step in row["per_step"]:
            gate_lines.append(f"{row['id']},{step['t']},{step['g_mean']!r},{step['g_max']!r}")
            for j, w in enumerate(step["R_aft"]):
                weight_lines.append(f"{row['id']},{step['t']},{j},{w!r}")
    (args.out / "gate_trace.csv").write_text("\n".join(gate_lines) + "\n")
    (args.out / "subspace_trace.csv").write_text("\n".join(weight_lines) + "\n")

    fig, ax = plt.subplots(figsize=(7, 4))
    for row in rows:
        ts = [s["t"] for s in row["per_step"]]
        ax.plot(ts, [s["g_mean"] for s in row["per_step"]], label=row["id"], alpha=0.7)
    ax.set_xlabel("generation step")
    ax.set_ylabel("mean emotion intensity")
    ax.set_title("emotion intensity gate per step")
    if len(rows) <= 8:
        ax.legend(fontsize="small")
    fig.savefig(args.out / "gate_trace.png", dpi=100, metadata={"Software": None})
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 4))
    n_sub = max((len(s["R_aft"]) for r in rows for s in r["per_step"]), default=0)
    for j in range(n_sub):
        ts, means = [], []
        for t in range(1, 1 + max(len(r["per_step"]) for r in rows)):
            vals = [r["per_step"][t - 1]["R_aft"][j] for r in rows
                    if len(r["per_step"]) >= t and len(r["per_step"][t - 1]["R_aft"]) > j]
            if vals:
                ts.append(t)
                means.append(sum(vals) / len(vals))
        ax.plot(ts, means, marker="o", label=f"subspace {j}")
    ax.set_xlabel("generation step")
    ax.set_ylabel("mean mixing weight")
    ax.set_title("subspace mixing weights per step")
    ax.legend(fontsize="small")
    fig.savefig(args.out / "subspace_trace.png", dpi=100, metadata={"Software": None})
    plt.close(fig)

    write_effective(cfg, args.out)
    print(f"wrote traces and plots to {args.out}")
    return 0


_COMMANDS = {
    "synth-data": _cmd_synth_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "generate": _cmd_generate,
    "grad-check": _cmd_grad_check,
    "inspect": _cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
    except ConfigError as exc:
        parser.exit(2, f"evocap: config error: {exc}\n")
    try:
        return _COMMANDS[args.command](args, cfg)
    except Exception as exc:  # runtime failure -> exit 1 with diagnostic
        print(f"evocap: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
