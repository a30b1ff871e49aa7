"""Batch front-end: ``hqnoise {collect,filter,train,infer,verify}``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 verification
failure, 5 training failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from hqnoise import io as pair_io
from hqnoise.collector import collect_many
from hqnoise.config import PRESETS, RunConfig
from hqnoise.edn import EdnModel, load_checkpoint, save_checkpoint, train_edn
from hqnoise.errors import ConfigError, FormatError, TrainingError, VerificationError
from hqnoise.pipeline import MODES, Scene, filter_pairs, initial_for_mode
from hqnoise.quality import filtering_rate
from hqnoise.scheduler import PredictionType, build_schedule
from hqnoise.testbed import MockPredictor
from hqnoise.theory import random_trials, roundtrip_coefficient, verify_multistep, write_report

log = logging.getLogger("hqnoise")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_VERIFY = 4
EXIT_TRAIN = 5


def _out(args, name):
    return os.path.join(args.out, name)


def _ensure_out(path):
    os.makedirs(path, exist_ok=True)
    probe = os.path.join(path, ".write-probe")
    with open(probe, "w"):
        pass
    os.remove(probe)


def _scene(cfg: RunConfig):
    return Scene(cfg.world(), cfg.collection(), cfg.schedule(), cfg.dynamic_range)


def cmd_collect(args, cfg: RunConfig):
    _ensure_out(args.out)
    schedule = cfg.schedule()
    config = cfg.collection()
    world = cfg.world()
    seeds = cfg.seeds()
    lines = [
        f"schedule: steps={schedule.steps} sigma_max={schedule.sigmas[0]:.6f} q={schedule.q:.4f}",
        f"collection: n={config.n} gamma1={config.gamma1.describe()} gamma2={config.gamma2:g} "
        f"prediction={config.kind.value} align={config.align}",
        f"world: views={world.num_views} shape={world.shape} components={world.num_components}",
        f"seeds: {seeds[0]}..{seeds[-1]} ({len(seeds)})",
    ]
    for line in lines:
        log.info(line)
    pairs, failures = collect_many(seeds, world, config, schedule, workers=cfg.workers)
    path = args.output or _out(args, "pairs.ednp")
    pair_io.write_pairs(path, pairs)
    lines.append(f"collected {len(pairs)} pairs, {len(failures)} failures")
    lines.extend(f"failed seed {s}: {msg}" for s, msg in failures)
    with open(_out(args, "collect.log"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    log.info("wrote %s (%d records)", path, len(pairs))
    return EXIT_OK


def cmd_filter(args, cfg: RunConfig):
    _ensure_out(args.out)
    src = args.input or _out(args, "pairs.ednp")
    pairs = pair_io.read_pairs(src)
    m = cfg.filter_m if args.m is None else args.m
    if m < 0:
        raise ConfigError("filter threshold m must be >= 0")
    score_path = args.scores or cfg.score_file
    external = pair_io.read_scores(score_path) if score_path else None
    kept, skipped = filter_pairs(pairs, m, scene=_scene(cfg), external=external, warn=log.warning)
    dst = args.output or _out(args, "filtered.ednp")
    pair_io.write_pairs(dst, kept)
    total = len(pairs) - len(skipped)
    rate = filtering_rate(len(kept), total) if total else 0.0
    report = f"threshold m={m:g}: retained {len(kept)} of {total} ({rate:.2f}%)"
    if skipped:
        report += f"; skipped {len(skipped)} without scores"
    with open(_out(args, "filter_report.txt"), "w") as fh:
        fh.write(report + "\n")
    print(report)
    return EXIT_OK


def cmd_train(args, cfg: RunConfig):
    _ensure_out(args.out)
    src = args.input or _out(args, "filtered.ednp")
    pairs = pair_io.read_pairs(src)
    if not pairs:
        raise ConfigError(f"{src}: no training records")
    tcfg = cfg.train_config()
    if args.epochs:
        tcfg = type(tcfg)(**{**vars(tcfg), "epochs": args.epochs})
    model = EdnModel(cfg.edn_config(scale=cfg.schedule().q))
    ckpt = args.output or _out(args, "edn.ckpt")
    csv_path = _out(args, "train_loss.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "loss"])

        def on_epoch(entry):
            writer.writerow([entry.epoch, f"{entry.lr:.8g}", f"{entry.loss:.10e}"])

        try:
            train_edn(pairs, model, tcfg, on_epoch=on_epoch)
        except TrainingError:
            save_checkpoint(model, ckpt)
            raise
    save_checkpoint(model, ckpt)
    log.info("wrote %s and %s", ckpt, csv_path)
    return EXIT_OK


def _parse_seeds(text):
    if "-" in text:
        a, b = text.split("-", 1)
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in text.split(",")]


def cmd_infer(args, cfg: RunConfig):
    _ensure_out(args.out)
    modes = MODES if args.mode == "all" else (args.mode,)
    model = None
    if "with-edn" in modes:
        if not args.checkpoint:
            raise ConfigError("with-edn mode needs --checkpoint")
        model = load_checkpoint(args.checkpoint)
    elif args.checkpoint:
        raise ConfigError(f"--checkpoint given but mode {args.mode!r} does not use it")
    scene = _scene(cfg)
    seeds = _parse_seeds(args.seeds)
    rows = []
    latents = {}
    for mode in modes:
        for seed in seeds:
            z = initial_for_mode(scene, seed, mode, model)
            out, metrics = scene.view_metrics(z, seed)
            latents[f"{mode}/{seed}"] = out.astype(np.float32)
            for r in metrics:
                rows.append({"seed": seed, "mode": mode, **r})
    np.savez(_out(args, "generated.npz"), **latents)
    with open(_out(args, "metrics.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, ["seed", "mode", "view", "psnr", "ssim", "proxy"])
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in r.items()})
    for mode in modes:
        sel = [r for r in rows if r["mode"] == mode]
        print(
            f"{mode:>10}: psnr={np.mean([r['psnr'] for r in sel]):.4f} "
            f"ssim={np.mean([r['ssim'] for r in sel]):.4f} "
            f"proxy={np.mean([r['proxy'] for r in sel]):.5f}"
        )
    return EXIT_OK


def cmd_verify(args, cfg: RunConfig):
    _ensure_out(args.out)
    rng = np.random.default_rng(cfg.master_seed)
    coefficient = roundtrip_coefficient
    if args.perturb_coefficient:
        eps = args.perturb_coefficient

        def coefficient(st, sp, kind):
            return roundtrip_coefficient(st, sp, kind) * (1.0 + eps)

    reports = random_trials(args.trials, rng, coefficient=coefficient)
    schedule = build_schedule(25)
    for kind in PredictionType:
        mock = MockPredictor(rng.standard_normal((4, 8, 8)), rng.standard_normal((4, 8, 8)))
        z = schedule.q * rng.standard_normal((4, 8, 8))
        reports.append(verify_multistep(z, mock, 6.0, 0.0, schedule, 16, kind, strict=False))
    summary = write_report(
        reports, _out(args, "verify_report.txt"), _out(args, "verify_summary.json")
    )
    status = "PASS" if summary["passed"] else "FAIL"
    print(
        f"{status}: {summary['checks'] - summary['failed']}/{summary['checks']} checks, "
        f"worst relative deviation {summary['worst_relative_deviation']:.3e}"
    )
    if not summary["passed"]:
        raise VerificationError(f"{summary['failed']} appendix checks failed")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="hqnoise", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--preset", default="default", choices=sorted(PRESETS))
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--workers", type=int, help="parallel workers (env HQNOISE_WORKERS)")
    parser.add_argument("--out", default="run", help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="collect noise pairs over the configured seed range")
    p.add_argument("--output", help="dataset path (default OUT/pairs.ednp)")
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("filter", help="keep pairs whose high-quality noise scores better")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("-m", type=float, help="filtering threshold")
    p.add_argument("--scores", help="external score file (seed,s_rd,s_hq)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("train", help="train the encoder-decoder network")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="generate from standard / inverted / EDN noise")
    p.add_argument("--mode", default="standard", choices=MODES + ("all",))
    p.add_argument("--checkpoint")
    p.add_argument("--seeds", default="1", help="'5', '1,2,3' or '1-200'")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("verify", help="check the roundtrip identities numerically")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--perturb-coefficient", type=float, default=0.0,
                   help="negative control: scale the closed-form coefficient by 1+x")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    try:
        cfg = RunConfig.load(args.config, args.preset, overrides, workers=args.workers)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
