"""Command-line entry point.

Exit codes: 0 success, 1 invalid arguments/configuration/data, 2 unreadable
or malformed files. Progress goes to stderr; artifacts only to ``--out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import DivergenceError, ParseError, ValidationError

log = logging.getLogger("patchgraph")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _cmd_synth(args) -> None:
    from .slideio import synth_dataset

    out = synth_dataset(
        args.out,
        n_patients=args.patients,
        n_test_patients=args.test_patients,
        slides_per_patient=args.slides_per_patient,
        mags=args.mags,
        dim=args.dim,
        grid_extent=args.extent,
        separation=args.separation,
        noise=args.noise,
        seed=args.seed,
    )
    log.info("wrote %d training and %d test slides to %s", len(out["train"]), len(out["test"]), args.out)


def _cmd_segment(args) -> None:
    from .slideio import read_ppm, segment_tissue, write_mask

    mask = segment_tissue(read_ppm(args.image), args.sat_thresh)
    write_mask(args.out, mask)
    log.info("tissue fraction %.4f", float(mask.mean()))


def _cmd_grid(args) -> None:
    from .slideio import build_patch_grid, read_mask, write_grid

    grid = build_patch_grid(read_mask(args.mask), args.native_mag, args.target_mag, args.min_tissue)
    write_grid(args.out, grid)
    log.info("%d patches of %d native px kept", len(grid), grid.patch_native)


def _load_config(path, seed):
    from .config import ModelConfig

    config = ModelConfig.load(path) if path else ModelConfig()
    if seed is not None:
        config = config.replace(seed=seed)
    for name in config.out_of_published_range():
        log.warning("%s=%r lies outside the published tuned range", name, getattr(config, name))
    return config


def _cmd_train(args) -> None:
    from .pipeline import cross_validate, mean_val_ce
    from .slideio import read_manifest

    records = read_manifest(args.manifest)
    config = _load_config(args.config, args.seed)
    results = cross_validate(records, config, args.folds, args.out)
    log.info("mean best balanced validation CE %.4f", mean_val_ce(results))


def _cmd_tune(args) -> None:
    from .evalstat import atomic_write
    from .pipeline import SlideCache, TunePlan, cross_validate, mean_val_ce, tune, write_trials
    from .slideio import read_manifest

    records = read_manifest(args.manifest)
    plan = TunePlan.load(args.plan)
    if args.seed is not None:
        plan.initial = plan.initial.replace(seed=args.seed)
    if args.budget < 100:
        log.warning("budget %d is below 100 unique configurations", args.budget)
    cache = SlideCache(plan.initial.magnifications)

    def score(cfg):
        if [float(m) for m in cfg.magnifications] != cache.mags:
            raise ValidationError("tuning plans cannot change magnifications")
        return mean_val_ce(cross_validate(records, cfg, args.folds, cache=cache))

    result = tune(plan, score, args.budget)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trials(out / "trials.json", result)
    atomic_write(out / "best_config.json", result.best.to_json())
    log.info("%d unique configurations, best score %.4f%s", result.unique, result.best_score,
             " (budget exhausted)" if result.exhausted else "")


def _cmd_eval(args) -> None:
    from .config import ModelConfig
    from .evalstat import atomic_write, evaluate
    from .pipeline import load_models, read_folds
    from .slideio import read_manifest

    records = read_manifest(args.manifest)
    config_path = args.config or Path(args.models) / "config.json"
    config = ModelConfig.load(config_path)
    models = load_models(args.models, config)
    folds = read_folds(Path(args.models) / "folds.json") if args.cv else None
    report = evaluate(records, models, config, args.bootstrap, args.seed, folds)
    atomic_write(args.out, report.to_json())
    m = report.metrics["balanced_accuracy"]
    log.info("balanced accuracy %.4f [%.4f, %.4f]", m["mean"], m["ci_low"], m["ci_high"])


def _cmd_stats(args) -> None:
    from .evalstat import EvalReport, atomic_write, compare, comparison_json

    baseline = EvalReport.load(args.baseline)
    others = {}
    for path in args.others:
        name = Path(path).stem
        if name in others:
            name = str(path)
        others[name] = EvalReport.load(path)
    table = compare(baseline, others, args.adjust)
    atomic_write(args.out, comparison_json(table))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="patchgraph", description="Multi-resolution patch-graph slide classifier.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic slide dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--patients", type=int, default=30)
    s.add_argument("--test-patients", type=int, default=0)
    s.add_argument("--slides-per-patient", type=int, default=1)
    s.add_argument("--mags", type=float, nargs="+", default=[5.0, 10.0])
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--extent", type=int, nargs=2, default=[4, 4], metavar=("ROWS", "COLS"))
    s.add_argument("--separation", type=float, default=4.0, help="class-mean distance in noise SDs")
    s.add_argument("--noise", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=_cmd_synth)

    s = sub.add_parser("segment", help="saturation-threshold tissue mask of a PPM thumbnail")
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--sat-thresh", type=float, default=0.06)
    s.set_defaults(fn=_cmd_segment)

    s = sub.add_parser("grid", help="tile a tissue mask into patches")
    s.add_argument("--mask", required=True)
    s.add_argument("--native-mag", type=float, required=True)
    s.add_argument("--target-mag", type=float, required=True)
    s.add_argument("--min-tissue", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_grid)

    s = sub.add_parser("train", help="cross-validated training")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config", help="ModelConfig JSON (defaults when omitted)")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, help="overrides the config's seed")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_train)

    s = sub.add_parser("tune", help="iterative grid search")
    s.add_argument("--manifest", required=True)
    s.add_argument("--plan", required=True)
    s.add_argument("--budget", type=int, default=100, help="maximum unique configurations")
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, help="overrides the plan's initial seed")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_tune)

    s = sub.add_parser("eval", help="evaluate trained models with bootstrap intervals")
    s.add_argument("--manifest", required=True)
    s.add_argument("--models", required=True, help="directory of fold*.ckpt files")
    s.add_argument("--config", help="defaults to MODELS/config.json")
    s.add_argument("--bootstrap", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cv", action="store_true",
                   help="score each slide with the model of the fold that held it out (uses MODELS/folds.json)")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_eval)

    s = sub.add_parser("stats", help="paired t-tests of reports against a baseline")
    s.add_argument("--baseline", required=True)
    s.add_argument("--others", required=True, nargs="+")
    s.add_argument("--adjust", choices=["bh", "none"], default="bh")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        args.fn(args)
    except (ParseError, OSError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return 2
    except (ValidationError, DivergenceError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
