"""Command-line entry point: ``python -m nsmimo {generate-dataset,detect,run,eval}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .detection import detect_boxes, export_detections
from .harness import IDENTIFIERS, SCHEMES, ExperimentConfig, evaluate, generate_dataset, override, run_experiment
from .image import matched_filter_image, read_png
from .model import ConfigurationError, Scenario, uplink_pilot_observation


def _load_config(path) -> ExperimentConfig:
    return ExperimentConfig.load(path) if path else ExperimentConfig()


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config (defaults are used when omitted)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory or file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsmimo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-dataset", help="write PNG images and box labels")
    _add_common(g)
    g.add_argument("--count", type=int, default=10)

    d = sub.add_parser("detect", help="image -> JSON-lines detections")
    _add_common(d)
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--image", help="exported PNG (magnitude-only detection)")
    src.add_argument("--scenario", help="scenario JSON; pilots are simulated at --snr")
    d.add_argument("--snr", type=float, default=10.0)
    d.add_argument("--draw", type=int, default=0, help="noise draw index")

    r = sub.add_parser("run", help="Monte Carlo sweep")
    _add_common(r)
    r.add_argument("--snr", type=float, nargs="+", help="SNR grid in dB")
    r.add_argument("--trials", type=int)
    r.add_argument("--scheme", choices=SCHEMES, action="append", help="repeat to run several schemes")
    r.add_argument("--identifier", choices=IDENTIFIERS)
    r.add_argument("--detections", help="JSON-lines boxes used instead of the built-in detector")
    r.add_argument("--diagnostics", action="store_true", help="also write per-trial diagnostics.json")

    e = sub.add_parser("eval", help="recompute summary.json from results.csv")
    e.add_argument("results", help="results.csv or the directory holding it")
    e.add_argument("--out", help="summary path (default: summary.json next to the CSV)")
    e.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    return parser


def cmd_generate(args) -> int:
    cfg = override(_load_config(args.config), seed=args.seed)
    ids = generate_dataset(cfg, args.count, args.out or "dataset")
    print(f"wrote {len(ids)} image/label pairs to {args.out or 'dataset'}")
    return 0


def cmd_detect(args) -> int:
    cfg = _load_config(args.config)
    if args.scenario:
        scenario = Scenario.load(args.scenario)
        c = scenario.config
        Y = uplink_pilot_observation(scenario, args.snr, args.draw)
        image = matched_filter_image(Y, cfg.image)
    else:
        c = cfg.system
        pixels = read_png(args.image)
        image = cfg.image.eta - pixels.astype(float)
        expected = (cfg.image.gamma_a * c.M, cfg.image.gamma_t * c.N)
        if image.shape != expected:
            raise ConfigurationError(f"image shape {image.shape} does not match config {expected}")
    dets = detect_boxes(image, c.M, c.N, c.S, cfg.image, cfg.detector)
    if args.out:
        export_detections(dets, args.out)
        print(f"{len(dets)} detections -> {args.out}")
    else:
        for det in dets:
            print(json.dumps(det.__dict__))
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    cfg = override(
        cfg, snr_grid=args.snr, trials=args.trials, schemes=args.scheme, identifier=args.identifier,
        detections=args.detections, seed=args.seed, out_dir=args.out,
        diagnostics=True if args.diagnostics else None,
    )
    reports = run_experiment(cfg)
    failed = sum(r.failed for r in reports)
    summary = json.loads((Path(cfg.out_dir) / "summary.json").read_text())
    for cell in summary["cells"]:
        ul, dl = cell.get("nmse_ul_db"), cell.get("nmse_dl_db")
        print(f"{cell['scheme']:>11s} {cell['snr_db']:6.1f} dB  "
              f"UL {_num(ul)} dB  DL {_num(dl)} dB  SE {_num(cell.get('se_bps_hz'))}  "
              f"L_hat {_num(cell.get('mean_l_hat'))}  failed {cell['failed']}/{cell['trials']}")
    print(f"{len(reports)} runs, {failed} failed; results in {cfg.out_dir}")
    return 0


def _num(v) -> str:
    return "   n/a" if v is None or not np.isfinite(v) else f"{v:7.2f}"


def cmd_eval(args) -> int:
    path = Path(args.results)
    if path.is_dir():
        path = path / "results.csv"
    out = Path(args.out) if args.out else path.with_name("summary.json")
    summary = evaluate(path, out, seed=args.seed)
    print(f"{len(summary['cells'])} cells -> {out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"generate-dataset": cmd_generate, "detect": cmd_detect, "run": cmd_run, "eval": cmd_eval}
    try:
        return handlers[args.command](args)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
