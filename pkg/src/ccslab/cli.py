"""Command-line entry point: ``ccslab {roundtrip,edit,ablate,accept}``."""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import acceptance
from .config import ConfigError, RunConfig, load_config
from .experiments import (
    write_csv,
    roundtrip_means,
    roundtrip_sweep,
    run_ablation,
    run_edit,
    write_ablation,
    write_manifest,
    write_report,
    write_roundtrip,
)
from .pipeline import VARIANTS

ACCEPT_COLUMNS = ("id", "name", "passed", "measured", "threshold")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration (defaults apply for missing keys)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--threads", type=int, help="override [run] threads")

    parser = argparse.ArgumentParser(prog="ccslab", description="Toy one-shot edit propagation lab.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("roundtrip", parents=[common], help="naive vs exact inversion error sweep")
    sub.add_parser("edit", parents=[common], help="propagate a toy first-frame edit through a toy video")
    ab = sub.add_parser("ablate", parents=[common], help="compare the full pipeline with its ablations")
    ab.add_argument("--which", choices=(*VARIANTS, "all"), default="all")
    acc = sub.add_parser("accept", parents=[common], help="run every exit criterion")
    acc.add_argument("--strict", action="store_true", help="exit with status 1 if any criterion fails")
    return parser


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    p = cfg.pipeline
    if args.seed is not None:
        p = replace(p, seed=args.seed)
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        p = replace(p, threads=args.threads)
    return replace(cfg, pipeline=p)


def cmd_roundtrip(cfg: RunConfig, out: Path) -> list[Path]:
    rows = roundtrip_sweep(cfg, cfg.pipeline.threads)
    for n, (naive, exact) in roundtrip_means(rows).items():
        print(f"steps={n:4d}  mean naive_mse={naive:.6e}  mean exact_mse={exact:.3e}")
    return write_roundtrip(rows, out)


def cmd_edit(cfg: RunConfig, out: Path) -> list[Path]:
    run = run_edit(cfg)
    for k, v in run.result.report.items():
        print(f"{k} = {v}")
    return write_report(run, out)


def cmd_ablate(cfg: RunConfig, out: Path, which: str) -> list[Path]:
    runs = run_ablation(cfg, which)
    paths = [write_ablation(runs, out)]
    for v, r in runs.items():
        rep = r.result.report
        print(f"{v:7s} content_final={rep['content_final']:.4f} roughness_final={rep['roughness_final']:.4f}")
        paths += write_report(r, out, prefix=f"{v}_")
    return paths


def cmd_accept(cfg: RunConfig, out: Path) -> tuple[list[Path], bool]:
    results = acceptance.run_all(cfg)
    for r in results:
        print(r.line())
    info = acceptance.reference_eta_report(cfg.pipeline.seed)
    print(f"INFO step size check ({info})")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "acceptance.csv"
    write_csv(path, ACCEPT_COLUMNS, [(r.id, r.name, r.passed, r.measured, r.threshold) for r in results])
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    return [path], n_pass == len(results)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    started = time.time()
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"ccslab: error: {exc}", file=sys.stderr)
        return 2
    out = args.out
    ok = True
    if args.command == "roundtrip":
        paths = cmd_roundtrip(cfg, out)
    elif args.command == "edit":
        paths = cmd_edit(cfg, out)
    elif args.command == "ablate":
        paths = cmd_ablate(cfg, out, args.which)
    else:
        paths, ok = cmd_accept(cfg, out)
    write_manifest(cfg, out, " ".join(["ccslab", *(argv if argv is not None else sys.argv[1:])]), paths, started)
    print(f"wrote {len(paths)} files to {out}")
    if args.command == "accept" and args.strict and not ok:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
