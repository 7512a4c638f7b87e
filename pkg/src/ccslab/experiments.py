"""Sweeps and report writers shared by the CLI and the acceptance suite.

All numeric output goes through :func:`fmt` so repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import json
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .config import RunConfig, config_hash
from .ddim import RoundtripReport, roundtrip_error
from .denoiser import AnalyticMixtureDenoiser, MixtureParams
from .pipeline import VARIANTS, EditResult, FrameSequence, apply_toy_edit, build_world, edit_video, gen_toy_video
from .schedule import SeededNoiseSource, subsample_timesteps

ROUNDTRIP_COLUMNS = ("steps", "seed", "naive_mse", "exact_mse")
ABLATION_COLUMNS = ("variant", "content_ccs", "content_final", "roughness_ccs", "roughness_final", "mmd_initial", "mmd_final")


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


@dataclass(frozen=True)
class RoundtripRow:
    steps: int
    seed: int
    report: RoundtripReport


def roundtrip_sweep(cfg: RunConfig, threads: int = 1) -> list[RoundtripRow]:
    """Naive-vs-exact inversion error on a single isotropic Gaussian."""
    p, rt = cfg.pipeline, cfg.roundtrip
    schedule = p.schedule()
    mean = np.asarray(rt.mean, dtype=np.float64)
    model = AnalyticMixtureDenoiser(MixtureParams.single(mean, rt.std), schedule)

    def one(job):
        n, s = job
        # seed offset keeps sweep samples apart from pipeline streams
        z0 = mean + rt.std * SeededNoiseSource(p.seed, 2_000_000 + s).draw(mean.size)
        steps = subsample_timesteps(schedule.T, n)
        return RoundtripRow(n, s, roundtrip_error(model, z0, schedule, steps, eps_timestep=rt.eps_timestep))

    jobs = [(n, s) for n in rt.step_counts for s in range(rt.seeds)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, jobs))
    return [one(j) for j in jobs]


def roundtrip_means(rows: list[RoundtripRow]) -> dict[int, tuple[float, float]]:
    out = {}
    for n in dict.fromkeys(r.steps for r in rows):
        sel = [r.report for r in rows if r.steps == n]
        out[n] = (float(np.mean([r.naive_mse for r in sel])), float(np.mean([r.exact_mse for r in sel])))
    return out


def write_roundtrip(rows: list[RoundtripRow], out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    detail = out / "roundtrip.csv"
    write_csv(detail, ROUNDTRIP_COLUMNS, [(r.steps, r.seed, r.report.naive_mse, r.report.exact_mse) for r in rows])
    summary = out / "roundtrip_summary.csv"
    write_csv(summary, ("steps", "mean_naive_mse", "mean_exact_mse"), [(n, a, b) for n, (a, b) in roundtrip_means(rows).items()])
    return [detail, summary]


@dataclass
class EditRun:
    src: FrameSequence
    truth_delta: np.ndarray
    result: EditResult


def run_edit(cfg: RunConfig, variant: str = "full") -> EditRun:
    p = cfg.pipeline
    world = build_world(p)
    src = gen_toy_video(p, world=world)
    first_edit = src[0].copy() if cfg.null_edit else apply_toy_edit(src[0], world.edit)
    delta = np.zeros(src.dim) if cfg.null_edit else world.edit.delta
    return EditRun(src, delta, edit_video(src, first_edit, p, world, variant))


def _frames_rows(seq: FrameSequence):
    return [(i + 1, *row) for i, row in enumerate(seq.frames)]


def write_report(run: EditRun, out: Path, prefix: str = "") -> list[Path]:
    """Structured text report (``key = value`` block then CSV tables) plus per-frame CSVs."""
    out.mkdir(parents=True, exist_ok=True)
    res = run.result
    dim = run.src.dim
    header = ("frame", *(f"c{k}" for k in range(dim)))
    paths = []
    for name, seq in (("src", run.src), ("ccs", res.ccs_out), ("final", res.final)):
        path = out / f"{prefix}frames_{name}.csv"
        write_csv(path, header, _frames_rows(seq))
        paths.append(path)
    trace = out / f"{prefix}tcs_trace.csv"
    bw = [float("nan")] + list(res.bandwidths)
    write_csv(trace, ("iteration", "mmd2", "bandwidth"), [(k, m, bw[k]) for k, m in enumerate(res.mmd_trace)])
    paths.append(trace)

    report = out / f"{prefix}report.txt"
    with open(report, "w") as fh:
        for k, v in res.report.items():
            fh.write(f"{k} = {fmt(v)}\n")
        fh.write("\n# table: tcs_trace\n")
        fh.write("iteration,mmd2,bandwidth\n")
        for k, m in enumerate(res.mmd_trace):
            fh.write(f"{k},{fmt(m)},{fmt(bw[k])}\n")
    paths.append(report)
    return paths


def run_ablation(cfg: RunConfig, which: str = "all") -> dict[str, EditRun]:
    variants = VARIANTS if which == "all" else (which,)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; expected one of {VARIANTS} or 'all'")
    return {v: run_edit(cfg, v) for v in variants}


def write_ablation(runs: dict[str, EditRun], out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "ablation.csv"
    write_csv(path, ABLATION_COLUMNS, [[v] + [r.result.report[c] for c in ABLATION_COLUMNS[1:]] for v, r in runs.items()])
    return path


def write_manifest(cfg: RunConfig, out: Path, command: str, outputs: list[Path], started: float) -> Path:
    """Config snapshot (re-runnable with ``--config``) and a JSON manifest.

    Timestamps live only in the JSON, never in the CSV outputs.
    """
    out.mkdir(parents=True, exist_ok=True)
    snapshot = out / "config.ini"
    snapshot.write_text(cfg.to_text())
    manifest = out / "manifest.json"
    manifest.write_text(
        json.dumps(
            {
                "command": command,
                "config_hash": config_hash(cfg),
                "config": str(snapshot.name),
                "outputs": sorted(p.name for p in outputs),
                "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
                "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "version": __version__,
                "backend": _backend.BACKEND,
                "python": platform.python_version(),
            },
            indent=2,
        )
        + "\n"
    )
    return manifest
