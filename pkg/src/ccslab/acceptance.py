"""Exit criteria for the lab, runnable from the CLI (``ccslab accept``) and pytest.

Each check returns a :class:`CriterionResult`; wall-clock limits count towards
``passed`` but never appear in the CSV so repeated runs stay byte-identical.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .ccs import CCSConfig, ccs_sample, consistency_noise, f_hat
from .config import RunConfig
from .ddim import ddim_step, predicted_x0
from .denoiser import AnalyticMixtureDenoiser, MixtureParams, mixture_score, score_finite_diff
from .experiments import roundtrip_means, roundtrip_sweep, run_ablation, run_edit, write_ablation, write_report, write_roundtrip
from .gridprompt import compose_grid, edit_prompt, IdentityEmbedder
from .pipeline import PipelineConfig, ToyEdit, build_world, gen_toy_video, metric_content
from .schedule import SeededNoiseSource, SigmaPolicy, make_schedule, sigma_at
from .tcs import ParticleSet, TCSConfig, phi_hat, phi_hat_all, tcs_update

# pinned from seeds 0, 1, 2 of the default toy (observed 1.870, 1.872, 1.871)
FIDELITY_THRESHOLD = 1.90
TCS_MMD_RATIO = 0.10
TCS_MONOTONE_FROM = 5


@dataclass(frozen=True)
class CriterionResult:
    id: int
    name: str
    passed: bool
    measured: str
    threshold: str
    runtime: float = 0.0
    limit: float | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lim = f" / limit {self.limit:g} s" if self.limit else ""
        return f"{status} [{self.id:2d}] {self.name}: {self.measured} (need {self.threshold}; {self.runtime:.2f} s{lim})"


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        res = fn(*args, **kwargs)
        elapsed = time.perf_counter() - start
        ok = res.passed and (res.limit is None or elapsed < res.limit)
        return replace(res, runtime=elapsed, passed=ok)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


@_timed
def check_anchoring(n: int = 1000, seed: int = 0) -> CriterionResult:
    """The consistency map with the anchoring noise returns the anchor."""
    sched = make_schedule()
    rng = _rng(seed)
    worst = 0.0
    for _ in range(n):
        dim = int(rng.integers(1, 65))
        t = int(rng.integers(1, sched.T + 1))
        z = rng.normal(0, 3, dim)
        s = rng.normal(0, 3, dim)
        worst = max(worst, float(np.max(np.abs(f_hat(z, t, consistency_noise(z, t, s, sched), sched) - s))))
    return CriterionResult(1, "anchoring identity", worst <= 1e-9, f"max |err|_inf = {worst:.3e}", "<= 1e-9", limit=1.0)


def _default_frames(seed: int = 0):
    cfg = PipelineConfig(seed=seed)
    world = build_world(cfg)
    return cfg, world, gen_toy_video(cfg, world=world)


@_timed
def check_calibration_off(seeds=range(10)) -> CriterionResult:
    """With the calibration weight at zero every CCS step reproduces the source."""
    cfg, world, src = _default_frames()
    first_edit = src[0] + world.edit.delta
    prompt = edit_prompt(IdentityEmbedder(), first_edit, src[0], cfg.lambda1)
    worst = 0.0
    for seed in seeds:
        ccs_cfg = CCSConfig(world.schedule, lambda2=0.0, n_steps=cfg.ccs_steps, seed=seed)
        query = src[1 + seed % (src.N - 1)]
        grid = compose_grid(src[0], first_edit, query)
        _, outs = ccs_sample(world.model, query, grid, prompt, ccs_cfg, stream=seed)
        worst = max(worst, max(float(np.max(np.abs(o - query))) for o in outs))
    return CriterionResult(2, "calibration-off reduction", worst <= 1e-9, f"max |out - src|_inf = {worst:.3e}", "<= 1e-9", limit=5.0)


@_timed
def check_step_equivalence(seed: int = 0) -> CriterionResult:
    """General step with consistency sigma equals the re-noised clean estimate."""
    sched = make_schedule(1000)
    model = AnalyticMixtureDenoiser(
        MixtureParams(np.array([0.3, 0.7]), np.array([[-1.0, 0.0], [2.0, 1.0]]), np.array([0.1, 0.2])), sched
    )
    src = SeededNoiseSource(seed, 7)
    policy = SigmaPolicy.consistency()
    worst = 0.0
    for t in range(1, sched.T + 1):
        z = src.draw(2)
        eps = model(z, t)
        noise = src.draw(2)
        sigma = sigma_at(sched, policy, t)
        general = ddim_step(z, t, eps, sched, sigma, noise)
        a_prev = sched.a(t - 1)
        renoised = math.sqrt(a_prev) * predicted_x0(z, t, eps, sched) + math.sqrt(1.0 - a_prev) * noise
        worst = max(worst, float(np.max(np.abs(general - renoised))))
    return CriterionResult(3, "step / re-noise equivalence", worst <= 1e-12, f"max |diff|_inf = {worst:.3e}", "<= 1e-12")


@_timed
def check_inversion_accumulation(cfg: RunConfig | None = None) -> CriterionResult:
    """Naive inversion error shrinks with more steps; the stored-noise oracle is exact."""
    cfg = cfg or RunConfig()
    rows = roundtrip_sweep(cfg)
    means = roundtrip_means(rows)
    counts = list(means)
    naive = [means[n][0] for n in counts]
    monotone = all(b <= a for a, b in zip(naive, naive[1:]))
    exact_ok = all(r.report.exact_mse <= 1e-10 for r in rows)
    ordered = all(r.report.naive_mse >= r.report.exact_mse for r in rows)
    measured = ", ".join(f"{n}: {v:.3e}" for n, v in zip(counts, naive))
    measured += f"; max exact {max(r.report.exact_mse for r in rows):.1e}"
    return CriterionResult(
        4,
        "inversion error accumulation",
        monotone and exact_ok and ordered,
        f"mean naive MSE {measured}",
        "non-increasing; exact <= 1e-10; naive >= exact",
        limit=30.0,
    )


@_timed
def check_gradient(n: int = 100, seed: int = 0, h: float = 1e-5) -> CriterionResult:
    """Closed-form mixture score against central differences of the log density."""
    sched = make_schedule()
    params = MixtureParams(np.array([0.3, 0.7]), np.array([[-1.0, 0.0], [2.0, 1.0]]), np.array([0.1, 0.2]))
    rng = _rng(seed)
    worst = 0.0
    for _ in range(n):
        t = int(rng.integers(1, sched.T + 1))
        z = rng.normal(0.5, 2.0, 2)
        exact = mixture_score(params, sched, z, t)
        fd = score_finite_diff(params, sched, z, t, h)
        worst = max(worst, float(np.linalg.norm(exact - fd) / (np.linalg.norm(exact) + 1e-12)))
    return CriterionResult(5, "denoiser gradient check", worst < 1e-4, f"max rel err = {worst:.3e}", "< 1e-4", limit=1.0)


def naive_phi(edited, source, query, h: float) -> np.ndarray:
    """Scalar double loop over particles and coordinates; shares no code with the library."""
    n, d = len(edited), len(query)
    out = [0.0] * d
    for j in range(n):
        sq = 0.0
        for k in range(d):
            sq += (edited[j][k] - query[k]) ** 2
        kv = math.exp(-sq / (2.0 * h * h))
        for k in range(d):
            grad = -(edited[j][k] - query[k]) / (h * h) * kv
            out[k] += kv * (edited[j][k] - source[j][k]) + grad
    return np.array([v / n for v in out])


@_timed
def check_svgd_oracle(n: int = 50, seed: int = 0) -> CriterionResult:
    """Particle update direction against the scalar double loop, plus the N=1 fixed point."""
    rng = _rng(seed)
    worst = 0.0
    for _ in range(n):
        N = int(rng.integers(1, 6))
        d = int(rng.integers(1, 4))
        edited = rng.normal(0, 1, (N, d))
        source = rng.normal(0, 1, (N, d))
        h = float(rng.uniform(0.3, 2.0))
        ps = ParticleSet(edited, source)
        batch = phi_hat_all(ps, h)
        for i in range(N):
            ref = naive_phi(edited.tolist(), source.tolist(), edited[i].tolist(), h)
            worst = max(worst, float(np.max(np.abs(phi_hat(ps, edited[i], h) - ref))))
            worst = max(worst, float(np.max(np.abs(batch[i] - ref))))
        q = rng.normal(0, 1, d)
        ref = naive_phi(edited.tolist(), source.tolist(), q.tolist(), h)
        worst = max(worst, float(np.max(np.abs(phi_hat(ps, q, h) - ref))))

    x = rng.normal(0, 1, (1, 3))
    fixed = ParticleSet(x, x.copy())
    out = tcs_update(fixed, TCSConfig(eta=0.5, L=50))
    fixed_ok = np.array_equal(out.edited, x)
    return CriterionResult(
        6,
        "SVGD oracle equivalence",
        worst <= 1e-12 and fixed_ok,
        f"max |diff| = {worst:.3e}; N=1 fixed point {'exact' if fixed_ok else 'MOVED'}",
        "<= 1e-12; exact fixed point",
    )


def tcs_trace(seed: int = 0, eta: float = 0.5, L: int = 50) -> list[float]:
    cfg = RunConfig(pipeline=PipelineConfig(seed=seed, tcs=TCSConfig(eta=eta, L=L)))
    return run_edit(cfg).result.mmd_trace


@_timed
def check_tcs_convergence(seeds=(0, 1, 2)) -> CriterionResult:
    """MMD between edited and source frames falls monotonically after a burn-in."""
    ok, parts = True, []
    for seed in seeds:
        tr = tcs_trace(seed)
        mono = all(b <= a for a, b in zip(tr[TCS_MONOTONE_FROM:], tr[TCS_MONOTONE_FROM + 1:]))
        ratio = tr[-1] / tr[0]
        ok &= mono and tr[-1] <= TCS_MMD_RATIO * tr[0]
        parts.append(f"seed {seed}: ratio {ratio:.2e}{'' if mono else ' (non-monotone)'}")
    return CriterionResult(
        7, "TCS convergence", ok, "; ".join(parts), f"monotone from iter {TCS_MONOTONE_FROM}; final <= {TCS_MMD_RATIO:g} x initial", limit=10.0
    )


@_timed
def check_ablation(cfg: RunConfig | None = None) -> CriterionResult:
    """Dropping TCS roughens the video; dropping CCS loses source content."""
    runs = run_ablation(cfg or RunConfig())
    rep = {v: r.result.report for v, r in runs.items()}
    rough = (rep["full"]["roughness_final"], rep["no-tcs"]["roughness_final"])
    content = (rep["full"]["content_final"], rep["no-ccs"]["content_final"])
    return CriterionResult(
        8,
        "ablation direction",
        rough[0] < rough[1] and content[0] < content[1],
        f"roughness full {rough[0]:.4f} vs no-tcs {rough[1]:.4f}; content full {content[0]:.4f} vs no-ccs {content[1]:.4f}",
        "full < ablated on both",
        limit=60.0,
    )


@_timed
def check_fidelity(seed: int = 0) -> CriterionResult:
    """Edited video stays within the pinned distance of the ground truth; frame 1 untouched."""
    cfg = RunConfig(pipeline=PipelineConfig(seed=seed))
    run = run_edit(cfg)
    first_edit = run.src[0] + run.truth_delta
    passthrough = run.result.final[0].tobytes() == first_edit.tobytes()
    content = metric_content(run.result.final, run.src, ToyEdit(run.truth_delta))
    return CriterionResult(
        9,
        "end-to-end edit fidelity",
        content <= FIDELITY_THRESHOLD and passthrough,
        f"content {content:.4f}; first frame {'bit-exact' if passthrough else 'CHANGED'}",
        f"<= {FIDELITY_THRESHOLD}; bit-exact first frame",
    )


def produce_outputs(cfg: RunConfig, out: Path) -> list[Path]:
    """Every CSV the accept command emits besides its own results table."""
    paths = write_roundtrip(roundtrip_sweep(cfg, cfg.pipeline.threads), out)
    paths += write_report(run_edit(cfg), out)
    paths.append(write_ablation(run_ablation(cfg), out))
    return paths


@_timed
def check_determinism(cfg: RunConfig | None = None) -> CriterionResult:
    """Two runs from the same configuration write byte-identical CSVs."""
    cfg = cfg or RunConfig()
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp, "a"), Path(tmp, "b")
        pa = produce_outputs(cfg, a)
        produce_outputs(cfg, b)
        names = sorted(p.name for p in pa if p.suffix == ".csv")
        differ = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
    return CriterionResult(
        10,
        "determinism",
        not differ,
        f"{len(names)} CSV files compared, {len(differ)} differ" + (f": {differ}" if differ else ""),
        "byte-identical",
    )


CHECKS = (
    check_anchoring,
    check_calibration_off,
    check_step_equivalence,
    check_inversion_accumulation,
    check_gradient,
    check_svgd_oracle,
    check_tcs_convergence,
    check_ablation,
    check_fidelity,
    check_determinism,
)


def reference_eta_report(seed: int = 0) -> str:
    """Informational: the same trace with the reference step size (not enforced)."""
    from .tcs import REFERENCE_ETA

    tr = tcs_trace(seed, eta=REFERENCE_ETA)
    mono = all(b <= a for a, b in zip(tr[TCS_MONOTONE_FROM:], tr[TCS_MONOTONE_FROM + 1:]))
    return f"eta={REFERENCE_ETA:g}: mmd initial {tr[0]:.4e}, final {tr[-1]:.4e}, monotone after burn-in: {mono}"


def run_all(cfg: RunConfig | None = None) -> list[CriterionResult]:
    results = []
    for check in CHECKS:
        kwargs = {"cfg": cfg} if check in (check_inversion_accumulation, check_ablation, check_determinism) and cfg else {}
        results.append(check(**kwargs))
    return results
