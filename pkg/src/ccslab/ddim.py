"""DDIM sampling, naive inversion and an exact stored-noise inversion oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .denoiser import UNCONDITIONED, Conditioning, DenoiserModel, predict_noise
from .schedule import NoiseSchedule, SeededNoiseSource, SigmaPolicy, adjustment_coefficient, sigma_at

__all__ = [
    "TrajectoryRecord",
    "Trajectory",
    "RoundtripReport",
    "predicted_x0",
    "ddim_step",
    "ddim_sample",
    "ddim_invert_naive",
    "invert_exact_from_trajectory",
    "roundtrip_error",
    "mse",
]


@dataclass(frozen=True)
class TrajectoryRecord:
    t: int
    z_t: np.ndarray
    eps_hat: np.ndarray
    z0_pred: np.ndarray


@dataclass
class Trajectory:
    """Per-step records plus the latent the run ended on.

    ``targets[k]`` is the timestep record ``k`` stepped to (sampling) or came
    from (inversion); the last sampling target is always 0.
    """

    records: list[TrajectoryRecord] = field(default_factory=list)
    targets: list[int] = field(default_factory=list)
    final: np.ndarray | None = None
    policy: SigmaPolicy = field(default_factory=SigmaPolicy.zero)
    direction: str = "sampling"
    schedule: NoiseSchedule | None = None

    @property
    def timesteps(self) -> list[int]:
        return [r.t for r in self.records]

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class RoundtripReport:
    steps: int
    naive_mse: float
    exact_mse: float
    per_step_drift: list[float]


def mse(a, b) -> float:
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


def predicted_x0(z_t, t: int, eps_hat, schedule: NoiseSchedule) -> np.ndarray:
    a_t = schedule.a(t)
    return (z_t - math.sqrt(1.0 - a_t) * eps_hat) / math.sqrt(a_t)


def ddim_step(z_t, t: int, eps_hat, schedule: NoiseSchedule, sigma_t: float, noise=None, t_prev: int | None = None) -> np.ndarray:
    """One DDIM update ``z_t -> z_{t_prev}``.

    ``sqrt(a_prev) * x0_pred + sqrt(1 - a_prev - sigma^2) * eps_hat + sigma * noise``

    Raises:
        ValueError: when ``1 - a_prev - sigma_t**2`` is negative beyond rounding.
    """
    if t_prev is None:
        t_prev = t - 1
    a_prev = schedule.a(t_prev)
    coef = adjustment_coefficient(a_prev, sigma_t, t)
    z_t = np.asarray(z_t, dtype=np.float64)
    out = math.sqrt(a_prev) * predicted_x0(z_t, t, eps_hat, schedule)
    if coef:
        out = out + coef * eps_hat
    if sigma_t != 0.0:
        if noise is None:
            raise ValueError("sigma_t > 0 requires a noise sample")
        out = out + sigma_t * noise
    return out


def _check_monotone(steps, increasing: bool):
    steps = [int(s) for s in steps]
    if not steps:
        raise ValueError("empty timestep list")
    pairs = zip(steps, steps[1:])
    if not all((b > a) if increasing else (b < a) for a, b in pairs):
        kind = "increasing" if increasing else "decreasing"
        raise ValueError(f"timesteps must be strictly {kind}: {steps}")
    return steps


def ddim_sample(
    model: DenoiserModel,
    z_T,
    schedule: NoiseSchedule,
    steps,
    policy: SigmaPolicy = SigmaPolicy.zero(),
    cond: Conditioning = UNCONDITIONED,
    source: SeededNoiseSource | None = None,
    eps_override=None,
) -> tuple[np.ndarray, Trajectory]:
    """Run :func:`ddim_step` down the timestep list and finally to ``t = 0``.

    ``eps_override``, when given, supplies the noise prediction per step
    instead of the model (used to replay stored trajectories).
    """
    steps = _check_monotone(steps, increasing=False)
    targets = steps[1:] + [0]
    z = np.array(z_T, dtype=np.float64)
    traj = Trajectory(policy=policy, direction="sampling", targets=list(targets), schedule=schedule)
    for k, (t, t_prev) in enumerate(zip(steps, targets)):
        eps = predict_noise(model, z, t, cond) if eps_override is None else np.asarray(eps_override[k])
        traj.records.append(TrajectoryRecord(t, z, eps, predicted_x0(z, t, eps, schedule)))
        sigma = sigma_at(schedule, policy, t, t_prev)
        noise = None
        if sigma != 0.0:
            if source is None:
                raise ValueError(f"policy {policy} needs a noise source")
            noise = source.draw(z.size)
        z = ddim_step(z, t, eps, schedule, sigma, noise, t_prev=t_prev)
    traj.final = z
    return z, traj


def _inversion_update(z_prev, t_prev: int, t: int, eps, schedule: NoiseSchedule) -> np.ndarray:
    # sampling step solved for z_t, given the noise prediction at t
    a_t = schedule.a(t)
    a_prev = schedule.a(t_prev)
    return (
        math.sqrt(a_t) * z_prev - math.sqrt(a_t) * math.sqrt(1.0 - a_prev) * eps
    ) / math.sqrt(a_prev) + math.sqrt(1.0 - a_t) * eps


def ddim_invert_naive(
    model: DenoiserModel,
    z_0,
    schedule: NoiseSchedule,
    steps,
    cond: Conditioning = UNCONDITIONED,
    eps_timestep: str = "target",
) -> tuple[np.ndarray, Trajectory]:
    """DDIM inversion with ``eps(z_t, t)`` approximated by ``eps(z_{t_prev}, t)``.

    ``steps`` is increasing and starts at the smallest sampling timestep; the
    first transition leaves ``t = 0``. ``eps_timestep="source"`` evaluates the
    model at ``t_prev`` instead (at ``t`` for the transition out of 0).
    """
    if eps_timestep not in ("target", "source"):
        raise ValueError(f"eps_timestep must be 'target' or 'source', got {eps_timestep!r}")
    steps = _check_monotone(steps, increasing=True)
    z = np.array(z_0, dtype=np.float64)
    traj = Trajectory(
        policy=SigmaPolicy.zero(), direction="inversion", targets=[0] + steps[:-1], schedule=schedule
    )
    for t_prev, t in zip(traj.targets, steps):
        t_eval = t if eps_timestep == "target" or t_prev == 0 else t_prev
        eps = predict_noise(model, z, t_eval, cond)
        z = _inversion_update(z, t_prev, t, eps, schedule)
        traj.records.append(TrajectoryRecord(t, z, eps, predicted_x0(z, t, eps, schedule)))
    traj.final = z
    return z, traj


def invert_exact_from_trajectory(traj: Trajectory, schedule: NoiseSchedule | None = None) -> np.ndarray:
    """Replay a deterministic sampling trajectory backwards with its stored
    noise predictions. Exact up to rounding since no approximation is made."""
    if traj.direction != "sampling":
        raise ValueError("exact inversion needs a sampling trajectory")
    if not traj.policy.deterministic:
        raise ValueError(f"cannot invert a trajectory sampled with sigma policy {traj.policy}")
    if traj.final is None:
        raise ValueError("trajectory has no final latent")
    schedule = schedule or traj.schedule
    z = np.array(traj.final, dtype=np.float64)
    for rec, t_prev in zip(reversed(traj.records), reversed(traj.targets)):
        z = _inversion_update(z, t_prev, rec.t, rec.eps_hat, schedule)
    return z


def roundtrip_error(
    model: DenoiserModel,
    z_0,
    schedule: NoiseSchedule,
    steps,
    cond: Conditioning = UNCONDITIONED,
    eps_timestep: str = "target",
) -> RoundtripReport:
    """Invert ``z_0`` naively, sample back, and compare.

    ``steps`` are the (decreasing) sampling timesteps. ``exact_mse`` inverts the
    reconstruction's own trajectory with the stored-noise oracle and samples
    again; it measures the oracle, not the model.
    """
    steps = _check_monotone(steps, increasing=False)
    z_0 = np.asarray(z_0, dtype=np.float64)
    z_T, inv = ddim_invert_naive(model, z_0, schedule, steps[::-1], cond, eps_timestep)
    recon, traj = ddim_sample(model, z_T, schedule, steps, SigmaPolicy.zero(), cond)

    z_T_exact = invert_exact_from_trajectory(traj, schedule)
    recon_exact, _ = ddim_sample(model, z_T_exact, schedule, steps, SigmaPolicy.zero(), cond)

    drift = [
        float(np.linalg.norm(predict_noise(model, rec.z_t, rec.t, cond) - rec.eps_hat))
        for rec in inv.records
    ]
    return RoundtripReport(
        steps=len(steps),
        naive_mse=mse(recon, z_0),
        exact_mse=mse(recon_exact, recon),
        per_step_drift=drift,
    )
