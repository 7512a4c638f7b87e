"""INI-style run configuration.

Every key is optional; missing keys take the library defaults. Unknown
sections or keys are rejected with the line they appear on.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .pipeline import PipelineConfig, VideoConfig, WorldConfig
from .tcs import TCSConfig

__all__ = ["ConfigError", "RoundtripConfig", "RunConfig", "load_config", "parse_config", "config_hash"]


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = path or "<config>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True)
class RoundtripConfig:
    step_counts: tuple[int, ...] = (10, 50, 200)
    seeds: int = 20
    mean: tuple[float, ...] = (1.0, -0.5)
    std: float = 0.5
    eps_timestep: str = "target"


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    roundtrip: RoundtripConfig = field(default_factory=RoundtripConfig)
    null_edit: bool = False

    def to_text(self) -> str:
        p = self.pipeline
        rt = self.roundtrip
        sections = {
            "run": {"seed": p.seed, "threads": p.threads, "null_edit": self.null_edit},
            "schedule": {"T": p.T, "beta_start": p.beta_start, "beta_end": p.beta_end},
            "prompt": {"lambda1": p.lambda1, "embedder": p.embedder},
            "ccs": {
                "lambda2": p.lambda2,
                "n_steps": p.ccs_steps,
                "companion": p.companion,
                "delta_eps_at": p.delta_eps_at,
            },
            "tcs": {"eta": p.tcs.eta, "L": p.tcs.L, "bandwidth": p.tcs.bandwidth},
            "video": {f.name: getattr(p.video, f.name) for f in fields(VideoConfig)},
            "world": {f.name: getattr(p.world, f.name) for f in fields(WorldConfig)},
            "roundtrip": {
                "step_counts": ", ".join(map(str, rt.step_counts)),
                "seeds": rt.seeds,
                "mean": ", ".join(repr(x) for x in rt.mean),
                "std": rt.std,
                "eps_timestep": rt.eps_timestep,
            },
        }
        out = io.StringIO()
        for name, items in sections.items():
            out.write(f"[{name}]\n")
            for k, v in items.items():
                if isinstance(v, bool):
                    v = "true" if v else "false"
                elif isinstance(v, float):
                    v = repr(v)
                out.write(f"{k} = {v}\n")
            out.write("\n")
        return out.getvalue()


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(cfg.to_text().encode()).hexdigest()[:16]


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines, section = {}, None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            lines[(section, "")] = n
        elif section and "=" in line and not line.startswith(("#", ";")):
            lines[(section, line.split("=", 1)[0].strip().lower())] = n
    return lines


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _bandwidth(text: str):
    return "median" if text.strip() == "median" else float(text)


# section -> key -> (target, converter)
_SCHEMA = {
    "run": {"seed": ("seed", int), "threads": ("threads", int), "null_edit": ("null_edit", _bool)},
    "schedule": {"t": ("T", int), "beta_start": ("beta_start", float), "beta_end": ("beta_end", float)},
    "prompt": {"lambda1": ("lambda1", float), "embedder": ("embedder", str)},
    "ccs": {
        "lambda2": ("lambda2", float),
        "n_steps": ("ccs_steps", int),
        "companion": ("companion", str),
        "delta_eps_at": ("delta_eps_at", str),
    },
    "tcs": {"eta": ("eta", float), "l": ("L", int), "bandwidth": ("bandwidth", _bandwidth)},
    "video": {
        "n_frames": ("n_frames", int),
        "dim": ("dim", int),
        "drift": ("drift", float),
        "jitter": ("jitter", float),
    },
    "world": {
        "n_components": ("n_components", int),
        "separation": ("separation", float),
        "component_std": ("component_std", float),
        "edit_norm": ("edit_norm", float),
    },
    "roundtrip": {
        "step_counts": ("step_counts", lambda s: tuple(int(x) for x in s.split(",") if x.strip())),
        "seeds": ("seeds", int),
        "mean": ("mean", _floats),
        "std": ("std", float),
        "eps_timestep": ("eps_timestep", str),
    },
}


def parse_config(text: str, path: str | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=path or "<config>")
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any [section]", path, exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", path, line) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], path, getattr(exc, "lineno", None)) from None

    lines = _key_lines(text)
    values: dict[str, dict] = {name: {} for name in _SCHEMA}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", path, lines.get((section, "")))
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]", path, line)
            target, conv = _SCHEMA[section][key]
            try:
                values[section][target] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for '{key}': {exc}", path, line) from None

    def build(what, factory, base=None, **extra):
        try:
            return replace(base, **extra) if base is not None else factory(**extra)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid [{what}] settings: {exc}", path, lines.get((what, ""))) from None

    run = values["run"]
    null_edit = run.pop("null_edit", False)
    defaults = PipelineConfig()
    tcs = build("tcs", TCSConfig, **values["tcs"])
    video = build("video", VideoConfig, **values["video"])
    world = build("world", WorldConfig, **values["world"])
    flat = {**values["schedule"], **values["prompt"], **values["ccs"], **run}
    pipeline = build("run", None, defaults, tcs=tcs, video=video, world=world, **flat)
    # surface schedule / ccs range errors at load time
    try:
        pipeline.ccs_config()
        pipeline.make_embedder()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from None
    roundtrip = build("roundtrip", RoundtripConfig, **values["roundtrip"])
    return RunConfig(pipeline=pipeline, roundtrip=roundtrip, null_edit=null_edit)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))
