"""Run configuration files.

An INI file with one section per concern::

    [env]
    name = tiger
    gamma = 0.95

    [solver]
    preset = small        ; optional, fills Table-style defaults first
    xi = 0.05
    time_budget = 300

    [qlearning]
    episodes = 20000

    [output]
    dir = runs/tiger
    reuse_vtable = true

    [eval]
    episodes = 10000
    seed = 0

Any error is reported against the line of the offending key.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .envs import ConfigError, make_env
from .heuristics import QLearningConfig
from .solver import SolverConfig

__all__ = ["RunConfig", "load_config", "ConfigError"]

_SECTIONS = ("env", "solver", "qlearning", "output", "eval")


def _optional(cast):
    def conv(v):
        return None if v.strip().lower() in ("", "none") else cast(v)
    conv.__name__ = f"optional {cast.__name__}"
    return conv


def _boolean(v):
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


_boolean.__name__ = "boolean"

_SOLVER_TYPES = {
    "epsilon": float, "xi": float, "nb_particles": int, "nb_sim": int, "nb_eval": int,
    "n_star": int, "c": float, "k_a": float, "alpha_a": float, "n_max_fsc": int,
    "n_clusters": int, "kmeans_max_iter": int, "seed": int, "time_budget": _optional(float),
    "max_iterations": _optional(int), "n_jobs": int, "eval_chunk": int,
}
_QL_TYPES = {
    "episodes": int, "max_steps": int, "learning_rate": float, "eps_start": float,
    "eps_end": float, "n_envs": int, "grid_points": int, "seed": int,
}
_OUTPUT_TYPES = {"dir": str, "policy": str, "vtable": str, "reuse_vtable": _boolean,
                 "include_beliefs": _boolean}
_EVAL_TYPES = {"episodes": int, "seed": int}


@dataclass
class RunConfig:
    env_name: str
    env_params: dict
    solver: SolverConfig
    qlearning: QLearningConfig
    output_dir: Path = Path("pomcgs-out")
    policy_name: str = "policy.txt"
    vtable_path: Optional[Path] = None
    reuse_vtable: bool = True
    include_beliefs: bool = False
    eval_episodes: int = 10_000
    eval_seed: int = 0
    source: Optional[str] = None
    lines: dict = field(default_factory=dict, repr=False)

    def make_model(self):
        return make_env(self.env_name, **self.env_params)

    @property
    def seed(self) -> int:
        return self.solver.seed

    def canonical(self) -> dict:
        """Everything that determines the solver output (no paths, no thread count)."""
        return {
            "env": self.env_name,
            "env_params": {k: self.env_params[k] for k in sorted(self.env_params)},
            "solver": self.solver.snapshot(),
            "qlearning": dataclasses.asdict(self.qlearning),
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def policy_path(self) -> Path:
        return self.output_dir / self.policy_name

    @property
    def vtable_cache(self) -> Path:
        return self.vtable_path or (self.output_dir / "vtable.txt")


def _key_lines(text: str) -> dict:
    """Map ``(section, key)`` to its 1-based line number."""
    out = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            out.setdefault((section, None), lineno)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip().lower()), lineno)
    return out


def _convert(section, mapping, types, where):
    out = {}
    for key, value in mapping.items():
        if key not in types:
            raise ConfigError(f"{where(section, key)}unknown key {key!r} in [{section}]")
        cast = types[key]
        try:
            out[key] = cast(value)
        except (TypeError, ValueError):
            raise ConfigError(
                f"{where(section, key)}{section}.{key}={value!r} is not a valid {cast.__name__}"
            ) from None
    return out


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    lines = _key_lines(text)

    def where(section, key=None):
        n = lines.get((section, key)) or lines.get((section, None))
        return f"{source}:{n}: " if n else f"{source}: "

    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        n = getattr(exc, "lineno", None)
        msg = getattr(exc, "message", str(exc)).splitlines()[0]
        raise ConfigError(f"{source}:{n}: {msg}" if n else f"{source}: {msg}") from None

    for sec in parser.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"{where(sec)}unknown section [{sec}]")
    if not parser.has_section("env") or "name" not in parser["env"]:
        raise ConfigError(f"{source}: missing [env] name")

    env = dict(parser["env"])
    env_name = env.pop("name").strip()
    try:
        make_env(env_name, **env)
    except ConfigError as exc:
        bad = next((k for k in env if repr(k) in str(exc)), "name")
        raise ConfigError(f"{where('env', bad)}{exc}") from None

    sol = dict(parser["solver"]) if parser.has_section("solver") else {}
    preset = sol.pop("preset", None)
    sol_kw = _convert("solver", sol, _SOLVER_TYPES, where)
    try:
        if preset is not None:
            solver = SolverConfig.preset(preset.strip(), env_name, **sol_kw)
        else:
            solver = SolverConfig(**sol_kw)
    except ValueError as exc:
        bad = next((k for k in sol_kw if str(exc).startswith(k + " ")), "preset" if preset else None)
        raise ConfigError(f"{where('solver', bad)}solver: {exc}") from None

    ql = _convert("qlearning", dict(parser["qlearning"]) if parser.has_section("qlearning") else {},
                  _QL_TYPES, where)
    ql.setdefault("seed", solver.seed)
    try:
        qlearning = QLearningConfig(**ql)
    except ValueError as exc:
        bad = next((k for k in ql if f".{k} " in str(exc)), None)
        raise ConfigError(f"{where('qlearning', bad)}qlearning: {exc}") from None

    outp = _convert("output", dict(parser["output"]) if parser.has_section("output") else {},
                    _OUTPUT_TYPES, where)
    ev = _convert("eval", dict(parser["eval"]) if parser.has_section("eval") else {},
                  _EVAL_TYPES, where)
    if ev.get("episodes", 1) < 1:
        raise ConfigError(f"{where('eval', 'episodes')}eval.episodes must be >= 1")

    return RunConfig(
        env_name=env_name,
        env_params=env,
        solver=solver,
        qlearning=qlearning,
        output_dir=Path(outp.get("dir", "pomcgs-out")),
        policy_name=outp.get("policy", "policy.txt"),
        vtable_path=Path(outp["vtable"]) if "vtable" in outp else None,
        reuse_vtable=outp.get("reuse_vtable", True),
        include_beliefs=outp.get("include_beliefs", False),
        eval_episodes=ev.get("episodes", 10_000),
        eval_seed=ev.get("seed", 0),
        source=source,
        lines=lines,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, source=str(path))
