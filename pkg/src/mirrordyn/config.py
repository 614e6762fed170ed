"""INI run configuration: parsing, validation, canonical form and fingerprint.

Sections and keys (lists are comma separated)::

    [problem]    kind, d, m, seed, theta, offset_scale, center, cost, a, b, mu_pl, kernel_file
    [geometry]   map
    [schedule]   kind, a, values
    [run]        n_iters, n_runs, base_seed, checkpoint_stride, order
    [experiment] eps_grid, p, eps
    [output]     directory, formats

The fingerprint hashes every section except ``[output]``, so the same
experiment written to different directories carries the same fingerprint.
"""

from __future__ import annotations

import configparser
import io
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from ._hashing import stable_hash
from .errors import ConfigError

SEED_ENV = "MIRRORDYN_SEED"

PROBLEM_KINDS = ("convex", "linear", "nonconvex")
MAPS = ("entropy", "euclidean")
SCHEDULES = ("invsqrt", "constant", "custom")
ORDERS = ("gradient_first", "transition_first")
FORMATS = ("csv", "json")


@dataclass(frozen=True)
class ProblemSection:
    kind: str
    d: int
    m: int
    seed: int = 0
    theta: float = 0.0
    offset_scale: float = 0.5
    center: Optional[tuple] = None
    cost: Optional[tuple] = None
    a: Optional[tuple] = None
    b: Optional[tuple] = None
    mu_pl: Optional[float] = None
    kernel_file: Optional[str] = None


@dataclass(frozen=True)
class GeometrySection:
    map: str = "entropy"


@dataclass(frozen=True)
class ScheduleSection:
    kind: str = "invsqrt"
    a: float = 0.5
    values: Optional[tuple] = None


@dataclass(frozen=True)
class RunSection:
    n_iters: int = 1000
    n_runs: int = 1
    base_seed: int = 0
    checkpoint_stride: int = 1
    order: str = "gradient_first"


@dataclass(frozen=True)
class ExperimentSection:
    eps_grid: tuple = (0.05, 0.1, 0.2, 0.5, 1.0)
    p: float = 0.05
    eps: Optional[float] = None


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    formats: tuple = FORMATS


SECTIONS = {
    "problem": ProblemSection,
    "geometry": GeometrySection,
    "schedule": ScheduleSection,
    "run": RunSection,
    "experiment": ExperimentSection,
    "output": OutputSection,
}

_FLOAT_LISTS = {("problem", "center"), ("problem", "cost"), ("problem", "a"), ("problem", "b"),
                ("schedule", "values"), ("experiment", "eps_grid")}
_STR_LISTS = {("output", "formats")}


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSection
    geometry: GeometrySection = field(default_factory=GeometrySection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    run: RunSection = field(default_factory=RunSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    output: OutputSection = field(default_factory=OutputSection)
    base_dir: Optional[str] = field(default=None, compare=False)

    # -- serialisation --------------------------------------------------------

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def canonical(self) -> dict:
        """Everything that influences results, lists as lists and no output section."""
        out = self.to_dict()
        out.pop("output")
        return _jsonable(out)

    @property
    def fingerprint(self) -> str:
        return stable_hash(self.canonical())

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for name in SECTIONS:
            cp[name] = {}
            for key, value in asdict(getattr(self, name)).items():
                if value is not None:
                    cp[name][key] = _format(value)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, base_dir=None) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        unknown = set(cp.sections()) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
        if "problem" not in cp:
            raise ConfigError("missing [problem] section")
        raw = {name: dict(cp[name]) if name in cp else {} for name in SECTIONS}
        return cls.from_raw(raw, base_dir=base_dir)

    @classmethod
    def from_raw(cls, raw: dict, base_dir=None) -> "RunConfig":
        built = {}
        for name, klass in SECTIONS.items():
            built[name] = _build_section(name, klass, raw.get(name, {}))
        cfg = cls(**built, base_dir=None if base_dir is None else str(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_ini(text, base_dir=path.parent)

    # -- overrides ------------------------------------------------------------

    def with_overrides(self, assignments=(), seed: Optional[int] = None, env=None) -> "RunConfig":
        """Apply ``section.key=value`` strings, then the seed.

        Seed precedence: ``seed`` argument, then ``MIRRORDYN_SEED`` in ``env``,
        then the file's ``run.base_seed``.
        """
        raw = {name: {k: _format(v) for k, v in asdict(getattr(self, name)).items() if v is not None}
               for name in SECTIONS}
        for item in assignments:
            if "=" not in item or "." not in item.split("=", 1)[0]:
                raise ConfigError(f"override {item!r} is not of the form section.key=value")
            lhs, value = item.split("=", 1)
            section, key = lhs.strip().split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(f"unknown section {section!r} in override")
            raw[section][key.strip()] = value.strip()
        env = os.environ if env is None else env
        if seed is None and env.get(SEED_ENV, "").strip():
            seed = _parse_int(env[SEED_ENV], SEED_ENV)
        if seed is not None:
            raw["run"]["base_seed"] = str(int(seed))
        return type(self).from_raw(raw, base_dir=self.base_dir)

    # -- helpers --------------------------------------------------------------

    def kernel_path(self) -> Optional[Path]:
        kf = self.problem.kernel_file
        if kf is None:
            return None
        p = Path(kf)
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p

    def problem_params(self) -> dict:
        pr = self.problem
        params = dict(kind=pr.kind, d=pr.d, m=pr.m, seed=pr.seed, theta=pr.theta,
                      offset_scale=pr.offset_scale)
        kp = self.kernel_path()
        if kp is not None:
            if not kp.is_file():
                raise ConfigError(f"kernel file {kp} does not exist")
            params["kernel_file"] = str(kp)
        if pr.kind == "convex" and pr.center is not None:
            params["center"] = list(pr.center)
        if pr.kind == "linear" and pr.cost is not None:
            params["cost"] = list(pr.cost)
        if pr.kind == "nonconvex":
            params.update(a=None if pr.a is None else list(pr.a), b=None if pr.b is None else list(pr.b),
                          mu_pl=pr.mu_pl)
        return params

    def validate(self) -> None:
        pr, sc, rn, ex, ou = self.problem, self.schedule, self.run, self.experiment, self.output
        _check(pr.kind in PROBLEM_KINDS, f"problem.kind must be one of {PROBLEM_KINDS}")
        _check(pr.d >= 2, "problem.d must be >= 2")
        _check(pr.m >= 1, "problem.m must be >= 1")
        _check(pr.theta >= 0 and math.isfinite(pr.theta), "problem.theta must be finite and >= 0")
        _check(pr.offset_scale >= 0, "problem.offset_scale must be >= 0")
        _check(pr.mu_pl is None or pr.mu_pl > 0, "problem.mu_pl must be positive")
        _check(self.geometry.map in MAPS, f"geometry.map must be one of {MAPS}")
        _check(sc.kind in SCHEDULES, f"schedule.kind must be one of {SCHEDULES}")
        if sc.kind == "custom":
            _check(bool(sc.values), "schedule.values is required for a custom schedule")
        else:
            _check(sc.a > 0 and math.isfinite(sc.a), "schedule.a must be positive")
        _check(rn.n_iters >= 1, "run.n_iters must be >= 1")
        _check(rn.n_runs >= 1, "run.n_runs must be >= 1")
        _check(rn.base_seed >= 0, "run.base_seed must be >= 0")
        _check(rn.checkpoint_stride >= 1, "run.checkpoint_stride must be >= 1")
        _check(rn.order in ORDERS, f"run.order must be one of {ORDERS}")
        _check(len(ex.eps_grid) > 0, "experiment.eps_grid must not be empty")
        _check(all(e >= 0 and math.isfinite(e) for e in ex.eps_grid), "experiment.eps_grid entries must be >= 0")
        _check(0.0 < ex.p < 1.0, "experiment.p must lie in (0, 1)")
        _check(ex.eps is None or ex.eps > 0, "experiment.eps must be positive")
        _check(all(f in FORMATS for f in ou.formats), f"output.formats entries must be in {FORMATS}")


# -- parsing helpers -----------------------------------------------------------

def _check(ok: bool, msg: str) -> None:
    if not ok:
        raise ConfigError(msg)


def _parse_int(text, where):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected an integer, got {text!r}") from None
    if not value.is_integer():
        raise ConfigError(f"{where}: expected an integer, got {text!r}")
    return int(value)


def _parse_float(text, where):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number, got {text!r}") from None


def _split(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _build_section(name, klass, raw: dict):
    known = {f.name: f for f in fields(klass)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, f in known.items():
        if key not in raw:
            continue
        text = raw[key]
        where = f"{name}.{key}"
        if (name, key) in _FLOAT_LISTS:
            kwargs[key] = tuple(_parse_float(t, where) for t in _split(text))
        elif (name, key) in _STR_LISTS:
            kwargs[key] = tuple(_split(text))
        elif str(text).strip().lower() in ("", "none"):
            kwargs[key] = None
        elif f.type in ("int",):
            kwargs[key] = _parse_int(text, where)
        elif f.type in ("float", "Optional[float]"):
            kwargs[key] = _parse_float(text, where)
        else:
            kwargs[key] = str(text).strip()
    try:
        return klass(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def _format(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (tuple, list)):
        return [_jsonable(v) for v in obj]
    return obj


def builtin_config(name: str) -> RunConfig:
    """Reference configurations shipped with the package."""
    if name == "convex":
        return RunConfig(problem=ProblemSection(kind="convex", d=5, m=4, seed=7, theta=2.0),
                         run=RunSection(n_iters=20000, n_runs=200, checkpoint_stride=100),
                         experiment=ExperimentSection(eps_grid=(0.05, 0.1, 0.2, 0.5, 1.0, 2.0)))
    if name == "nonconvex":
        return RunConfig(problem=ProblemSection(kind="nonconvex", d=3, m=4, seed=3, theta=2.0),
                         run=RunSection(n_iters=10000, n_runs=200, checkpoint_stride=100),
                         experiment=ExperimentSection(eps_grid=(0.05, 0.1, 0.5, 1.0)))
    raise KeyError(name)


def replace_section(cfg: RunConfig, section: str, **changes) -> RunConfig:
    return replace(cfg, **{section: replace(getattr(cfg, section), **changes)})
