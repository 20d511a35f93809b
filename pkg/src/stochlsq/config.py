"""``key = value`` run configuration files.

Keys are ``section.name``. Inside a ``[section]`` header bare names refer to
that section; outside, a bare name is accepted when it is unambiguous
(``lambda1``) or when it names a section, which sets that section's kind
(``strategy = quasinewton`` means ``strategy.kind = quasinewton``).
"""

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union, get_args, get_origin

from .directions import Gradient, Newton, QuasiNewton
from .errors import ConfigError
from .matrix_io import read_matrix
from .problem import LsProblem, generate_regression
from .sketch import (
    GeneralizedKaczmarz,
    KaczmarzUniformColumns,
    SparseRademacher,
    SparseRandom,
    block_kaczmarz,
    kaczmarz_partition,
)
from .solver import Constant, Harmonic, StoppingRule

SKETCH_FAMILIES = ("block_kaczmarz", "kaczmarz", "sparse_rademacher", "sparse_random")


@dataclass(frozen=True)
class ProblemConfig:
    mode: str = "generate"
    m: Optional[int] = None
    n: Optional[int] = None
    sigma: float = 1.0
    seed: int = 0
    a_path: Optional[str] = None
    b_path: Optional[str] = None


@dataclass(frozen=True)
class SketchConfig:
    family: str = "block_kaczmarz"
    ell: Optional[int] = None
    psi: float = 1.0 / 3.0
    beta: Optional[float] = None
    p: Optional[int] = None
    block_size: Optional[int] = None
    q_path: Optional[str] = None


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "quasinewton"
    lambda1: float = 1e-5
    lambda2: float = 0.0
    cap: float = math.inf
    svd_tol: float = 0.0
    strict_adapted: bool = False


@dataclass(frozen=True)
class ScheduleConfig:
    kind: str = "harmonic"
    c: float = 1.0


@dataclass(frozen=True)
class StopConfig:
    max_iters: int = 1000
    tol: Optional[float] = 1e-4
    window: int = 10
    mode: str = "both"


@dataclass(frozen=True)
class RunOptions:
    x0: str = "zero"
    trace_every: int = 10
    out: str = "trace.csv"


@dataclass(frozen=True)
class RefsConfig:
    xhat: bool = True
    xtilde_mode: str = "none"


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    sketch: SketchConfig = field(default_factory=SketchConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    stop: StopConfig = field(default_factory=StopConfig)
    run: RunOptions = field(default_factory=RunOptions)
    refs: RefsConfig = field(default_factory=RefsConfig)
    base_dir: Path = Path(".")

    def with_seed(self, seed):
        return replace(self, problem=replace(self.problem, seed=int(seed)))

    def resolve(self, path):
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


SECTIONS = {f.name: f.default_factory for f in fields(RunConfig) if f.name != "base_dir"}
KIND_KEY = {"problem": "mode", "sketch": "family", "strategy": "kind", "schedule": "kind"}
CHOICES = {
    "problem.mode": ("generate", "files"),
    "sketch.family": SKETCH_FAMILIES,
    "strategy.kind": ("gradient", "newton", "quasinewton"),
    "schedule.kind": ("harmonic", "constant"),
    "stop.mode": ("any", "both"),
    "run.x0": ("zero", "random"),
    "refs.xtilde_mode": ("none", "kaczmarz", "montecarlo"),
}
_TYPES = {}
for _sec, _factory in SECTIONS.items():
    for _f in fields(_factory()):
        _TYPES[f"{_sec}.{_f.name}"] = _f.type


def _base_type(typ):
    """``(base, optional)`` for int/float/str/bool and their Optional forms."""
    if get_origin(typ) is Union:
        args = [t for t in get_args(typ) if t is not type(None)]
        return args[0], True
    return typ, False


def _convert(key, raw, lineno):
    base, optional = _base_type(_TYPES[key])
    text = raw.strip()
    if optional and text.lower() == "none":
        return None
    try:
        if base is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if base is int:
            val = float(text)
            if not val.is_integer():
                raise ValueError
            return int(val)
        if base is float:
            val = float(text)
            if math.isnan(val):
                raise ValueError
            return val
    except ValueError:
        raise ConfigError(f"expected {base.__name__}, got {text!r}",
                          line=lineno, key=key) from None
    if key in CHOICES:
        value = text.replace("-", "_")
        if value not in CHOICES[key]:
            raise ConfigError(f"must be one of {', '.join(CHOICES[key])}, got {text!r}",
                              line=lineno, key=key)
        return value
    if not text:
        raise ConfigError("empty value", line=lineno, key=key)
    return text


def _resolve_key(name, section, lineno):
    if "." in name:
        if name not in _TYPES:
            raise ConfigError("unknown key", line=lineno, key=name)
        return name
    if section is not None:
        key = f"{section}.{name}"
        if key in _TYPES:
            return key
        if name not in KIND_KEY:
            raise ConfigError("unknown key", line=lineno, key=key)
    if name in KIND_KEY:
        return f"{name}.{KIND_KEY[name]}"
    matches = [k for k in _TYPES if k.split(".", 1)[1] == name]
    if len(matches) == 1:
        return matches[0]
    if matches:
        raise ConfigError(f"ambiguous key, use one of {', '.join(matches)}", line=lineno, key=name)
    raise ConfigError("unknown key", line=lineno, key=name)


def parse_config_text(text, base_dir=Path(".")):
    values = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", line=lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
        name, raw = (s.strip() for s in line.split("=", 1))
        key = _resolve_key(name, section, lineno)
        if key in values:
            raise ConfigError("duplicate key", line=lineno, key=key)
        values[key] = (_convert(key, raw, lineno), lineno)

    parts = {}
    for sec, factory in SECTIONS.items():
        kwargs = {k.split(".", 1)[1]: v for k, (v, _) in values.items() if k.startswith(sec + ".")}
        parts[sec] = replace(factory(), **kwargs)
    cfg = RunConfig(**parts, base_dir=Path(base_dir))
    _validate(cfg, {k: ln for k, (_, ln) in values.items()})
    return cfg


def parse_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    return parse_config_text(text, path.parent)


def _validate(cfg, lines):
    def fail(key, msg):
        raise ConfigError(msg, line=lines.get(key), key=key)

    pr = cfg.problem
    for key in ("m", "n"):
        v = getattr(pr, key)
        if v is not None and v < 1:
            fail(f"problem.{key}", "must be >= 1")
    if pr.sigma < 0:
        fail("problem.sigma", "must be >= 0")
    if pr.mode == "files":
        for key in ("a_path", "b_path"):
            v = getattr(pr, key)
            if v is None:
                fail(f"problem.{key}", "required when problem.mode = files")
            if not cfg.resolve(v).exists():
                fail(f"problem.{key}", f"file {v} does not exist")
    sk = cfg.sketch
    for key in ("ell", "p", "block_size"):
        v = getattr(sk, key)
        if v is not None and v < 1:
            fail(f"sketch.{key}", "must be >= 1")
    if not 0 < sk.psi <= 1:
        fail("sketch.psi", "must lie in (0, 1]")
    if sk.beta is not None and sk.beta <= 0:
        fail("sketch.beta", "must be positive")
    if sk.q_path is not None and not cfg.resolve(sk.q_path).exists():
        fail("sketch.q_path", f"file {sk.q_path} does not exist")
    st = cfg.strategy
    if st.lambda1 <= 0:
        fail("strategy.lambda1", "must be positive")
    if st.lambda2 < 0:
        fail("strategy.lambda2", "must be >= 0")
    if st.cap <= st.lambda2:
        fail("strategy.cap", "must exceed lambda2")
    if st.svd_tol < 0:
        fail("strategy.svd_tol", "must be >= 0")
    if cfg.schedule.c <= 0:
        fail("schedule.c", "must be positive")
    sp = cfg.stop
    if sp.max_iters < 1:
        fail("stop.max_iters", "must be >= 1")
    if sp.tol is not None and sp.tol <= 0:
        fail("stop.tol", "must be positive or none")
    if sp.window < 1:
        fail("stop.window", "must be >= 1")
    if cfg.run.trace_every < 1:
        fail("run.trace_every", "must be >= 1")


def _matrix_format(path):
    return "csv" if str(path).lower().endswith(".csv") else "f64le-binary"


def build_problem(cfg):
    pr = cfg.problem
    if pr.mode == "generate":
        for key in ("m", "n"):
            if getattr(pr, key) is None:
                raise ConfigError("required when problem.mode = generate", key=f"problem.{key}")
        return generate_regression(pr.m, pr.n, pr.sigma, pr.seed)
    a_path, b_path = cfg.resolve(pr.a_path), cfg.resolve(pr.b_path)
    return LsProblem(read_matrix(a_path, _matrix_format(a_path)),
                     read_matrix(b_path, _matrix_format(b_path)))


def default_ell(cfg, m, n=None):
    if cfg.sketch.ell is not None:
        return min(cfg.sketch.ell, m)
    return min(m, 2 * n) if n else m


def build_sketch(cfg, m, n=None, family=None):
    """SketchSpec for ``m`` rows; ``family`` overrides ``sketch.family``."""
    sk = cfg.sketch
    family = family or sk.family
    ell = default_ell(cfg, m, n)
    if family == "block_kaczmarz":
        size = min(sk.block_size or ell, m)
        if sk.q_path is not None:
            q_path = cfg.resolve(sk.q_path)
            q = read_matrix(q_path, _matrix_format(q_path))
            full, rest = divmod(m, size)
            return kaczmarz_partition(q, [size] * full + ([rest] if rest else []), m)
        return block_kaczmarz(m, size)
    if family == "kaczmarz":
        return KaczmarzUniformColumns(m, ell)
    if family == "sparse_rademacher":
        return SparseRademacher(m, ell, min(sk.p or ell, m))
    if family == "sparse_random":
        return SparseRandom(m, ell, sk.psi, sk.beta)
    raise ConfigError(f"unknown family {family!r}", key="sketch.family")


def build_strategy(cfg):
    st = cfg.strategy
    if st.kind == "gradient":
        return Gradient()
    if st.kind == "newton":
        return Newton(st.svd_tol)
    return QuasiNewton(st.lambda1, st.lambda2, st.cap, st.strict_adapted)


def build_schedule(cfg):
    cls = Harmonic if cfg.schedule.kind == "harmonic" else Constant
    return cls(cfg.schedule.c)


def build_rule(cfg):
    sp = cfg.stop
    return StoppingRule(sp.max_iters, sp.tol, sp.window, sp.mode)


def sketch_config_lines(spec):
    """Config lines that rebuild ``spec`` through ``build_sketch``."""
    if isinstance(spec, GeneralizedKaczmarz):
        size = spec.blocks[0][1]
        if spec.q is not None or block_kaczmarz(spec.m, size).blocks != spec.blocks:
            raise ValueError("only identity blocks of equal size serialize to config lines")
        return ["sketch.family = block_kaczmarz", f"sketch.block_size = {spec.blocks[0][1]}"]
    if isinstance(spec, KaczmarzUniformColumns):
        return ["sketch.family = kaczmarz", f"sketch.ell = {spec.ell}"]
    if isinstance(spec, SparseRademacher):
        return ["sketch.family = sparse_rademacher", f"sketch.ell = {spec.ell}", f"sketch.p = {spec.p}"]
    if isinstance(spec, SparseRandom):
        return ["sketch.family = sparse_random", f"sketch.ell = {spec.ell}",
                f"sketch.psi = {spec.psi!r}", f"sketch.beta = {spec.beta!r}"]
    raise TypeError(f"unknown sketch spec {spec!r}")

