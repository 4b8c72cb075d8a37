"""Experiment configuration from a flat INI file.

Example::

    [problem]
    kind = diffusion
    m = 31
    d = 4

    [basis]
    kind = total_degree
    n = 3

    [solver]
    method = minres
    rtol = 1e-8

    [preconditioner]
    kind = mean
    order = 2

    [output]
    directory = out
"""
import configparser
from dataclasses import dataclass, field

from .errors import ConfigError
from .krylov import METHODS
from .preconditioners import KINDS

PROBLEM_KINDS = ("identity", "affine", "diffusion", "advection")
ARTIFACTS = ("coefficients", "moments", "history", "summary")
DEFAULT_BENCHMARK_KINDS = ("none", "midpoint", "mean", "largest_eig", "smallest_eig", "random")


@dataclass
class ProblemConfig:
    kind: str
    d: int
    N: int = 10
    m: int = 15
    seed: int = 0
    scale: float = 2.0
    spd: bool = True
    upwind: bool = True
    b0: tuple = None
    b_terms: tuple = None

    @property
    def is_grid(self):
        return self.kind in ("diffusion", "advection")


@dataclass
class BasisConfig:
    kind: str = "total_degree"
    n: int = 2
    orders: tuple = None


@dataclass
class ExperimentConfig:
    problem: ProblemConfig
    basis: BasisConfig = field(default_factory=BasisConfig)
    quadrature_orders: tuple = None
    method: str = "minres"
    rtol: float = 1e-8
    maxiter: int = None
    precond_kind: str = "none"
    precond_order: int = 2
    precond_seed: int = 0
    precond_point: tuple = None
    output_dir: str = "pmgalerkin-out"
    artifacts: tuple = ARTIFACTS
    benchmark: bool = False
    benchmark_kinds: tuple = DEFAULT_BENCHMARK_KINDS
    random_runs: int = 5
    mean_orders: tuple = (2,)
    kl_modes: int = 20
    source: str = "<config>"

    @property
    def d(self):
        return self.problem.d


def _floats(text):
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _words(text):
    return tuple(t.strip() for t in text.split(",") if t.strip())


class _Reader:
    """Typed access to a ConfigParser that names the offending key on failure."""

    def __init__(self, parser, source):
        self.parser = parser
        self.source = source

    def get(self, section, key, conv=str, default=None, required=False):
        if not self.parser.has_option(section, key):
            if required:
                raise ConfigError(f"{self.source}: missing required key '{key}' in section [{section}]")
            return default
        raw = self.parser.get(section, key).strip()
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self.source}: bad value for [{section}] {key} = {raw!r}: {exc}") from None


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _choice(options):
    def conv(text):
        if text not in options:
            raise ValueError(f"choose from {', '.join(options)}")
        return text

    return conv


def parse_config(text, source="<config>"):
    """Parse INI ``text`` into an :class:`ExperimentConfig`.

    Raises:
        ConfigError: on syntax errors (with the line number), missing required
            keys (naming the key) and inconsistent dimensions.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}, line {exc.lineno}: expected a [section] header before {exc.line!r}") from None
    except configparser.ParsingError as exc:
        lines = ", ".join(f"line {ln}: {line!r}" for ln, line in exc.errors)
        raise ConfigError(f"{source}: cannot parse {lines}") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}, line {exc.lineno}: duplicate key '{exc.option}' in [{exc.section}]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}, line {exc.lineno}: duplicate section [{exc.section}]") from None
    r = _Reader(parser, source)
    if not parser.has_section("problem"):
        raise ConfigError(f"{source}: missing required section [problem] (key 'kind')")

    kind = r.get("problem", "kind", _choice(PROBLEM_KINDS), required=True)
    d_default = None if kind != "advection" else 6
    d = r.get("problem", "d", int, default=d_default, required=d_default is None)
    problem = ProblemConfig(
        kind=kind,
        d=d,
        N=r.get("problem", "N", int, 10),
        m=r.get("problem", "m", int, 15),
        seed=r.get("problem", "seed", int, 0),
        scale=r.get("problem", "scale", float, 2.0),
        spd=r.get("problem", "spd", _bool, True),
        upwind=r.get("problem", "upwind", _bool, True),
        b0=r.get("problem", "b0", _floats, None),
        b_terms=r.get("problem", "b_terms", _floats, None),
    )
    if d < 1:
        raise ConfigError(f"{source}: [problem] d must be >= 1")
    if kind == "advection" and d < 2:
        raise ConfigError(f"{source}: [problem] d must be >= 2 for the advection problem")
    if kind in ("identity", "affine") and problem.N < 1:
        raise ConfigError(f"{source}: [problem] N must be >= 1")
    if problem.is_grid and problem.m < 2:
        raise ConfigError(f"{source}: [problem] m must be >= 2")
    if kind == "identity":
        if problem.b0 is not None and len(problem.b0) != problem.N:
            raise ConfigError(f"{source}: [problem] b0 needs N={problem.N} values")
        if problem.b_terms is not None and len(problem.b_terms) != problem.N * d:
            raise ConfigError(f"{source}: [problem] b_terms needs N*d={problem.N * d} values")

    bkind = r.get("basis", "kind", _choice(("total_degree", "tensor")), "total_degree")
    if bkind == "total_degree":
        basis = BasisConfig(bkind, n=r.get("basis", "n", int, 2))
        if basis.n < 0:
            raise ConfigError(f"{source}: [basis] n must be >= 0")
        default_q = (basis.n + 1,) * d
    else:
        orders = r.get("basis", "orders", _ints, required=True)
        if len(orders) == 1:
            orders = orders * d
        if len(orders) != d:
            raise ConfigError(f"{source}: [basis] orders has {len(orders)} entries but d = {d}")
        basis = BasisConfig(bkind, n=max(orders), orders=orders)
        default_q = tuple(o + 1 for o in orders)
    if r.get("basis", "d", int, d) != d:
        raise ConfigError(f"{source}: [basis] d disagrees with [problem] d = {d}")

    q = r.get("quadrature", "order", _ints, default_q)
    if len(q) == 1:
        q = q * d
    if len(q) != d:
        raise ConfigError(f"{source}: [quadrature] order has {len(q)} entries but d = {d}")
    if min(q) < 1:
        raise ConfigError(f"{source}: [quadrature] order must be >= 1 in every dimension")

    default_method = "minres" if kind != "advection" and (kind != "affine" or problem.spd) else "bicgstab"
    cfg = ExperimentConfig(
        problem=problem,
        basis=basis,
        quadrature_orders=q,
        method=r.get("solver", "method", _choice(METHODS), default_method),
        rtol=r.get("solver", "rtol", float, 1e-8),
        maxiter=r.get("solver", "maxiter", int, None),
        precond_kind=r.get("preconditioner", "kind", _choice(KINDS), "none"),
        precond_order=r.get("preconditioner", "order", int, 2),
        precond_seed=r.get("preconditioner", "seed", int, 0),
        precond_point=r.get("preconditioner", "point", _floats, None),
        output_dir=r.get("output", "directory", str, "pmgalerkin-out"),
        artifacts=r.get("output", "write", _words, ARTIFACTS),
        benchmark=r.get("benchmark", "enabled", _bool, False),
        benchmark_kinds=r.get("benchmark", "kinds", _words, DEFAULT_BENCHMARK_KINDS),
        random_runs=r.get("benchmark", "random_runs", int, 5),
        mean_orders=r.get("benchmark", "mean_orders", _ints, (2,)),
        kl_modes=r.get("kl", "modes", int, 20),
        source=source,
    )
    if not cfg.rtol > 0:
        raise ConfigError(f"{source}: [solver] rtol must be positive")
    for a in cfg.artifacts:
        if a not in ARTIFACTS:
            raise ConfigError(f"{source}: [output] write: unknown artifact {a!r}")
    for k in cfg.benchmark_kinds:
        if k not in KINDS:
            raise ConfigError(f"{source}: [benchmark] kinds: unknown preconditioner {k!r}")
    if cfg.precond_point is not None and len(cfg.precond_point) != d:
        raise ConfigError(f"{source}: [preconditioner] point needs {d} values")
    if cfg.precond_kind == "fixed_point" and cfg.precond_point is None:
        raise ConfigError(f"{source}: missing required key 'point' in section [preconditioner]")
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=str(path))
