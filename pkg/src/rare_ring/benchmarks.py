"""Analytic limit states with reference failure probabilities.

Every benchmark takes standard Gaussian coordinates and returns a raw value
and a label.  Drivers only need the label; ``binary_only`` hides the raw
value altogether.  ``oracle_pf`` recomputes reference probabilities by an
independent route (polar quadrature, closed forms or a boundary series).
"""

from __future__ import annotations

import math
import select
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtr

from .classifier import FAILURE, NO_RESULT, SAFE, EventLabel, label_from_token
from .errors import ConfigError, EvaluatorError
from .transform import MarginalSpec, NatafModel, underlying_gaussian_correlation

LINEAR_BETA = 4.7534243
SQRT2 = math.sqrt(2.0)


@dataclass
class Reference:
    p_f: float
    design_points: list | None = None
    s_squared: list | None = None
    notes: str = ""


@dataclass
class Benchmark:
    name: str
    dim: int | None
    g: Callable[[np.ndarray], np.ndarray]
    strict: bool
    reference: Reference
    description: str = ""
    fixed_dim: bool = True

    def raw(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.g(x)

    def failure(self, x) -> np.ndarray:
        g = self.raw(x)
        return g < 0 if self.strict else g <= 0

    def codes(self, x) -> np.ndarray:
        """Label codes (safe 0, failure 1) for each row of ``x``."""
        return np.where(self.failure(x), FAILURE.code, SAFE.code)

    def evaluate(self, x) -> tuple[float, EventLabel]:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if self.fixed_dim and x.shape[1] != self.dim:
            raise ConfigError(f"{self.name} expects {self.dim} coordinates, got {x.shape[1]}")
        g = float(self.raw(x)[0])
        fail = g < 0 if self.strict else g <= 0
        return g, FAILURE if fail else SAFE


# ---- limit states --------------------------------------------------------


def _wavy_circle(x):
    phi = np.arctan2(x[:, 1], x[:, 0])  # arctan2(0, 0) is 0
    return 4.0 + np.sin(7.0 * phi) - np.hypot(x[:, 0], x[:, 1])


def _wavy_line(x):
    return -0.25 * x[:, 0] - x[:, 1] + np.sin(5.0 * x[:, 0]) + 5.5


def _metaballs(x):
    x1, x2 = x[:, 0], x[:, 1]
    a = (4.0 * (x1 + 2.0) ** 2 / 9.0 + x2**2 / 25.0) ** 2 + 1.0
    b = ((x1 - 2.5) ** 2 / 4.0 + (x2 - 0.5) ** 2 / 25.0) ** 2 + 1.0
    return 30.0 / a + 20.0 / b - 5.0


def _four_branch(x):
    x1, x2 = x[:, 0], x[:, 1]
    base = 3.0 + 0.1 * (x1 - x2) ** 2
    s = (x1 + x2) / SQRT2
    return np.minimum.reduce([
        base - s,
        base + s,
        x1 - x2 + 7.0 / SQRT2,
        x2 - x1 + 7.0 / SQRT2,
    ])


def _black_swan(x):
    return np.where(x[:, 0] <= 2.0, 5.0 - x[:, 0], 5.0 - x[:, 1])


def _rastrigin(x):
    return 10.0 - np.sum(x**2 - 5.0 * np.cos(2.0 * math.pi * x), axis=1)


def _alternating(x):
    x1 = x[:, 0]
    return np.cos(x1 * np.exp(-x1 - 4.0))


def _linear(x):
    return LINEAR_BETA - x[:, 0]


GUMBEL = MarginalSpec("gumbel_max", location=0.0, scale=1.0)
WEIBULL = MarginalSpec("weibull_min", scale=1.0, shape=1.5)
NATAF_PEARSON = -0.708
# Gaussian correlation behind the Pearson target, rounded as published;
# the solver returns -0.8007 and the reference probability matches -0.8
NATAF_RHO_G = -0.8

_nataf_cache: dict[str, NatafModel] = {}


def nataf_model(rho_g: float = NATAF_RHO_G) -> NatafModel:
    """Gumbel/Weibull pair with underlying Gaussian correlation ``rho_g``."""
    if rho_g not in _nataf_cache:
        _nataf_cache[rho_g] = NatafModel([GUMBEL, WEIBULL], np.array([[1.0, rho_g], [rho_g, 1.0]]))
    return _nataf_cache[rho_g]


def solved_nataf_correlation() -> float:
    """Gaussian correlation solved from the Pearson target by quadrature."""
    return underlying_gaussian_correlation(GUMBEL, WEIBULL, NATAF_PEARSON)


def _nataf(x):
    z = nataf_model().to_physical(x)
    return 7.0 - z[:, 0] - 2.0 * z[:, 1]


def _quartic(x):
    return 3.0 - x[:, 0] ** 4 / 33.0 - x[:, 1]


def alternating_boundaries(n: int = 200) -> np.ndarray:
    """Roots b_k of (2k + 1) pi = -2 b exp(-b - 4), k = 0..n-1."""
    out = []
    for k in range(n):
        target = (2 * k + 1) * math.pi
        # -2 b exp(-b - 4) increases without bound as b decreases below -1
        h = lambda b: -2.0 * b * math.exp(-b - 4.0) - target  # noqa: E731
        lo = -1.0
        while h(lo) < 0:
            lo -= 1.0
        out.append(optimize.brentq(h, lo, lo + 1.0, xtol=1e-15))
    return np.array(out)


def _alternating_pf(n_terms: int = 200) -> float:
    b = alternating_boundaries(n_terms)
    signs = (-1.0) ** np.arange(n_terms)
    return float(np.sum(signs * ndtr(b)))


REGISTRY: dict[str, Benchmark] = {
    "wavy_circle": Benchmark(
        "wavy_circle", 2, _wavy_circle, False,
        Reference(2.582e-3, [[3.0 * math.cos(a), 3.0 * math.sin(a)] for a in
                             (-math.pi / 14 + 2 * math.pi * k / 7 for k in range(7))],
                  [0.5, 0.5], "seven design points at distance 3"),
        "sine wave of amplitude 1 on a circle of radius 4",
    ),
    "wavy_line": Benchmark(
        "wavy_line", 2, _wavy_line, False,
        Reference(1.217e-6, [[0.943626, 4.26411]], [0.829, 0.171], "shares not asserted"),
        "sine wave superposed on a falling line",
    ),
    "metaballs": Benchmark(
        "metaballs", 2, _metaballs, True, Reference(1.12857e-5),
        "two merged elliptic blobs; failure outside",
    ),
    "four_branch": Benchmark(
        "four_branch", 2, _four_branch, False,
        Reference(2.222e-3, [[3 / SQRT2, 3 / SQRT2], [-3 / SQRT2, -3 / SQRT2]]),
        "two parabolic and two linear branches",
    ),
    "black_swan": Benchmark(
        "black_swan", 2, _black_swan, True,
        Reference(float(ndtr(-5.0) * ndtr(-2.0)), [[2.0, 5.0]], [0.3189, 0.6811]),
        "failure when x1 > 2 and x2 > 5",
    ),
    "rastrigin": Benchmark(
        "rastrigin", 2, _rastrigin, False,
        Reference(0.072986, None, [0.5, 0.5], "twenty closed regions plus an open one"),
        "modified Rastrigin function",
    ),
    "alternating": Benchmark(
        "alternating", 2, _alternating, True, Reference(5.266e-4),
        "alternating safe and failure slabs along x1",
    ),
    "nataf": Benchmark(
        "nataf", 2, _nataf, True, Reference(1.143e-3),
        "linear limit state on correlated Gumbel and Weibull variables",
    ),
    "linear": Benchmark(
        "linear", None, _linear, False,
        Reference(float(ndtr(-LINEAR_BETA)), None, None, "s1 = 1 in any dimension"),
        "hyperplane x1 = beta", fixed_dim=False,
    ),
}

# sensitivity fixture only; not offered to the driver
QUARTIC = Benchmark(
    "quartic", 2, _quartic, False, Reference(float("nan"), [[0.0, 3.0]], [0.57, 0.43]),
    "quartic curve 3 - x1^4/33 - x2",
)


def list_benchmarks() -> list[str]:
    return sorted(REGISTRY)


def get_benchmark(name: str, dim: int | None = None) -> Benchmark:
    """Look up a benchmark; ``linear`` takes any ``dim`` (default 2)."""
    if name not in REGISTRY:
        raise ConfigError(f"unknown benchmark {name!r}; available: {', '.join(list_benchmarks())}")
    bench = REGISTRY[name]
    if bench.fixed_dim:
        if dim is not None and dim != bench.dim:
            raise ConfigError(f"{name} is defined in {bench.dim} dimensions, not {dim}")
        return bench
    dim = 2 if dim is None else int(dim)
    if dim < 1:
        raise ConfigError("dimension must be positive")
    return Benchmark(bench.name, dim, bench.g, bench.strict, bench.reference, bench.description)


def evaluate(name: str, x, dim: int | None = None) -> tuple[float, EventLabel]:
    x = np.asarray(x, dtype=float).reshape(-1)
    return get_benchmark(name, dim if dim is not None else x.size).evaluate(x)


def reference_solution(name: str) -> Reference:
    if name == "quartic":
        return QUARTIC.reference
    return get_benchmark(name).reference


# ---- independent oracles ------------------------------------------------


def _ray_failure_mass(g_ray, strict, rho_max, n_grid) -> float:
    # probability mass along one ray, per unit angle / (2 pi): sum over
    # failure intervals [a, b] of exp(-a^2/2) - exp(-b^2/2)
    rho = np.linspace(0.0, rho_max, n_grid)
    g = g_ray(rho)
    fail = g < 0 if strict else g <= 0
    edges = []
    change = np.nonzero(fail[1:] != fail[:-1])[0]
    for k in change:
        a, b = rho[k], rho[k + 1]
        ga, gb = g_ray(np.array([a]))[0], g_ray(np.array([b]))[0]
        if np.sign(ga) != np.sign(gb) and ga != 0 and gb != 0:
            try:
                edges.append(optimize.brentq(lambda t: g_ray(np.array([t]))[0], a, b, xtol=1e-13))
                continue
            except ValueError:
                pass
        edges.append(0.5 * (a + b))
    bounds = [0.0, *edges, np.inf]
    state = bool(fail[0])
    mass = 0.0
    for a, b in zip(bounds[:-1], bounds[1:]):
        if state:
            mass += math.exp(-0.5 * a * a) - (0.0 if math.isinf(b) else math.exp(-0.5 * b * b))
        state = not state
    return mass


def polar_quadrature_pf(
    g: Callable[[np.ndarray], np.ndarray],
    strict: bool = False,
    n_angles: int = 4096,
    rho_max: float = 12.0,
    n_grid: int = 4001,
) -> float:
    """Failure probability of a 2-D limit state by polar quadrature.

    The radial integral over each failure interval is exact; the angular
    integral uses the periodic trapezoid rule.  Failure beyond ``rho_max``
    is assumed to continue to infinity when the last grid point fails.
    """
    angles = (np.arange(n_angles) + 0.5) * (2.0 * math.pi / n_angles)
    total = 0.0
    for phi in angles:
        c, s = math.cos(phi), math.sin(phi)

        def g_ray(rho, c=c, s=s):
            return g(np.column_stack([rho * c, rho * s]))

        total += _ray_failure_mass(g_ray, strict, rho_max, n_grid)
    return total / n_angles


def oracle_pf(name: str, dim: int | None = None, n_angles: int = 4096, n_grid: int = 4001) -> float:
    """Independent recomputation of a benchmark's failure probability."""
    if name == "linear":
        return float(ndtr(-LINEAR_BETA))
    if name == "black_swan":
        return float(ndtr(-5.0) * ndtr(-2.0))
    if name == "alternating":
        return _alternating_pf()
    bench = get_benchmark(name, dim)
    if bench.dim != 2:
        raise ConfigError(f"no oracle for {name} in {bench.dim} dimensions")
    return polar_quadrature_pf(bench.g, bench.strict, n_angles=n_angles, n_grid=n_grid)


def quadrature_cross_check(name: str) -> float:
    """Second route for smooth 2-D cases: adaptive 2-D cubature in polar form."""
    bench = get_benchmark(name)

    def inner(phi):
        c, s = math.cos(phi), math.sin(phi)
        return _ray_failure_mass(lambda r: bench.g(np.column_stack([r * c, r * s])), bench.strict, 12.0, 2001)

    val, _ = integrate.quad(inner, 0.0, 2.0 * math.pi, limit=400, epsabs=1e-12, epsrel=1e-6)
    return val / (2.0 * math.pi)


# ---- evaluators ----------------------------------------------------------


class BenchmarkEvaluator:
    """Callable returning ``(raw, label)`` for one point."""

    def __init__(self, bench: Benchmark, binary_only: bool = False):
        self.bench = bench
        self.binary_only = binary_only
        self.calls = 0

    @property
    def dim(self) -> int:
        return self.bench.dim

    def __call__(self, x) -> tuple[float | None, EventLabel]:
        self.calls += 1
        raw, label = self.bench.evaluate(x)
        return (None, label) if self.binary_only else (raw, label)

    def close(self) -> None:
        pass


def binary_only(bench: Benchmark) -> BenchmarkEvaluator:
    return BenchmarkEvaluator(bench, binary_only=True)


@dataclass
class SubprocessEvaluator:
    """Limit state living in a child process.

    For each point the driver writes one line of whitespace-separated
    coordinates (shortest round-trip decimal text) and reads one line back
    holding a label token: a name such as ``safe``/``failure`` or an integer
    code.  A token that cannot be read yields ``no_result``.
    """

    command: str | list[str]
    dim: int
    timeout: float | None = None
    registry: dict[str, EventLabel] = field(default_factory=dict)

    def __post_init__(self):
        self.calls = 0
        self._proc = None
        self._start()

    def _start(self) -> None:
        args = shlex.split(self.command) if isinstance(self.command, str) else list(self.command)
        try:
            self._proc = subprocess.Popen(
                args, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
        except OSError as exc:
            raise EvaluatorError(f"cannot start evaluator {args!r}: {exc}") from exc

    def _readline(self) -> str:
        if self.timeout is not None:
            ready, _, _ = select.select([self._proc.stdout], [], [], self.timeout)
            if not ready:
                return ""
        return self._proc.stdout.readline()

    def __call__(self, x) -> tuple[None, EventLabel]:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ConfigError(f"evaluator expects {self.dim} coordinates")
        self.calls += 1
        line = " ".join(repr(float(v)) for v in x) + "\n"
        for attempt in range(2):
            # a dead child is restarted, at most once per call
            if attempt or self._proc is None or self._proc.poll() is not None:
                self.close()
                self._start()
            try:
                self._proc.stdin.write(line)
                self._proc.stdin.flush()
                reply = self._readline()
            except (BrokenPipeError, OSError):
                reply = ""
            if reply == "":
                # child closed its output or timed out; restart once and retry
                self.close(graceful=False)
                continue
            token = reply.strip()
            if not token:
                return None, NO_RESULT
            return None, label_from_token(token, self.registry)
        self.close(graceful=False)
        raise EvaluatorError("evaluator process stopped responding")

    def close(self, graceful: bool = True) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        if not graceful and proc.poll() is None:
            proc.kill()
        for stream in (proc.stdin, proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
