"""Sequential extension of the design and on-the-fly estimation.

Each step scores the candidate pool with psi, evaluates the winner and adds
it to the design.  Estimates are refreshed every ``estimate_every`` steps
and after every newly found rare point.  The run stops at the budget, or
once the best psi falls below ``stop_psi_ratio`` times the estimate.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .benchmarks import BenchmarkEvaluator, SubprocessEvaluator, get_benchmark
from .candidates import EXPLORATION, ORIGIN_NAMES, DotCloud, ExploitationConfig, assemble_pool
from .classifier import FAILURE, NO_RESULT, SAFE, EventLabel, ExperimentalDesign
from .errors import ConfigError, EvaluatorError
from .estimator import (
    OUTER_RULES,
    ConvergenceHistory,
    EstimateRecord,
    build_annulus,
    global_is_estimate,
    localized_is_estimate,
    record_history,
    screen_from_cloud,
)
from .exploration import ExplorationPlan, build_plan, enrich_plan
from .sensitivity import SensitivityResult, sensitivity_indices

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    benchmark: str | None = None
    command: str | None = None
    dim: int | None = None
    budget: int = 200
    seed: int = 0
    n_is: int = 10_000
    n_is_final: int = 100_000
    estimate_every: int = 5
    stop_psi_ratio: float = 0.01
    dots_per_seed: int = 1000
    K: int = 5
    max_level: int = 15
    fraction: float = 1e-4
    binary_only: bool = False
    outer_rule: str = "estimate"
    regenerate_dots: bool = False
    oversample: float = 7.0
    sensitivities: bool = True

    def validate(self) -> "RunConfig":
        if (self.benchmark is None) == (self.command is None):
            raise ConfigError("give exactly one of a benchmark name or an evaluator command")
        if self.command is not None and not self.dim:
            raise ConfigError("an external evaluator needs --dim")
        if self.benchmark is not None:
            bench = get_benchmark(self.benchmark, self.dim)
            self.dim = bench.dim
        for name in ("budget", "n_is", "n_is_final", "estimate_every", "dots_per_seed", "K", "max_level"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.stop_psi_ratio < 0:
            raise ConfigError("stop_psi_ratio must be nonnegative (0 disables stopping)")
        if not (0.0 < self.fraction < 1.0):
            raise ConfigError("fraction must lie in (0, 1)")
        if self.outer_rule not in OUTER_RULES:
            raise ConfigError(f"outer_rule must be one of {OUTER_RULES}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        return self


@dataclass
class AnalysisResult:
    config: RunConfig
    final: list[EstimateRecord]
    localized: list[EstimateRecord]
    sensitivities: list[SensitivityResult]
    history: ConvergenceHistory
    ed: ExperimentalDesign
    termination: str
    origins: list[str] = field(default_factory=list)
    psi: list[float] = field(default_factory=list)

    @property
    def n_sim(self) -> int:
        return len(self.ed)

    def estimate(self, label: str = "failure") -> EstimateRecord | None:
        for rec in self.final:
            if rec.label.name == label:
                return rec
        return None

    @property
    def p_hat(self) -> float:
        rec = self.estimate("failure")
        return 0.0 if rec is None else rec.p_hat


@dataclass
class RunState:
    cfg: RunConfig
    evaluator: object
    ed: ExperimentalDesign
    plan: ExplorationPlan
    rng_plan: np.random.Generator
    rng_extend: np.random.Generator
    rng_estimate: np.random.Generator
    cloud: DotCloud | None
    screen_cloud: DotCloud
    history: ConvergenceHistory = field(default_factory=ConvergenceHistory)
    estimates: dict[str, EstimateRecord] = field(default_factory=dict)
    localized: dict[str, EstimateRecord] = field(default_factory=dict)
    steps: int = 0
    since_estimate: int = 0
    last_psi: float = math.nan
    origins: list[str] = field(default_factory=list)
    psi: list[float] = field(default_factory=list)
    last_sample: object = None

    @property
    def exploit_cfg(self) -> ExploitationConfig:
        return ExploitationConfig(self.cfg.dots_per_seed)

    def rare_codes(self) -> set[int]:
        return {c for c in self.ed.labels_by_code if c != SAFE.code}

    def rare_labels(self) -> list[EventLabel]:
        return [self.ed.labels_by_code[c] for c in sorted(self.rare_codes())]


def make_evaluator(cfg: RunConfig):
    if cfg.benchmark is not None:
        return BenchmarkEvaluator(get_benchmark(cfg.benchmark, cfg.dim), binary_only=cfg.binary_only)
    return SubprocessEvaluator(cfg.command, cfg.dim)


def _evaluate(state: RunState, x) -> tuple[float | None, EventLabel]:
    try:
        raw, label = state.evaluator(x)
    except (EvaluatorError, ConfigError):
        raise
    except Exception as exc:  # a crashing model is an event of its own
        log.warning("evaluation failed at %s: %s", np.asarray(x).tolist(), exc)
        return None, NO_RESULT
    if state.cfg.binary_only:
        raw = None
    return raw, label


def initialize(cfg: RunConfig, evaluator=None) -> RunState:
    """Evaluate the origin and pre-generate the exploration plan."""
    cfg.validate()
    ss = np.random.SeedSequence(cfg.seed)
    s_plan, s_extend, s_estimate = ss.spawn(3)
    evaluator = make_evaluator(cfg) if evaluator is None else evaluator
    rng_plan = np.random.default_rng(s_plan)
    exploit = ExploitationConfig(cfg.dots_per_seed)
    state = RunState(
        cfg=cfg,
        evaluator=evaluator,
        ed=ExperimentalDesign(cfg.dim),
        plan=build_plan(rng_plan, cfg.dim, cfg.max_level, cfg.oversample),
        rng_plan=rng_plan,
        rng_extend=np.random.default_rng(s_extend),
        rng_estimate=np.random.default_rng(s_estimate),
        cloud=None if cfg.regenerate_dots else DotCloud(cfg.dim, exploit),
        screen_cloud=DotCloud(cfg.dim, exploit),
    )
    origin = np.zeros(cfg.dim)
    raw, label = _evaluate(state, origin)
    state.ed.add_point(origin, label, raw)
    state.origins.append("origin")
    state.psi.append(math.nan)
    if label.code != SAFE.code:
        estimate(state, cfg.n_is)
    _record(state, math.nan)
    return state


def _tracked_names(state: RunState) -> list[str]:
    names = [lab.name for lab in state.rare_labels()]
    return names or [FAILURE.name]


def _record(state: RunState, psi: float) -> None:
    n_rare = {
        lab.name: int(np.sum(state.ed.codes == lab.code)) for lab in state.rare_labels()
    }
    recs = {name: state.estimates.get(name) for name in _tracked_names(state)}
    record_history(state.history, len(state.ed), psi, recs, n_rare)


def estimate(state: RunState, n_is: int, with_sample: bool = False) -> list[EstimateRecord]:
    """Screen, build the ring and run the global estimator for every rare label."""
    labels = state.rare_labels()
    if not labels:
        return []
    ed = state.ed
    rare_idx = np.nonzero(ed.codes != SAFE.code)[0]
    state.screen_cloud.add_seeds(state.rng_estimate, ed, rare_idx)
    state.screen_cloud.sync(ed)
    r = math.inf
    for lab in labels:
        scr = screen_from_cloud(state.screen_cloud, ed, lab.code)
        r = min(r, scr.r)
        try:
            state.localized[lab.name] = localized_is_estimate(scr, ed, lab)
        except Exception as exc:  # diagnostic only
            log.debug("localized estimate failed: %s", exc)
    prev = [rec.p_hat for rec in state.estimates.values() if rec.p_hat > 0]
    with warnings.catch_warnings():
        warnings.simplefilter("default", RuntimeWarning)
        ann = build_annulus(r, min(prev) if prev else None, ed.dim, state.cfg.fraction, state.cfg.outer_rule)
    records, sample = global_is_estimate(
        state.rng_estimate, ed, labels, ann, n_is, return_sample=True
    )
    for rec in records:
        state.estimates[rec.label.name] = rec
    state.since_estimate = 0
    if with_sample:
        state.last_sample = sample
    return records


def step(state: RunState) -> RunState:
    """One extension step, followed by an estimate when one is due."""
    cfg = state.cfg
    pool = assemble_pool(
        state.plan, state.ed, state.rng_extend, state.exploit_cfg, state.rare_codes(), state.cloud
    )
    while len(pool) == 0:
        warnings.warn("candidate pool exhausted; adding an exploration level", RuntimeWarning, stacklevel=2)
        enrich_plan(state.plan, state.rng_plan, extra_levels=1)
        pool = assemble_pool(
            state.plan, state.ed, state.rng_extend, state.exploit_cfg, state.rare_codes(), state.cloud
        )
    best = pool.best()
    raw, label = _evaluate(state, best.x)
    state.ed.add_point(best.x, label, raw)
    if best.origin == EXPLORATION:
        state.plan.consume(best.ref)
    state.steps += 1
    state.since_estimate += 1
    state.last_psi = best.psi
    state.origins.append(ORIGIN_NAMES[best.origin])
    state.psi.append(best.psi)
    if label.code != SAFE.code or (state.rare_codes() and state.since_estimate >= cfg.estimate_every):
        estimate(state, cfg.n_is)
    _record(state, best.psi)
    return state


def should_stop(state: RunState) -> bool:
    ratio = state.cfg.stop_psi_ratio
    if ratio <= 0 or not state.estimates:
        return False
    positive = [rec.p_hat for rec in state.estimates.values() if rec.p_hat > 0]
    if not positive:
        return False
    return state.last_psi < ratio * min(positive)


def finalize(state: RunState, termination: str) -> AnalysisResult:
    cfg = state.cfg
    final: list[EstimateRecord] = []
    sens: list[SensitivityResult] = []
    if state.rare_codes():
        final = estimate(state, cfg.n_is_final, with_sample=True)
        sample = state.last_sample
        if cfg.sensitivities and sample is not None:
            for rec in final:
                if rec.n_is_hits == 0:
                    continue
                try:
                    sens.append(sensitivity_indices(
                        sample.nodes, sample.codes, rec.label.code, K=cfg.K,
                        safe_codes=[SAFE.code], label_name=rec.label.name,
                    ))
                except Exception as exc:
                    log.warning("sensitivity for %s failed: %s", rec.label.name, exc)
        state.last_sample = None
    close = getattr(state.evaluator, "close", None)
    if close is not None:
        close()
    return AnalysisResult(
        config=cfg,
        final=final,
        localized=list(state.localized.values()),
        sensitivities=sens,
        history=state.history,
        ed=state.ed,
        termination=termination,
        origins=list(state.origins),
        psi=list(state.psi),
    )


def run(cfg: RunConfig, evaluator=None) -> AnalysisResult:
    """Run until the budget, the psi stopping rule or an interrupt."""
    state = initialize(cfg, evaluator)
    termination = "budget"
    try:
        while len(state.ed) < cfg.budget:
            step(state)
            if should_stop(state):
                termination = "psi_stop"
                break
    except KeyboardInterrupt:
        termination = "user"
    return finalize(state, termination)


def estimate_only(
    ed: ExperimentalDesign,
    n_is: int = 100_000,
    seed: int = 0,
    dots_per_seed: int = 1000,
    fraction: float = 1e-4,
    K: int = 5,
) -> tuple[list[EstimateRecord], list[SensitivityResult]]:
    """Re-estimate every rare label from a saved design."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    cloud = DotCloud(ed.dim, ExploitationConfig(dots_per_seed))
    rare = [lab for lab in ed.label_set() if lab.code != SAFE.code]
    if not rare:
        return [], []
    cloud.add_seeds(rng, ed, np.nonzero(ed.codes != SAFE.code)[0])
    r = min(screen_from_cloud(cloud, ed, lab.code).r for lab in rare)
    ann = build_annulus(r, None, ed.dim, fraction)
    records, sample = global_is_estimate(rng, ed, rare, ann, n_is, return_sample=True)
    sens = []
    for rec in records:
        if rec.n_is_hits:
            sens.append(sensitivity_indices(
                sample.nodes, sample.codes, rec.label.code, K=K,
                safe_codes=[SAFE.code], label_name=rec.label.name,
            ))
    return records, sens


def config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
