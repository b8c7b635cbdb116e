"""Differential evolution over jump waypoints, with warm restarts.

The decision vector is tiny (5 to 12 numbers) and every candidate is
already dynamically consistent thanks to the waypoint transform, so a
small-population rand/1/bin search with greedy replacement covers the
space well.  Constraint priorities live inside the fitness; the search
itself is unconstrained apart from box bounds and a time-ordering
repair.  A warm start shrinks the initial sampling window to a
neighborhood of a previously solved jump and raises the crossover and
mutation pressure, which is what makes replanning from a library entry
cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import config as _cfg
from .grf_profile import OPT_DIMS, OptVector, TransformError
from .jump_plane import JumpPlaneSpec, build_plane, sagittal_plane
from .jump_sim import DEFAULT_DT, SimOutcome, simulate_jump
from .robot_model import RobotParams

# Infeasible-transform sentinel: far above any constraint pedestal.
FAILED_FITNESS = 1.0e30

# Warm-start sampling window as a fraction of each bound's range.
WARM_WINDOW = 0.1

_T2_MIN_GAP = 0.01


class OptimizationFailed(RuntimeError):
    """Search finished without a feasible jump; carries the best attempt."""

    def __init__(self, message: str, result: "OptimizeResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class DEConfig:
    """Differential evolution knobs.

    The cold profile favors steady exploration; the warm profile trusts
    the seeded neighborhood and mutates single components aggressively
    to escape it only when needed.
    """

    pop_size: int = 20
    max_gen: int = 200
    weight_f: float = 0.85
    cross_cr: float = 0.75
    mutate_p: float = 0.05
    plateau_gens: int = 15
    plateau_rtol: float = 1e-3
    target_fitness: float = 0.0
    rounds: int = 1
    polish_evals: int = 0
    search_dt: float | None = None

    def __post_init__(self):
        if self.pop_size < 4:
            raise ValueError("pop_size must be at least 4 for rand/1 partners")
        if not 0.0 < self.weight_f <= 2.0:
            raise ValueError("weight_f must be in (0, 2]")
        if not 0.0 <= self.cross_cr <= 1.0:
            raise ValueError("cross_cr must be in [0, 1]")
        if not 0.0 <= self.mutate_p <= 1.0:
            raise ValueError("mutate_p must be in [0, 1]")
        if self.max_gen < 1 or self.plateau_gens < 1:
            raise ValueError("generation counts must be positive")
        if self.rounds < 1:
            raise ValueError("rounds must be positive")
        if self.polish_evals < 0:
            raise ValueError("polish_evals must be non-negative")
        if self.search_dt is not None and self.search_dt <= 0.0:
            raise ValueError("search_dt must be positive")

    @classmethod
    def cold(cls) -> "DEConfig":
        return cls()

    @classmethod
    def warm(cls) -> "DEConfig":
        return cls(weight_f=0.9, cross_cr=0.95, mutate_p=0.5)

    @classmethod
    def online(cls) -> "DEConfig":
        """Budgeted profile for tight wall-clock solves: restart rounds
        escape dead basins, a simplex polish rescues near-feasible bests,
        and the search integrates coarsely (the returned result is always
        re-verified at the caller's step)."""
        return cls(max_gen=110, rounds=4, polish_evals=400, search_dt=2e-3)

    @classmethod
    def from_file(cls, path) -> "DEConfig":
        cfg = _cfg.parse_kv_file(path)
        kwargs = {}
        for name, cast in (
            ("pop_size", int),
            ("max_gen", int),
            ("weight_f", float),
            ("cross_cr", float),
            ("mutate_p", float),
            ("plateau_gens", int),
            ("plateau_rtol", float),
            ("target_fitness", float),
            ("rounds", int),
            ("polish_evals", int),
            ("search_dt", float),
        ):
            if name in cfg:
                kwargs[name] = cast(_cfg.scalar(cfg, name))
        return cls(**kwargs)


@dataclass(frozen=True)
class SearchSpace:
    """Box bounds plus the time-ordering repair applied at decode.

    Raw time entries may land in any order inside their boxes; decode
    clamps t2 past t1 (agile) and t3 into a flight window past stance,
    so every decoded vector is temporally valid.  t2_cap_mode selects
    how the raw t2 entry is read: "t2_upper" treats it as an absolute
    time capped at t2_cap, "phase2_duration" as the phase length.
    """

    mode: str
    lower: np.ndarray
    upper: np.ndarray
    t2_cap: float = 0.3
    t2_cap_mode: str = "t2_upper"
    min_flight: float = 0.05
    max_flight: float = 0.6

    def __post_init__(self):
        if self.mode not in OPT_DIMS:
            raise ValueError(f"unknown mode {self.mode!r}")
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        d = OPT_DIMS[self.mode]
        if lo.shape != (d,) or hi.shape != (d,):
            raise ValueError(f"{self.mode} bounds must have length {d}")
        if not np.all(lo < hi):
            raise ValueError("lower bounds must be strictly below upper bounds")
        if self.t2_cap_mode not in ("t2_upper", "phase2_duration"):
            raise ValueError(f"unknown t2_cap_mode {self.t2_cap_mode!r}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, float), self.lower, self.upper)

    def decode(self, x: np.ndarray) -> OptVector:
        """Clamp to the box, repair time ordering, wrap as OptVector."""
        v = self.clip(x)
        if self.mode == "agile":
            t1 = v[9]
            if self.t2_cap_mode == "phase2_duration":
                t2 = t1 + min(max(v[10], _T2_MIN_GAP), self.t2_cap)
            else:
                t2 = min(max(v[10], t1 + _T2_MIN_GAP), max(self.t2_cap, t1 + _T2_MIN_GAP))
            t3 = min(max(v[11], t2 + self.min_flight), t2 + self.max_flight)
            v[9:12] = (t1, t2, t3)
        else:
            t1 = v[-2]
            v[-1] = min(max(v[-1], t1 + self.min_flight), t1 + self.max_flight)
        return OptVector(self.mode, v)

    def warm_window(self, center: np.ndarray) -> tuple:
        """Initial sampling box around a seed vector, inside the bounds."""
        c = self.clip(center)
        span = WARM_WINDOW * (self.upper - self.lower)
        lo = np.maximum(self.lower, c - span)
        hi = np.minimum(self.upper, c + span)
        return lo, hi


def build_search_space(mode: str, params: RobotParams) -> SearchSpace:
    """Default waypoint boxes, scaled to the robot's leg geometry.

    Waypoints describe the push itself, not the landing, so the boxes
    do not depend on the target: the transform absorbs the target.
    """
    if mode in ("omni", "agile"):
        reach = float(params.leg_lengths[1] + params.leg_lengths[2])
        z0 = params.stance_height
        z_lo, z_hi = 0.78 * z0, 0.88 * reach
        if mode == "omni":
            lower = [-0.05 * reach, z_lo, -0.5, 0.10, 0.15]
            upper = [0.44 * reach, z_hi, 0.5, 0.50, 1.10]
            return SearchSpace("omni", lower, upper)
        lower = (
            [-0.10 * reach, z_lo, -1.0]
            + [-0.10 * reach, 0.80 * z0, -1.5]
            + [0.0, 0.90 * z0, -2.0]
            + [0.08, 0.10, 0.20]
        )
        upper = (
            [0.60 * reach, 0.95 * reach, 1.5]
            + [1.10 * reach, 1.05 * reach, 3.0]
            + [1.60 * reach, 1.30 * reach, 5.0]
            + [0.40, 0.35, 1.20]
        )
        return SearchSpace("agile", lower, upper)
    if mode == "humanoid":
        ext = float(params.leg_lengths[0] + params.leg_lengths[1])
        com_max = ext - float(params.hip_offsets[0][2])
        lower = [-0.05, 0.50 * com_max, -0.3] + [-0.05, 0.55 * com_max, -0.5] + [0.15, 0.25]
        upper = [0.05, 0.88 * com_max, 0.3] + [0.35, 0.97 * com_max, 0.5] + [0.60, 1.40]
        return SearchSpace("humanoid", lower, upper)
    raise ValueError(f"unknown mode {mode!r}")


def lhs_sample(rng: np.random.Generator, lower, upper, n: int) -> np.ndarray:
    """Latin hypercube: n points stratified independently per dimension."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    pts = np.empty((n, lower.size))
    for j in range(lower.size):
        cells = rng.permutation(n)
        jitter = rng.random(n)
        pts[:, j] = lower[j] + (upper[j] - lower[j]) * (cells + jitter) / n
    return pts


def _partners(rng: np.random.Generator, n: int, i: int) -> tuple:
    perm = rng.permutation(n)
    picked = [int(j) for j in perm if j != i]
    return picked[0], picked[1], picked[2]


def de_step(
    pop: np.ndarray,
    fits: np.ndarray,
    outcomes: list,
    objective: Callable,
    space: SearchSpace,
    cfg: DEConfig,
    rng: np.random.Generator,
) -> None:
    """One rand/1/bin generation with greedy replacement, in place.

    All random draws happen before any evaluation, in a fixed order, so
    the stream never depends on how or where candidates are evaluated.
    Ties keep the incumbent.
    """
    n, d = pop.shape
    trials = np.empty_like(pop)
    for i in range(n):
        r1, r2, r3 = _partners(rng, n, i)
        jrand = int(rng.integers(d))
        cross = rng.random(d) < cfg.cross_cr
        cross[jrand] = True
        mutant = pop[r1] + cfg.weight_f * (pop[r2] - pop[r3])
        trial = np.where(cross, mutant, pop[i])
        if rng.random() < cfg.mutate_p:
            k = int(rng.integers(d))
            trial[k] = rng.uniform(space.lower[k], space.upper[k])
        trials[i] = np.clip(trial, space.lower, space.upper)
    for i in range(n):
        fit, out = objective(space.decode(trials[i]))
        if fit < fits[i]:
            pop[i] = trials[i]
            fits[i] = fit
            outcomes[i] = out


@dataclass
class OptimizeResult:
    """Best candidate found, its simulation, and how the search went."""

    mode: str
    vector: OptVector
    raw: np.ndarray
    fitness: float
    outcome: SimOutcome | None
    spec: JumpPlaneSpec
    space: SearchSpace
    config: DEConfig
    generations: int
    evaluations: int
    stop_reason: str
    warm: bool
    feasible_generation: int | None = None

    @property
    def feasible(self) -> bool:
        return self.outcome is not None and self.outcome.feasible

    @property
    def energy(self) -> float:
        return math.inf if self.outcome is None else self.outcome.report.energy

    @property
    def target_error(self) -> float:
        return math.inf if self.outcome is None else self.outcome.target_error


def make_objective(
    spec: JumpPlaneSpec, params: RobotParams, dt: float = DEFAULT_DT
) -> Callable:
    """Objective closure: OptVector -> (fitness, SimOutcome or None)."""

    def objective(vec: OptVector):
        try:
            out = simulate_jump(vec, spec, params, dt)
        except TransformError:
            return FAILED_FITNESS, None
        return out.fitness, out

    return objective


def optimize(
    target,
    params: RobotParams,
    mode: str = "omni",
    *,
    seed=None,
    config: DEConfig | None = None,
    warm_start=None,
    stance_feet=None,
    vertical: bool = False,
    theta_land: float = 0.0,
    dt: float = DEFAULT_DT,
    space: SearchSpace | None = None,
) -> OptimizeResult:
    """Plan one jump to a target with differential evolution.

    Args:
        target: quadruped modes take the CoM displacement (3,) in the
            takeoff frame; humanoid takes the absolute landing (x, z).
        params: robot parameters.
        mode: "omni", "agile", or "humanoid".
        seed: int seed or np.random.Generator; fixes the whole search.
        config: DE knobs; defaults to warm() when warm_start is given,
            cold() otherwise.
        warm_start: decision vector of a nearby solved jump; sampling
            starts in a shrunk window around it.
        stance_feet: (4, 3) body-frame feet; default nominal stance.
        vertical: accept a target with no horizontal component.
        theta_land: landing pitch target in the plane.
        dt: integration step.
        space: override the default search space.

    Returns:
        OptimizeResult whose outcome is feasible.

    Raises:
        OptimizationFailed: search ended infeasible (carries the best
            attempt in .result).
        PlaneError: the target/stance admits no jump plane.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if mode == "humanoid":
        spec = sagittal_plane(target, theta_land)
    else:
        feet = params.default_stance_feet() if stance_feet is None else stance_feet
        spec = build_plane(target, feet, vertical=vertical, theta_land=theta_land)
    space = space or build_search_space(mode, params)
    if space.mode != mode:
        raise ValueError("search space mode does not match the requested mode")
    warm = warm_start is not None
    cfg = config or (DEConfig.warm() if warm else DEConfig.cold())
    objective = make_objective(spec, params, cfg.search_dt or dt)
    # Feasibility is decided at the caller's resolution, so the polish and
    # the final check run on the fine objective even when the DE rounds
    # integrate coarsely.
    fine = make_objective(spec, params, dt) if cfg.search_dt not in (None, dt) else objective

    state = _SearchState()
    for rnd in range(cfg.rounds):
        if rnd == 0:
            if warm:
                lo0, hi0 = space.warm_window(np.asarray(warm_start, float))
            else:
                lo0, hi0 = space.lower, space.upper
        elif rnd % 2 == 1 and state.best_raw is not None:
            # Odd rounds contract around the incumbent; even rounds resample
            # the whole box.  Either way the incumbent survives as a member.
            lo0, hi0 = space.warm_window(state.best_raw)
        else:
            lo0, hi0 = space.lower, space.upper
        pop = lhs_sample(rng, lo0, hi0, cfg.pop_size)
        if rnd > 0 and state.best_raw is not None:
            pop[0] = state.best_raw
        _run_round(pop, objective, space, cfg, rng, state)
        if state.stop_reason in ("target_fitness", "plateau"):
            break
        if cfg.polish_evals > 0 and not state.best_is_feasible:
            # DE stalled outside the feasible set; walk the last stretch.
            xp, fp, op = _polish(fine, space, cfg, state)
            state.offer(xp, fp, op)
            if state.best_is_feasible:
                state.stop_reason = "polish"
                break

    best_vec = space.decode(state.best_raw)
    best_fit, best_out = state.best_fit, state.best_out
    if fine is not objective and best_out is not None:
        best_fit, best_out = fine(best_vec)
        state.evaluations += 1
        infeasible = best_out is None or not best_out.feasible
        fresh = state.best_raw.tobytes() != state.polished_from
        if infeasible and cfg.polish_evals > 0 and fresh:
            # A coarse-grid best can sit a hair outside feasibility on the
            # fine grid; one more polish on the fine surface settles it.
            xp, fp, op = _polish(fine, space, cfg, state)
            if fp < best_fit:
                best_vec, best_fit, best_out = space.decode(xp), fp, op
                state.best_raw = xp
    result = OptimizeResult(
        mode=mode,
        vector=best_vec,
        raw=state.best_raw.copy(),
        fitness=float(best_fit),
        outcome=best_out,
        spec=spec,
        space=space,
        config=cfg,
        generations=state.generations,
        evaluations=state.evaluations,
        stop_reason=state.stop_reason,
        warm=warm,
        feasible_generation=state.feasible_generation,
    )
    if result.outcome is None:
        raise OptimizationFailed("no candidate produced a consistent force profile", result)
    if not result.feasible:
        raise OptimizationFailed(
            f"best candidate still violates constraints (fitness {result.fitness:.3g})",
            result,
        )
    return result


class _SearchState:
    """Running best and counters shared across restart rounds."""

    def __init__(self):
        self.best_raw: np.ndarray | None = None
        self.best_fit = math.inf
        self.best_out: SimOutcome | None = None
        self.generations = 0
        self.evaluations = 0
        self.stop_reason = "max_gen"
        self.feasible_generation: int | None = None
        self.polished_from = b""

    @property
    def best_is_feasible(self) -> bool:
        return self.best_out is not None and self.best_out.feasible

    def offer(self, raw: np.ndarray, fit: float, out: SimOutcome | None) -> None:
        if fit < self.best_fit:
            self.best_raw = np.asarray(raw, float).copy()
            self.best_fit = float(fit)
            self.best_out = out
            if self.feasible_generation is None and out is not None and out.feasible:
                self.feasible_generation = self.generations


def _run_round(
    pop: np.ndarray,
    objective: Callable,
    space: SearchSpace,
    cfg: DEConfig,
    rng: np.random.Generator,
    state: _SearchState,
) -> None:
    """One DE run to plateau or budget, folding its best into state."""
    n = pop.shape[0]
    fits = np.empty(n)
    outcomes: list = [None] * n
    for i in range(n):
        fits[i], outcomes[i] = objective(space.decode(pop[i]))
    state.evaluations += n
    best = int(np.argmin(fits))
    state.offer(pop[best], fits[best], outcomes[best])

    feasible_history: list = []
    state.stop_reason = "max_gen"
    for _ in range(cfg.max_gen):
        best = int(np.argmin(fits))
        if fits[best] <= cfg.target_fitness:
            state.stop_reason = "target_fitness"
            break
        out = outcomes[best]
        if out is not None and out.feasible:
            feasible_history.append(float(fits[best]))
            if len(feasible_history) >= cfg.plateau_gens:
                ref = feasible_history[-cfg.plateau_gens]
                if ref - feasible_history[-1] <= cfg.plateau_rtol * max(abs(ref), 1e-12):
                    state.stop_reason = "plateau"
                    break
        de_step(pop, fits, outcomes, objective, space, cfg, rng)
        state.evaluations += n
        state.generations += 1
        best = int(np.argmin(fits))
        state.offer(pop[best], fits[best], outcomes[best])


def _polish(
    objective: Callable,
    space: SearchSpace,
    cfg: DEConfig,
    state: _SearchState,
) -> tuple:
    """Deterministic simplex descent from the incumbent.

    DE stalls when the population collapses a hair outside the feasible
    set; a short Nelder-Mead run on the same fitness surface walks that
    last stretch far more cheaply than another restart.
    """
    from scipy.optimize import minimize

    span = space.upper - space.lower
    cache: dict = {}

    def fun(x):
        key = x.tobytes()
        if key not in cache:
            overshoot = np.maximum(0.0, space.lower - x) + np.maximum(0.0, x - space.upper)
            barrier = float(np.sum(overshoot / span)) * FAILED_FITNESS
            fit, out = objective(space.decode(x))
            cache[key] = (fit + barrier, fit, out)
        return cache[key][0]

    x0 = state.best_raw.copy()
    state.polished_from = x0.tobytes()
    simplex = np.vstack([x0] + [x0 + 0.02 * span * e for e in np.eye(space.dim)])
    res = minimize(
        fun,
        x0,
        method="Nelder-Mead",
        options={
            "maxfev": cfg.polish_evals,
            "initial_simplex": simplex,
            "xatol": 1e-6,
            "fatol": 1e-9,
        },
    )
    xbest = space.clip(res.x)
    fit, out = objective(space.decode(xbest))
    state.evaluations += len(cache) + 1
    return xbest, fit, out
