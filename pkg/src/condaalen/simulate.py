"""Sample generation, closed-form oracles, and a brute-force estimator.

Paths are generated state by state: constant-rate specifications use
exact competing exponentials, time- or duration-varying rates use
thinning against a piecewise-constant majorant refreshed on a short
window. The censoring time is drawn from its own RNG substream so the
censoring mechanism is conditionally independent of the jump process by
construction, and changing the censoring law never perturbs the
underlying trajectory.

Scenario files are JSON; rate expressions use a restricted arithmetic
grammar over ``t``, ``duration``, and the covariates ``x1 .. xd`` (``x``
aliases ``x1``).
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.integrate import solve_ivp

from .data import ABSORBED, CENSORED, EvalPoint, ObservedPath, Sample, StateSpace
from .estimators import HazardEstimate, OccupationEstimate
from .kernels import KernelSpec, NoKernelMass, kernel_eval
from .stepfun import StepCurve, StepMatrix

MARKOV = "markov"
SEMI_MARKOV = "semi_markov"

_MAX_JUMPS = 100_000
_MAJORANT_POINTS = 17
_MAJORANT_SLACK = 1.25

_ALLOWED_FUNCS = {
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "abs": abs,
    "min": min,
    "max": max,
}
_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
    ast.Constant,
    ast.Name,
    ast.Call,
    ast.Load,
)


class ExpressionError(ValueError):
    """Rate or law expression outside the restricted grammar."""


def compile_expression(text: str, dim: int):
    """Compile a restricted arithmetic expression to a callable.

    The callable takes ``(t, duration, x)`` with ``x`` a coordinate
    sequence. Returns the callable and the set of variable names used.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as err:
        raise ExpressionError(f"cannot parse expression {text!r}: {err}") from None
    allowed_names = {"t", "duration", "x"} | {f"x{i}" for i in range(1, dim + 1)}
    used: set[str] = set()
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ExpressionError(f"disallowed syntax in {text!r}: {type(node).__name__}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS:
                raise ExpressionError(f"disallowed function call in {text!r}")
            if node.keywords:
                raise ExpressionError(f"keyword arguments not allowed in {text!r}")
        if isinstance(node, ast.Name) and node.id not in _ALLOWED_FUNCS:
            if node.id not in allowed_names:
                raise ExpressionError(f"unknown variable {node.id!r} in {text!r}")
            used.add(node.id)
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ExpressionError(f"non-numeric constant in {text!r}")
    code = compile(tree, "<rate>", "eval")

    def evaluate(t: float, duration: float, x) -> float:
        env = {"t": t, "duration": duration, "x": x[0]}
        for i, xi in enumerate(x, start=1):
            env[f"x{i}"] = xi
        return float(eval(code, {"__builtins__": {}, **_ALLOWED_FUNCS}, env))

    return evaluate, used


@dataclass(frozen=True)
class IntensitySpec:
    """Transition intensities of the jump process.

    ``rate`` is a callable ``(j, k, t, duration, x) -> float`` giving the
    intensity of a jump from ``j`` to ``k`` at time ``t`` after spending
    ``duration`` in ``j``; Markov specifications ignore the duration.
    ``time_constant`` marks rates free of both ``t`` and ``duration``,
    unlocking exact simulation and the matrix-exponential oracle path.
    ``covariate_law`` draws a covariate vector from an RNG.
    """

    kind: str
    rate: callable
    covariate_law: callable
    state_space: StateSpace
    initial_state: int
    time_constant: bool = False
    thinning_window: float = 0.25

    def __post_init__(self):
        if self.kind not in (MARKOV, SEMI_MARKOV):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.initial_state in self.state_space.absorbing:
            raise ValueError("initial state must not be absorbing")


@dataclass(frozen=True)
class CensoringSpec:
    """Right-censoring law; ``law`` draws a positive time given x."""

    law: callable


@dataclass(frozen=True)
class OraclePath:
    """True occupation probabilities on a time grid, one column per state."""

    grid: np.ndarray
    values: np.ndarray
    states: tuple[int, ...]

    def curve(self, state: int) -> np.ndarray:
        return self.values[:, self.states.index(state)]


def _check_rate(value: float, j: int, k: int, t: float) -> float:
    if value < 0:
        raise ValueError(f"negative rate {value} for {j}->{k} at t={t}")
    return value


def _targets(space: StateSpace, j: int) -> list[int]:
    return [k for k in space.states if k != j]


def _simulate_jumps_constant(intensity, x, censor_time, rng):
    """Exact competing-exponential path up to absorption or censoring."""
    space = intensity.state_space
    state = intensity.initial_state
    t = 0.0
    jumps = []
    while len(jumps) < _MAX_JUMPS:
        if state in space.absorbing:
            return jumps, True, t
        rates = [
            _check_rate(intensity.rate(state, k, t, 0.0, x), state, k, t)
            for k in _targets(space, state)
        ]
        total = sum(rates)
        if total == 0.0:
            return jumps, False, censor_time
        t = t + rng.exponential(1.0 / total)
        if t > censor_time:
            return jumps, False, censor_time
        dest = rng.choice(_targets(space, state), p=np.asarray(rates) / total)
        state = int(dest)
        jumps.append((t, state))
    raise RuntimeError(f"path exceeded {_MAX_JUMPS} jumps; rates look explosive")


def _simulate_jumps_thinning(intensity, x, censor_time, rng):
    """Thinning against a sampled piecewise-constant majorant.

    The majorant on each window is the largest total rate over a fixed
    set of probe points, inflated by a slack factor. Rates that spike
    strictly between probes can exceed it, which raises instead of
    silently biasing the draw.
    """
    space = intensity.state_space
    state = intensity.initial_state
    t = 0.0
    entry = 0.0
    h = intensity.thinning_window
    jumps = []
    while len(jumps) < _MAX_JUMPS:
        if state in space.absorbing:
            return jumps, True, t
        if t > censor_time:
            return jumps, False, censor_time
        window_end = t + h
        targets = _targets(space, state)
        probes = np.linspace(t, window_end, _MAJORANT_POINTS)
        total_at = [
            sum(_check_rate(intensity.rate(state, k, s, s - entry, x), state, k, s) for k in targets)
            for s in probes
        ]
        majorant = max(total_at) * _MAJORANT_SLACK
        if majorant == 0.0:
            t = window_end
            continue
        s = t
        jumped = False
        while True:
            s = s + rng.exponential(1.0 / majorant)
            if s > window_end or s > censor_time:
                break
            rates = [
                _check_rate(intensity.rate(state, k, s, s - entry, x), state, k, s)
                for k in targets
            ]
            total = sum(rates)
            if total > majorant:
                raise RuntimeError(
                    f"majorant violated at t={s}: rate {total} > bound {majorant}; "
                    "shrink thinning_window"
                )
            if rng.uniform() * majorant <= total:
                dest = rng.choice(targets, p=np.asarray(rates) / total)
                state = int(dest)
                jumps.append((s, state))
                t = s
                entry = s
                jumped = True
                break
        if not jumped:
            if window_end > censor_time:
                return jumps, False, censor_time
            t = window_end
    raise RuntimeError(f"path exceeded {_MAX_JUMPS} jumps; rates look explosive")


def simulate_path(intensity: IntensitySpec, censoring: CensoringSpec, seed, index: int) -> ObservedPath:
    """Simulate one subject with RNG streams derived from (seed, index)."""
    rng_jump = np.random.default_rng([seed, index, 0])
    rng_cens = np.random.default_rng([seed, index, 1])
    x = tuple(float(v) for v in np.atleast_1d(intensity.covariate_law(rng_jump)))
    censor_time = float(censoring.law(rng_cens, x))
    if not censor_time > 0:
        raise ValueError(f"censoring law produced non-positive time {censor_time}")
    if intensity.time_constant:
        jumps, absorbed, end = _simulate_jumps_constant(intensity, x, censor_time, rng_jump)
    else:
        jumps, absorbed, end = _simulate_jumps_thinning(intensity, x, censor_time, rng_jump)
    return ObservedPath(
        covariates=x,
        initial_state=intensity.initial_state,
        jumps=tuple(jumps),
        end_time=end,
        end_reason=ABSORBED if absorbed else CENSORED,
    )


def simulate_sample(
    intensity: IntensitySpec, censoring: CensoringSpec, n: int, seed
) -> Sample:
    """Simulate ``n`` independent subjects, deterministic given ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    paths = tuple(simulate_path(intensity, censoring, seed, i) for i in range(n))
    return Sample(paths, intensity.state_space)


def markov_occupation_oracle(intensity: IntensitySpec, x, grid) -> OraclePath:
    """True occupation probabilities of a Markov specification at ``x``.

    Solves the forward equation ``p' = p Q(t)``; a time-constant
    generator is handled exactly through the matrix exponential, the
    general case with an adaptive fourth-order integrator.
    """
    if intensity.kind != MARKOV:
        raise ValueError("oracle requires a markov intensity")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or grid[0] < 0 or np.any(np.diff(grid) < 0):
        raise ValueError("grid must be nondecreasing and nonnegative")
    x = tuple(float(v) for v in np.atleast_1d(x))
    space = intensity.state_space
    states = space.states
    size = len(states)
    index = {s: i for i, s in enumerate(states)}

    def generator(t: float) -> np.ndarray:
        q = np.zeros((size, size))
        for j in states:
            if j in space.absorbing:
                continue
            for k in states:
                if k != j:
                    q[index[j], index[k]] = _check_rate(
                        intensity.rate(j, k, t, 0.0, x), j, k, t
                    )
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        return q

    p0 = np.zeros(size)
    p0[index[intensity.initial_state]] = 1.0

    if intensity.time_constant:
        q = generator(0.0)
        values = np.array([p0 @ expm(t * q) for t in grid])
    else:
        def rhs(t, p):
            return p @ generator(t)

        sol = solve_ivp(
            rhs,
            (0.0, float(grid[-1]) if grid[-1] > 0 else 1e-12),
            p0,
            method="RK45",
            t_eval=grid,
            rtol=1e-10,
            atol=1e-12,
        )
        if not sol.success:
            raise RuntimeError(f"forward equation solve failed: {sol.message}")
        values = sol.y.T
    return OraclePath(grid, values, states)


def brute_force_estimator(
    sample: Sample, x: EvalPoint, spec: KernelSpec, a: float, epsilon: float
) -> tuple[HazardEstimate, OccupationEstimate]:
    """Literal re-derivation of the full estimator stack, for testing.

    Every quantity is recomputed from its defining formula with plain
    loops: weights dimension by dimension, counts and exposure by
    rescanning all paths at every grid time, and occupations by a fresh
    ordered matrix product per time point. Deliberately quadratic; keep
    samples small.
    """
    n = len(sample)
    states = sample.state_space.states
    size = len(states)
    index = {s: i for i, s in enumerate(states)}

    factors = []
    for p in sample.paths:
        f = 1.0
        for i in range(len(x.coords)):
            xi = x.coords[i]
            xl = p.covariates[i]
            if xi in spec.atoms[i]:
                f *= 1.0 if xl == xi else 0.0
            else:
                if xl in spec.atoms[i]:
                    f *= 0.0
                else:
                    f *= kernel_eval(spec.kernels[i], (xi - xl) / a) / a
        factors.append(f)
    total = sum(factors)
    if total <= 0:
        raise NoKernelMass(f"no kernel mass at x={tuple(x.coords)}")
    w = [f / total for f in factors]

    times = set()
    for p in sample.paths:
        times.update(t for t, _ in p.jumps)
        if p.end_reason == CENSORED:
            times.add(p.end_time)
    grid = sorted(times)
    m = len(grid)

    def state_at(p: ObservedPath, t: float) -> int:
        s = p.initial_state
        for jt, js in p.jumps:
            if jt <= t:
                s = js
        return s

    def state_strictly_before(p: ObservedPath, t: float) -> int:
        s = p.initial_state
        for jt, js in p.jumps:
            if jt < t:
                s = js
        return s

    def counts_at(t: float) -> np.ndarray:
        c = np.zeros((size, size))
        for wl, p in zip(w, sample.paths):
            prev = p.initial_state
            for jt, js in p.jumps:
                if jt <= t and jt <= p.end_time:
                    c[index[prev], index[js]] += wl
                prev = js
        return c

    def exposure_at(t: float) -> np.ndarray:
        e = np.zeros(size)
        for wl, p in zip(w, sample.paths):
            under_observation = p.end_reason == ABSORBED or t < p.end_time
            if under_observation:
                e[index[state_at(p, t)]] += wl
        return e

    def exposure_left_at(t: float) -> np.ndarray:
        e = np.zeros(size)
        for wl, p in zip(w, sample.paths):
            under_observation = p.end_reason == ABSORBED or t <= p.end_time
            if under_observation:
                e[index[state_strictly_before(p, t)]] += wl
        return e

    def censoring_at(t: float) -> np.ndarray:
        c = np.zeros(size)
        for wl, p in zip(w, sample.paths):
            if p.end_reason == CENSORED and p.end_time <= t:
                c[index[p.final_state]] += wl
        return c

    counts_values = np.array([counts_at(t) for t in grid]).reshape(m, size, size)
    counts = StepMatrix(np.array(grid), counts_values)

    cens_values = np.array([censoring_at(t) for t in grid]).reshape(m, size)
    censoring = {
        s: StepCurve(np.array(grid), cens_values[:, i], 0.0) for i, s in enumerate(states)
    }

    initial = exposure_at(0.0)
    exposure_values = np.array([exposure_at(t) for t in grid]).reshape(m, size)
    exposure = {
        s: StepCurve(np.array(grid), exposure_values[:, i], float(initial[i]))
        for i, s in enumerate(states)
    }

    hazard_values = np.zeros((m, size, size))
    floor_hits: dict[int, list[float]] = {s: [] for s in states}
    previous_counts = np.zeros((size, size))
    running = np.zeros((size, size))
    for pos, t in enumerate(grid):
        left = exposure_left_at(t)
        now = counts_values[pos]
        delta = now - previous_counts
        previous_counts = now
        step = np.zeros((size, size))
        for j in range(size):
            if left[j] < epsilon:
                floor_hits[states[j]].append(t)
            for k in range(size):
                if j != k:
                    step[j, k] = delta[j, k] / max(left[j], epsilon)
            step[j, j] = -sum(step[j, k] for k in range(size) if k != j)
        running = running + step
        hazard_values[pos] = running
    hazard = StepMatrix(np.array(grid), hazard_values)

    estimate = HazardEstimate(
        hazard=hazard,
        epsilon=float(epsilon),
        exposure=exposure,
        counts=counts,
        floor_active={s: tuple(v) for s, v in floor_hits.items()},
        states=states,
    )

    occ_values = np.zeros((m, size))
    increments = [hazard_values[0]] + [
        hazard_values[i] - hazard_values[i - 1] for i in range(1, m)
    ]
    for pos in range(m):
        product = np.eye(size)
        for i in range(pos + 1):
            product = product @ (np.eye(size) + increments[i])
        occ_values[pos] = initial @ product
    occupation = OccupationEstimate(np.array(grid), occ_values, initial, states)
    return estimate, occupation


def _covariate_sampler(laws: list[dict]):
    def draw(rng):
        out = []
        for law in laws:
            kind = law["law"]
            if kind == "uniform":
                out.append(rng.uniform(law["low"], law["high"]))
            elif kind == "normal":
                out.append(rng.normal(law["mean"], law["sd"]))
            elif kind == "discrete":
                out.append(float(rng.choice(law["values"], p=law["probs"])))
            else:
                raise ValueError(f"unknown covariate law {kind!r}")
        return tuple(out)

    return draw


def _censoring_sampler(law: dict, dim: int):
    kind = law["law"]
    if kind == "exponential":
        rate_expr = str(law["rate"])
        rate_fn, _ = compile_expression(rate_expr, dim)

        def draw(rng, x):
            rate = rate_fn(0.0, 0.0, x)
            if rate <= 0:
                raise ValueError(f"censoring rate must be positive, got {rate}")
            return rng.exponential(1.0 / rate)

    elif kind == "uniform":
        low, high = float(law["low"]), float(law["high"])
        if not 0 <= low < high:
            raise ValueError("uniform censoring needs 0 <= low < high")

        def draw(rng, x):
            return rng.uniform(low, high)

    elif kind == "fixed":
        value = float(law["value"])
        if not value > 0:
            raise ValueError("fixed censoring time must be positive")

        def draw(rng, x):
            return value

    else:
        raise ValueError(f"unknown censoring law {kind!r}")
    return draw


def load_scenario(source) -> dict:
    """Parse a scenario JSON file or mapping.

    Returns a dict with keys ``intensity``, ``censoring``, ``n`` and
    ``seed`` ready for :func:`simulate_sample`.
    """
    if isinstance(source, dict):
        raw = source
    else:
        with open(source, encoding="utf-8") as handle:
            raw = json.load(handle)
    try:
        states = tuple(int(s) for s in raw["states"])
        absorbing = frozenset(int(s) for s in raw.get("absorbing", ()))
        space = StateSpace(states, absorbing)
        kind = raw.get("kind", MARKOV)
        initial = int(raw["initial_state"])
        laws = list(raw["covariates"])
        dim = len(laws)
        rate_exprs = dict(raw["rates"])
        censoring_law = dict(raw["censoring"])
        n = int(raw["n"])
        seed = int(raw["seed"])
    except KeyError as err:
        raise ValueError(f"scenario missing field {err.args[0]!r}") from None

    compiled: dict[tuple[int, int], callable] = {}
    time_constant = True
    for key, expr in rate_exprs.items():
        j_txt, _, k_txt = key.partition("->")
        try:
            j, k = int(j_txt), int(k_txt)
        except ValueError:
            raise ValueError(f"bad rate key {key!r}, expected 'j->k'") from None
        if j not in states or k not in states or j == k:
            raise ValueError(f"bad rate key {key!r} for states {states}")
        fn, used = compile_expression(str(expr), dim)
        compiled[(j, k)] = fn
        if used & {"t", "duration"}:
            time_constant = False

    def rate(j, k, t, duration, x):
        fn = compiled.get((j, k))
        return fn(t, duration, x) if fn else 0.0

    intensity = IntensitySpec(
        kind=kind,
        rate=rate,
        covariate_law=_covariate_sampler(laws),
        state_space=space,
        initial_state=initial,
        time_constant=time_constant,
        thinning_window=float(raw.get("thinning_window", 0.25)),
    )
    censoring = CensoringSpec(law=_censoring_sampler(censoring_law, dim))
    return {"intensity": intensity, "censoring": censoring, "n": n, "seed": seed}


def default_scenario_json(n: int = 500, seed: int = 1) -> dict:
    """JSON form of the default scenario, ready to serialize or load."""
    return {
        "states": [1, 2, 3],
        "absorbing": [3],
        "initial_state": 1,
        "kind": MARKOV,
        "covariates": [{"law": "uniform", "low": 0.0, "high": 1.0}],
        "rates": {
            "1->2": "0.8*(1+x1)",
            "1->3": "0.4*(1+x1)",
            "2->3": "0.6*(1+x1)",
        },
        "censoring": {"law": "exponential", "rate": "0.3"},
        "n": n,
        "seed": seed,
    }


def default_scenario(n: int = 500, seed: int = 1) -> dict:
    """Irreversible three-state illness-death model used by the checks.

    Transitions 1->2, 1->3 and 2->3 at base rates 0.8, 0.4, 0.6 scaled
    by ``1 + x`` with a uniform covariate on the unit interval, censored
    at an independent exponential with rate 0.3.
    """
    return load_scenario(default_scenario_json(n, seed))
