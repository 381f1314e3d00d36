"""Continuous-time jump trajectories and their counting-process diagnostics.

Between clicks the state follows Theta -> exp(s L0) Theta / tr(exp(s L0) Theta); at a click of
detector i it jumps to J_i(Theta) / tr J_i(Theta). Click times are drawn exactly by inverting
the no-click probability s -> tr exp(s L0) Theta.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import settings
from .logger import get_logger
from .model import UnravelingDecomposition
from .numlin import (
    ComplexMatrix,
    DensityMatrix,
    MatrixLike,
    NearDefectiveError,
    Superoperator,
    as_complex_matrix,
    devectorize,
    eig,
    matrix_exp,
    trace_functional,
    vectorize,
)
from .sampling import Seed, make_rng, open_unit_draw, sample_index

logger = get_logger(__name__)


class JumpSimulationError(Exception):
    """Base jump simulation error."""
    pass


class DecompositionInvalidError(JumpSimulationError):
    """Survival probability left [0, 1] or increased in time."""
    pass


class DarkStateError(JumpSimulationError):
    """A jump was requested from a state with zero total rate."""
    pass


class ForbiddenJumpError(JumpSimulationError):
    """A jump map annihilates the state."""
    pass


class AccumulationGuardError(JumpSimulationError):
    """Click count exceeded the configured cap."""
    pass


class RecordOrderError(JumpSimulationError):
    """Detection record is out of time order."""
    pass


@dataclass(frozen=True)
class DetectionEvent:
    """A click of detector ``detector`` (1-based) at ``time``."""

    time: float
    detector: int

    def __post_init__(self):
        if not np.isfinite(self.time) or self.time < 0:
            raise ValueError(f"Click time must be finite and non-negative, got {self.time}")
        if self.detector < 1:
            raise ValueError(f"Detector index is 1-based, got {self.detector}")


@dataclass(frozen=True)
class DetectionRecord:
    """Time-ordered clicks observed up to the simulation horizon."""

    events: Tuple[DetectionEvent, ...] = ()

    def __post_init__(self):
        events = tuple(self.events)
        for previous, current in zip(events, events[1:]):
            if current.time < previous.time:
                raise RecordOrderError(f"Click at {current.time} recorded after click at {previous.time}")
        object.__setattr__(self, "events", events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def times(self) -> np.ndarray:
        """Click times."""
        return np.array([event.time for event in self.events], dtype=float)

    def counts_until(self, times: np.ndarray, num_detectors: int) -> np.ndarray:
        """N_t^i for each t in ``times``: clicks of detector i at or before t."""
        counts = np.zeros((len(times), num_detectors), dtype=np.int64)
        for detector in range(1, num_detectors + 1):
            clicks = np.array([e.time for e in self.events if e.detector == detector], dtype=float)
            counts[:, detector - 1] = np.searchsorted(clicks, times, side="right")
        return counts


@dataclass(frozen=True, eq=False)
class SampledPath:
    """States of one trajectory on a strictly increasing time grid.

    ``states[j]`` is the state at ``times[j]`` (after any click at that time);
    ``left_states[j]`` is its left limit, which differs from ``states[j]`` only at click nodes.
    ``on_grid[j]`` marks nodes of the uniform output grid.
    """

    times: np.ndarray
    states: np.ndarray
    left_states: np.ndarray
    record: DetectionRecord = field(default_factory=DetectionRecord)
    on_grid: Optional[np.ndarray] = None
    num_detectors: int = 0
    unraveling: str = "jump"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=np.complex128)
        left_states = np.asarray(self.left_states, dtype=np.complex128)
        if times.ndim != 1 or len(times) == 0:
            raise ValueError("Path needs a non-empty 1-D time grid")
        if times[0] != 0.0:
            raise ValueError(f"Path time grid must start at 0, got {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise ValueError("Path times must be strictly increasing")
        if states.shape[0] != len(times) or left_states.shape != states.shape:
            raise ValueError("One state and one left limit per time node are required")
        on_grid = np.ones(len(times), dtype=bool) if self.on_grid is None else np.asarray(self.on_grid, dtype=bool)
        for name, value in (("times", times), ("states", states), ("left_states", left_states), ("on_grid", on_grid)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def from_states(
        cls, times: Sequence[float], states: Sequence[MatrixLike], unraveling: str = "jump"
    ) -> "SampledPath":
        """Path without clicks, e.g. a deterministic flow or a diffusive trajectory."""
        stack = np.array([as_complex_matrix(s) for s in states])
        return cls(times=np.asarray(times, dtype=float), states=stack, left_states=stack, unraveling=unraveling)

    @property
    def dim(self) -> int:
        """Hilbert space dimension."""
        return self.states.shape[1]

    @property
    def horizon(self) -> float:
        """Last time node."""
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.times)

    def state(self, index: int) -> DensityMatrix:
        """State at node ``index``."""
        return DensityMatrix(self.states[index])

    @property
    def final_state(self) -> DensityMatrix:
        """State at the horizon."""
        return DensityMatrix(self.states[-1])

    def left_value(self, t: float) -> ComplexMatrix:
        """Left limit of the path at t, interpolated linearly inside a cell."""
        if t < 0 or t > self.horizon:
            raise ValueError(f"Time {t} outside [0, {self.horizon}]")
        j = int(np.searchsorted(self.times, t, side="left"))
        if j == 0:
            return self.states[0].copy()
        if self.times[j] == t:
            return self.left_states[j].copy()
        t0, t1 = self.times[j - 1], self.times[j]
        w = (t - t0) / (t1 - t0)
        return (1 - w) * self.states[j - 1] + w * self.left_states[j]

    def cumulative_integral(self) -> np.ndarray:
        """Trapezoidal integral of the path from 0 to every node, using left limits at clicks."""
        widths = np.diff(self.times)[:, None, None]
        cells = 0.5 * widths * (self.states[:-1] + self.left_states[1:])
        integral = np.zeros_like(self.states)
        integral[1:] = np.cumsum(cells, axis=0)
        return integral

    def integral(self, t: float) -> ComplexMatrix:
        """Trapezoidal integral of the path over [0, t]."""
        if t < 0 or t > self.horizon:
            raise ValueError(f"Time {t} outside [0, {self.horizon}]")
        cumulative = self.cumulative_integral()
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        if self.times[j] == t:
            return cumulative[j]
        partial = 0.5 * (t - self.times[j]) * (self.states[j] + self.left_value(t))
        return cumulative[j] + partial

    def grid_view(self) -> "SampledPath":
        """Restriction to the uniform output grid (drops click-only nodes)."""
        mask = self.on_grid
        return SampledPath(
            times=self.times[mask],
            states=self.states[mask],
            left_states=self.left_states[mask],
            record=self.record,
            num_detectors=self.num_detectors,
            unraveling=self.unraveling,
        )


@dataclass(frozen=True)
class JumpAt:
    """Next click happens after waiting ``time``."""

    time: float


@dataclass(frozen=True)
class NoJumpBefore:
    """No click before ``horizon``."""

    horizon: float


WaitingTime = Union[JumpAt, NoJumpBefore]


@dataclass(eq=False)
class CountingDiagnostics:
    """Counting processes, compensators and the residual martingale along one path."""

    times: np.ndarray
    counts: np.ndarray
    compensators: np.ndarray
    martingale: np.ndarray

    @property
    def compensated(self) -> np.ndarray:
        """N_t - int_0^t tr J_i(Theta_u) du, one column per detector."""
        return self.counts - self.compensators

    def index_at(self, t: float) -> int:
        """Last node at or before t."""
        index = int(np.searchsorted(self.times, t, side="right")) - 1
        if index < 0:
            raise ValueError(f"Time {t} precedes the path")
        return index


class NoClickFlow:
    """exp(s L0) with a cached spectral decomposition when L0 is well conditioned."""

    def __init__(self, l0: Superoperator):
        self.l0 = l0
        self.dim = l0.dim
        self._trace_row = trace_functional(l0.dim)
        try:
            system = eig(l0.matrix, condition_limit=settings.propagator_cache_condition_limit)
            self._values = system.values
            self._vectors = system.vectors
            self._inverse = system.inverse
            self._trace_weights = self._trace_row @ system.vectors
            self.spectral = True
        except NearDefectiveError as e:
            logger.debug(f"No-click flow falls back to matrix exponentials: {e}")
            self.spectral = False

    def evolve(self, rho: MatrixLike, s: float) -> ComplexMatrix:
        """Unnormalized exp(s L0) rho."""
        vec = vectorize(rho)
        if self.spectral:
            out = self._vectors @ (np.exp(self._values * s) * (self._inverse @ vec))
        else:
            out = matrix_exp(self.l0.matrix, s) @ vec
        return devectorize(out, self.dim)

    def survival_function(self, rho: MatrixLike) -> Callable[[float], float]:
        """s -> tr exp(s L0) rho."""
        vec = vectorize(rho)
        if self.spectral:
            weights = self._trace_weights * (self._inverse @ vec)
            values = self._values
            return lambda s: float(np.real(np.sum(weights * np.exp(values * s))))
        row = self._trace_row
        l0 = self.l0.matrix
        return lambda s: float(np.real(row @ (matrix_exp(l0, s) @ vec)))


def _checked_survival(value: float) -> float:
    slack = settings.survival_slack
    if value < -slack or value > 1 + slack:
        raise DecompositionInvalidError(f"No-click probability {value:.12g} outside [0, 1]")
    return min(1.0, max(0.0, value))


def survival(rho: MatrixLike, t: float, l0: Superoperator) -> float:
    """Probability tr(exp(t L0) rho) of no click during [0, t]."""
    if t < 0:
        raise ValueError(f"Survival time must be non-negative, got {t}")
    vec = vectorize(rho)
    value = float(np.real(trace_functional(l0.dim) @ (matrix_exp(l0.matrix, t) @ vec)))
    return _checked_survival(value)


def sample_waiting_time(
    rho: MatrixLike,
    u: float,
    horizon: float,
    l0: Superoperator,
    flow: Optional[NoClickFlow] = None,
) -> WaitingTime:
    """Invert the no-click probability at level u by bisection."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"Uniform draw must lie in (0, 1), got {u}")
    horizon = max(0.0, horizon)
    flow = flow or NoClickFlow(l0)
    curve = flow.survival_function(rho)

    s_hi = _checked_survival(curve(horizon))
    if s_hi >= u:
        return NoJumpBefore(horizon)

    lo, hi = 0.0, horizon
    s_lo = _checked_survival(curve(0.0))
    tolerance = settings.bisection_rel_tol * horizon
    slack = settings.survival_slack
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        s_mid = _checked_survival(curve(mid))
        if s_mid > s_lo + slack or s_mid < s_hi - slack:
            raise DecompositionInvalidError(
                f"No-click probability is not monotone near t={mid:.6g} "
                f"({s_lo:.6g} -> {s_mid:.6g} -> {s_hi:.6g})"
            )
        if s_mid >= u:
            lo, s_lo = mid, s_mid
        else:
            hi, s_hi = mid, s_mid
    return JumpAt(0.5 * (lo + hi))


def jump_rates(rho: MatrixLike, jumps: Sequence[Superoperator]) -> np.ndarray:
    """tr J_i(rho) for each detector, clipped at 0."""
    return np.array([max(0.0, jump.trace_of(rho)) for jump in jumps], dtype=float)


def jump_probabilities(rho: MatrixLike, jumps: Sequence[Superoperator]) -> np.ndarray:
    """Conditional probability of each detector given that a click occurs in state rho."""
    rates = jump_rates(rho, jumps)
    total = float(np.sum(rates))
    if total <= settings.rate_floor:
        raise DarkStateError(f"Total jump rate {total:.3e} vanishes; no click can occur")
    return rates / total


def apply_jump(rho: MatrixLike, jump: Superoperator) -> DensityMatrix:
    """Post-click state J(rho) / tr J(rho)."""
    image = jump.apply(rho)
    weight = float(np.real(np.trace(image)))
    if weight <= settings.rate_floor:
        raise ForbiddenJumpError(f"Jump map annihilates the state (trace {weight:.3e})")
    image = image / weight
    return DensityMatrix((image + image.conj().T) / 2)


def _normalized(matrix: ComplexMatrix) -> ComplexMatrix:
    trace = float(np.real(np.trace(matrix)))
    if trace <= 0:
        raise DecompositionInvalidError(f"Conditional state has non-positive trace {trace:.3e}")
    matrix = matrix / trace
    return (matrix + matrix.conj().T) / 2


def uniform_grid(horizon: float, grid_step: float) -> np.ndarray:
    """0, step, 2 step, ..., ending exactly at the horizon."""
    if horizon <= 0 or grid_step <= 0:
        raise ValueError("Horizon and grid step must be positive")
    steps = int(np.floor(horizon / grid_step + 1e-9))
    grid = np.arange(steps + 1, dtype=float) * grid_step
    if horizon - grid[-1] > 1e-9 * grid_step:
        grid = np.append(grid, horizon)
    else:
        grid[-1] = horizon
    return grid


def simulate(
    decomposition: UnravelingDecomposition,
    theta0: DensityMatrix,
    horizon: float,
    grid_step: float,
    seed: Seed,
    max_clicks: Optional[int] = None,
) -> SampledPath:
    """Sample one jump trajectory on [0, horizon]."""
    if theta0.dim != decomposition.dim:
        raise ValueError(f"Initial state has d={theta0.dim}, model has d={decomposition.dim}")
    max_clicks = settings.max_clicks if max_clicks is None else max_clicks
    rng = make_rng(seed)
    flow = NoClickFlow(decomposition.l0)
    grid = uniform_grid(horizon, grid_step)

    theta = theta0.matrix.copy()
    times: List[float] = [0.0]
    states: List[ComplexMatrix] = [theta]
    left_states: List[ComplexMatrix] = [theta]
    on_grid: List[bool] = [True]
    events: List[DetectionEvent] = []

    t = 0.0
    next_grid = 1
    while True:
        outcome = sample_waiting_time(theta, open_unit_draw(rng), horizon - t, decomposition.l0, flow=flow)
        clicked = isinstance(outcome, JumpAt)
        t_stop = t + outcome.time if clicked else horizon

        while next_grid < len(grid) and (grid[next_grid] < t_stop or (not clicked and grid[next_grid] <= t_stop)):
            node_state = _normalized(flow.evolve(theta, grid[next_grid] - t))
            times.append(float(grid[next_grid]))
            states.append(node_state)
            left_states.append(node_state)
            on_grid.append(True)
            next_grid += 1

        if not clicked:
            break

        pre = _normalized(flow.evolve(theta, outcome.time))
        detector = sample_index(jump_probabilities(pre, decomposition.jumps), float(rng.random()))
        post = apply_jump(pre, decomposition.jumps[detector]).matrix
        events.append(DetectionEvent(t_stop, detector + 1))
        if len(events) > max_clicks:
            raise AccumulationGuardError(f"More than {max_clicks} clicks before t={t_stop:.6g}")

        if t_stop == times[-1]:
            # repeated click at the same instant: keep the earliest left limit
            states[-1] = post
        else:
            lands_on_grid = next_grid < len(grid) and grid[next_grid] == t_stop
            times.append(t_stop)
            states.append(post)
            left_states.append(pre)
            on_grid.append(lands_on_grid)
            if lands_on_grid:
                next_grid += 1
        theta = post
        t = t_stop

    logger.debug(f"Jump trajectory finished: horizon={horizon}, clicks={len(events)}")
    return SampledPath(
        times=np.array(times),
        states=np.array(states),
        left_states=np.array(left_states),
        record=DetectionRecord(tuple(events)),
        on_grid=np.array(on_grid),
        num_detectors=decomposition.num_jumps,
        unraveling="jump",
    )


def record_density(
    record: DetectionRecord,
    theta0: DensityMatrix,
    t: float,
    decomposition: UnravelingDecomposition,
) -> Tuple[ComplexMatrix, float]:
    """Unnormalized conditional state and click-record density at time t."""
    l0 = decomposition.l0.matrix
    vec = vectorize(theta0)
    last = 0.0
    for event in record:
        if event.time < last:
            raise RecordOrderError(f"Click at {event.time} recorded after {last}")
        if event.detector > decomposition.num_jumps:
            raise ValueError(f"Detector {event.detector} does not exist (k={decomposition.num_jumps})")
        vec = matrix_exp(l0, event.time - last) @ vec
        vec = decomposition.jumps[event.detector - 1].matrix @ vec
        last = event.time
    if t < last:
        raise RecordOrderError(f"Record extends to {last}, beyond t={t}")
    vec = matrix_exp(l0, t - last) @ vec
    state = devectorize(vec, decomposition.dim)
    return state, max(0.0, float(np.real(np.trace(state))))


def counting_diagnostics(
    path: SampledPath, generator: Superoperator, jumps: Sequence[Superoperator]
) -> CountingDiagnostics:
    """Click counts, their compensators and M_t = Theta_t - Theta_0 - int L(Theta) at every node.

    Both integrands are linear in the state, so they are evaluated on the trapezoidal
    integral of the path itself.
    """
    cumulative = path.cumulative_integral()
    vec_cumulative = cumulative.transpose(0, 2, 1).reshape(len(path), -1)

    counts = path.record.counts_until(path.times, len(jumps))
    trace_row = trace_functional(path.dim)
    compensators = np.column_stack(
        [np.real(vec_cumulative @ (trace_row @ jump.matrix)) for jump in jumps]
    ) if jumps else np.zeros((len(path), 0))

    return CountingDiagnostics(
        times=path.times.copy(),
        counts=counts,
        compensators=compensators,
        martingale=residual_martingale(path, generator, cumulative),
    )


def residual_martingale(
    path: SampledPath, generator: Superoperator, cumulative: Optional[np.ndarray] = None
) -> np.ndarray:
    """M_t = Theta_t - Theta_0 - int_0^t L(Theta_u) du at every node, for jump and diffusive paths."""
    if cumulative is None:
        cumulative = path.cumulative_integral()
    vec_cumulative = cumulative.transpose(0, 2, 1).reshape(len(path), -1)
    drift = (vec_cumulative @ generator.matrix.T).reshape(len(path), path.dim, path.dim).transpose(0, 2, 1)
    return path.states - path.states[0] - drift
