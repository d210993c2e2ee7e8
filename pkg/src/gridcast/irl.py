"""Grid-based maximum-entropy IRL.

A per-cell reward map is trained so that the soft-optimal policy's expected
state visitations match those of quantized expert demonstrations. Planning is
finite-horizon soft value iteration with a time-indexed policy; the induced
path distribution is P(tau | s0) proportional to exp(sum of rewards over
entered states), which the enumeration oracle in :mod:`gridcast.oracle`
verifies exactly on small grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import (
    ACTIONS,
    N_ACTIONS,
    CellIndex,
    GridSpec,
    eight_connected_line,
    cells_adjacent,
    quantize_trajectory,
    valid_action_mask,
)
from . import rng


class IrlDivergenceError(RuntimeError):
    """Raised when training produces a non-finite loss or parameters."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


# ---------------------------------------------------------------------------
# Reward map
# ---------------------------------------------------------------------------

@dataclass
class RewardMapParams:
    """Parameters of the per-cell feature-to-reward map.

    ``linear`` mode: reward = features @ w + b. ``two_layer`` mode applies an
    affine layer, a rectifier, and a second affine layer, identically at every
    cell. The same container doubles as a gradient holder in the optimizer.
    """

    mode: str
    w: np.ndarray | None = None
    b: float = 0.0
    w1: np.ndarray | None = None
    b1: np.ndarray | None = None
    w2: np.ndarray | None = None
    b2: float = 0.0

    @staticmethod
    def linear(n_features: int) -> "RewardMapParams":
        return RewardMapParams(mode="linear", w=np.zeros(n_features))

    @staticmethod
    def two_layer(n_features: int, hidden: int = 16, seed: int = 0) -> "RewardMapParams":
        scale1 = 1.0 / math.sqrt(n_features)
        scale2 = 1.0 / math.sqrt(hidden)
        u = rng.uniform(seed, rng.STREAM_PARAMS, np.arange(hidden * n_features + 2 * hidden))
        w1 = (u[: hidden * n_features].reshape(hidden, n_features) - 0.5) * 2 * scale1
        b1 = (u[hidden * n_features: hidden * n_features + hidden] - 0.5) * 0.1
        w2 = (u[hidden * n_features + hidden:] - 0.5) * 2 * scale2
        return RewardMapParams(mode="two_layer", w1=w1, b1=b1, w2=w2)

    def as_vector(self) -> np.ndarray:
        if self.mode == "linear":
            return np.concatenate([self.w, [self.b]])
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    def with_vector(self, vec: np.ndarray) -> "RewardMapParams":
        if self.mode == "linear":
            return replace(self, w=vec[:-1].copy(), b=float(vec[-1]))
        h, f = self.w1.shape
        w1 = vec[: h * f].reshape(h, f).copy()
        b1 = vec[h * f: h * f + h].copy()
        w2 = vec[h * f + h: h * f + 2 * h].copy()
        return replace(self, w1=w1, b1=b1, w2=w2, b2=float(vec[-1]))


def _reward_raw(features: np.ndarray, params: RewardMapParams) -> np.ndarray:
    if params.mode == "linear":
        return features @ params.w + params.b
    z = features @ params.w1.T + params.b1
    return np.maximum(z, 0.0) @ params.w2 + params.b2


def reward_forward(features: np.ndarray, params: RewardMapParams) -> np.ndarray:
    """Per-cell reward, shifted so the maximum over cells is exactly zero.

    The shift stabilizes planning and leaves the policy unchanged; it is
    treated as a constant in backprop (see reward_backward).
    """
    if not np.all(np.isfinite(features)):
        raise ValueError("feature stack contains non-finite values")
    raw = _reward_raw(features, params)
    return raw - raw.max()


def reward_backward(features: np.ndarray, params: RewardMapParams,
                    grad_reward: np.ndarray) -> RewardMapParams:
    """Exact gradient of sum_s grad_reward(s) * R_unshifted(s) w.r.t. params."""
    if not np.all(np.isfinite(grad_reward)):
        raise ValueError("grad_reward contains non-finite values")
    g = grad_reward
    if params.mode == "linear":
        grad_w = np.tensordot(g, features, axes=([0, 1], [0, 1]))
        return RewardMapParams(mode="linear", w=grad_w, b=float(g.sum()))
    z = features @ params.w1.T + params.b1
    act = np.maximum(z, 0.0)
    grad_w2 = np.tensordot(g, act, axes=([0, 1], [0, 1]))
    grad_z = g[..., None] * params.w2 * (z > 0.0)
    grad_b1 = grad_z.sum(axis=(0, 1))
    grad_w1 = np.tensordot(grad_z, features, axes=([0, 1], [0, 1]))
    return RewardMapParams(mode="two_layer", w1=grad_w1, b1=grad_b1,
                           w2=grad_w2, b2=float(g.sum()))


# ---------------------------------------------------------------------------
# Planning and visitations
# ---------------------------------------------------------------------------

@dataclass
class PolicySchedule:
    """Time-indexed stochastic policy pi_t(a | s) with its valid-action mask."""

    probs: np.ndarray  # (horizon, rows, cols, 9); masked actions have prob 0
    valid: np.ndarray  # (rows, cols, 9) bool

    @property
    def horizon(self) -> int:
        return self.probs.shape[0]


@dataclass
class VisitationField:
    """Per-timestep state distributions D_t plus their sum over t >= 1."""

    per_step: np.ndarray  # (horizon + 1, rows, cols)
    total: np.ndarray     # (rows, cols), excludes the start step


def _action_slices(spec: GridSpec):
    """Per action: (source block, destination block) slice pairs."""
    out = []
    for dr, dc in ACTIONS:
        lo_r, hi_r = max(0, -dr), spec.rows - max(0, dr)
        lo_c, hi_c = max(0, -dc), spec.cols - max(0, dc)
        src = (slice(lo_r, hi_r), slice(lo_c, hi_c))
        dst = (slice(lo_r + dr, hi_r + dr), slice(lo_c + dc, hi_c + dc))
        out.append((src, dst))
    return out


def soft_value_iteration(reward: np.ndarray, spec: GridSpec, horizon: int):
    """Backward soft Bellman recursion with terminal V_horizon = 0.

    Q_t(s, a) = R(s') + V_{t+1}(s') for the deterministic successor s', with
    off-grid actions masked; V_t = logsumexp_a Q_t; pi_t = exp(Q_t - V_t).
    Returns (values, q_values, policy) where values is (horizon+1, rows, cols)
    and q_values is (horizon, rows, cols, 9).
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    reward = np.asarray(reward, dtype=np.float64)
    if reward.shape != (spec.rows, spec.cols):
        raise ValueError(f"reward shape {reward.shape} != grid {(spec.rows, spec.cols)}")
    valid = valid_action_mask(spec)
    slices = _action_slices(spec)
    values = np.zeros((horizon + 1, spec.rows, spec.cols))
    q_values = np.full((horizon, spec.rows, spec.cols, N_ACTIONS), -np.inf)
    policy = np.zeros_like(q_values)
    for t in range(horizon - 1, -1, -1):
        gain = reward + values[t + 1]
        q = q_values[t]
        for a, (src, dst) in enumerate(slices):
            q[src + (a,)] = gain[dst]
        # logsumexp over actions; STAY is always valid so the max is finite
        m = q.max(axis=-1)
        expq = np.exp(q - m[..., None])
        sumexp = expq.sum(axis=-1)
        values[t] = m + np.log(sumexp)
        policy[t] = expq / sumexp[..., None]
    return values, q_values, PolicySchedule(probs=policy, valid=valid)


def expected_visitation(policy: PolicySchedule, start: CellIndex, spec: GridSpec,
                        horizon: int) -> VisitationField:
    """Forward pass: D_0 = delta(start), D_{t+1} = sum_s,a D_t pi_t routed by steps."""
    if not spec.contains(start.row, start.col):
        raise ValueError(f"start {start} outside grid")
    slices = _action_slices(spec)
    per_step = np.zeros((horizon + 1, spec.rows, spec.cols))
    per_step[0, start.row, start.col] = 1.0
    for t in range(horizon):
        flow = per_step[t][..., None] * policy.probs[t]
        nxt = per_step[t + 1]
        for a, (src, dst) in enumerate(slices):
            nxt[dst] += flow[src + (a,)]
    return VisitationField(per_step=per_step, total=per_step[1:].sum(axis=0))


# ---------------------------------------------------------------------------
# Demonstrations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Demonstration:
    """An expert state sequence of length horizon + 1, pairwise adjacent."""

    cells: tuple[CellIndex, ...]

    def __post_init__(self):
        if len(self.cells) < 2:
            raise ValueError("demonstration needs at least 2 states")
        for a, b in zip(self.cells, self.cells[1:]):
            if not cells_adjacent(a, b):
                raise ValueError(f"demonstration jump {a} -> {b} is not 8-connected")

    def __len__(self) -> int:
        return len(self.cells)


def build_demonstration(future_points, spec: GridSpec, horizon: int) -> Demonstration:
    """Quantize a future trajectory into an expert path of exactly horizon+1 states.

    The future is resampled time-uniformly onto the planning cadence (one
    supervision point per planning step), so slow segments become repeated
    cells, i.e. STAY actions, and the expert path carries the speed profile.
    Steps faster than one cell are made reachable by inserting intermediate
    cells on the 8-connected line; the result is truncated to horizon+1 states
    or padded with terminal STAYs.
    """
    pts = np.asarray(future_points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValueError(f"expected >= 1 future points, got shape {pts.shape}")
    n = pts.shape[0]
    picks = np.ceil(np.arange(1, horizon + 1) * n / horizon).astype(int) - 1
    sampled = np.vstack([np.asarray(spec.anchor_world, dtype=np.float64), pts[picks]])
    per_step, _ = quantize_trajectory(sampled, spec)
    if per_step[0] != spec.anchor:
        raise ValueError("demonstration does not start at the anchor cell")
    path: list[CellIndex] = []
    for cell in per_step:
        if cell is None:
            break  # supervision truncates at the grid boundary
        if path and not cells_adjacent(path[-1], cell):
            path.extend(eight_connected_line(path[-1], cell))
        path.append(cell)
    if len(path) > horizon + 1:
        path = path[: horizon + 1]
    else:
        path = path + [path[-1]] * (horizon + 1 - len(path))
    return Demonstration(cells=tuple(path))


def build_path_demonstration(future_points, spec: GridSpec, horizon: int) -> Demonstration:
    """Expert path from the deduplicated spatial route, one cell per step.

    Complements build_demonstration for long-horizon supervision: the route's
    spatial extent enters at full resolution while its timing is dropped.
    Truncated to horizon+1 states or padded with terminal STAYs.
    """
    pts = np.asarray(future_points, dtype=np.float64)
    all_pts = np.vstack([np.asarray(spec.anchor_world, dtype=np.float64), pts])
    _, path = quantize_trajectory(all_pts, spec)
    if not path or path[0] != spec.anchor:
        raise ValueError("demonstration does not start at the anchor cell")
    if len(path) > horizon + 1:
        path = path[: horizon + 1]
    else:
        path = path + [path[-1]] * (horizon + 1 - len(path))
    return Demonstration(cells=tuple(path))


def expert_visitation(demos, spec: GridSpec, horizon: int) -> VisitationField:
    """Empirical per-step distributions over demos; total counts steps 1..horizon."""
    demos = list(demos)
    if not demos:
        raise ValueError("at least one demonstration required")
    per_step = np.zeros((horizon + 1, spec.rows, spec.cols))
    for demo in demos:
        if len(demo) < horizon + 1:
            raise ValueError(f"demonstration length {len(demo)} shorter than horizon+1 = {horizon + 1}")
        for t, cell in enumerate(demo.cells[: horizon + 1]):
            if not spec.contains(cell.row, cell.col):
                raise ValueError(f"demonstration cell {cell} outside grid")
            per_step[t, cell.row, cell.col] += 1.0
    per_step /= len(demos)
    return VisitationField(per_step=per_step, total=per_step[1:].sum(axis=0))


def path_reward(reward: np.ndarray, demo: Demonstration, horizon: int) -> float:
    """Sum of rewards over entered states (steps 1..horizon)."""
    cells = demo.cells[1: horizon + 1]
    return float(sum(reward[c.row, c.col] for c in cells))


def irl_loss_and_grad(reward: np.ndarray, demos, start: CellIndex, spec: GridSpec,
                      horizon: int):
    """MaxEnt negative log-likelihood and its exact gradient w.r.t. the reward.

    nll = V_0(start) - mean path reward; grad_R = E[mu] - mu_hat, the expected
    minus empirical visitation counts (descend it to raise likelihood).
    """
    demos = list(demos)
    if not demos:
        raise ValueError("at least one demonstration required")
    for demo in demos:
        if demo.cells[0] != start:
            raise ValueError(f"demonstration starts at {demo.cells[0]}, expected {start}")
    values, _, policy = soft_value_iteration(reward, spec, horizon)
    visit = expected_visitation(policy, start, spec, horizon)
    expert = expert_visitation(demos, spec, horizon)
    mean_reward = float(np.mean([path_reward(reward, d, horizon) for d in demos]))
    nll = float(values[0, start.row, start.col]) - mean_reward
    return nll, visit.total - expert.total


def _nll_only(reward: np.ndarray, demos, start: CellIndex, spec: GridSpec,
              horizon: int) -> float:
    values, _, _ = soft_value_iteration(reward, spec, horizon)
    mean_reward = float(np.mean([path_reward(reward, d, horizon) for d in demos]))
    return float(values[0, start.row, start.col]) - mean_reward


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    mode: str = "linear"
    hidden: int = 16
    optimizer: str = "adam"   # "adam" or "gd" (gd backtracks to stay monotone)
    lr: float = 0.05
    max_iters: int = 80
    tol: float = 1e-6
    init_seed: int = 0


@dataclass
class TrainDiagnostics:
    nll_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_grad_inf: float = float("nan")


def train_irl(features: np.ndarray, demos, start: CellIndex, spec: GridSpec,
              horizon: int, config: TrainConfig | None = None):
    """Fit the reward map by descending the MaxEnt NLL until |dNLL| < tol.

    Returns (params, diagnostics). Raises IrlDivergenceError when the loss or
    parameters go non-finite, reporting the offending iteration.
    """
    config = config or TrainConfig()
    demos = list(demos)
    if not demos:
        raise ValueError("at least one demonstration required")
    n_features = features.shape[-1]
    if config.mode == "linear":
        params = RewardMapParams.linear(n_features)
    elif config.mode == "two_layer":
        params = RewardMapParams.two_layer(n_features, config.hidden, config.init_seed)
    else:
        raise ValueError(f"unknown reward mode {config.mode!r}")

    diag = TrainDiagnostics()
    vec = params.as_vector()
    m = np.zeros_like(vec)
    v = np.zeros_like(vec)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    gd_lr = config.lr
    prev_nll = None
    grad_inf = float("nan")

    for it in range(1, config.max_iters + 1):
        params = params.with_vector(vec)
        reward = reward_forward(features, params)
        nll, grad_r = irl_loss_and_grad(reward, demos, start, spec, horizon)
        if not math.isfinite(nll):
            raise IrlDivergenceError("nll is non-finite", it)
        grad_vec = reward_backward(features, params, grad_r).as_vector()
        grad_inf = float(np.abs(grad_r).max())
        diag.nll_history.append(nll)
        diag.iterations = it

        if config.optimizer == "adam":
            m = beta1 * m + (1 - beta1) * grad_vec
            v = beta2 * v + (1 - beta2) * grad_vec ** 2
            m_hat = m / (1 - beta1 ** it)
            v_hat = v / (1 - beta2 ** it)
            vec = vec - config.lr * m_hat / (np.sqrt(v_hat) + eps)
        elif config.optimizer == "gd":
            # backtracking keeps the loss monotone; lr regrows after success
            stepped = False
            for _ in range(30):
                trial = vec - gd_lr * grad_vec
                trial_nll = _nll_only(
                    reward_forward(features, params.with_vector(trial)),
                    demos, start, spec, horizon)
                if math.isfinite(trial_nll) and trial_nll <= nll:
                    vec = trial
                    gd_lr = min(gd_lr * 1.25, 1e3)
                    stepped = True
                    break
                gd_lr *= 0.5
            if not stepped:
                diag.converged = True
                break
        else:
            raise ValueError(f"unknown optimizer {config.optimizer!r}")

        if not np.all(np.isfinite(vec)):
            raise IrlDivergenceError("parameters are non-finite", it)
        if math.isinf(config.tol) or (prev_nll is not None and abs(nll - prev_nll) < config.tol):
            diag.converged = True
            break
        prev_nll = nll

    diag.final_grad_inf = grad_inf
    return params.with_vector(vec), diag
