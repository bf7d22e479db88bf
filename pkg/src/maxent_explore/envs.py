"""Simulation environments with batched, stateless step functions.

Every environment exposes `reset(rng, n) -> (n, obs_dim)` and
`step(states, actions) -> (n, obs_dim)`; dynamics are pure functions of
the current observation, so determinism reduces to seeding and many
instances can run in lockstep. Episodes never terminate; the rollout
horizon is owned by the sampler.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    action_dim: int
    action_low: float
    action_high: float
    entropy_feature_indices: tuple
    # Fixed 2-D bounding box [(lo_x, hi_x), (lo_y, hi_y)] for heatmaps and
    # discretized entropy, over the first two entropy features.
    heatmap_bounds: tuple
    # Suggested affine input conditioning for policy networks: maps each
    # observation dimension roughly onto [-1, 1]. Entropy estimation is
    # always over raw features; this only affects network inputs when a
    # training config opts in.
    obs_loc: tuple = ()
    obs_scale: tuple = ()

    def __post_init__(self):
        if not self.entropy_feature_indices:
            raise ValueError("entropy_feature_indices must be non-empty")
        if any(i < 0 or i >= self.obs_dim for i in self.entropy_feature_indices):
            raise ValueError("entropy_feature_indices out of range")


def _check_shapes(states, actions, obs_dim, action_dim):
    if states.ndim != 2 or states.shape[1] != obs_dim:
        raise ValueError(f"states must be (n, {obs_dim}), got {states.shape}")
    if actions.shape != (states.shape[0], action_dim):
        raise ValueError(
            f"actions must be ({states.shape[0]}, {action_dim}), "
            f"got {actions.shape}")


def _segments_cross(p, q, walls):
    """Proper-or-touching intersection of move segments with wall segments.

    p, q: (B, 2) endpoints of each move. walls: (W, 2, 2). Returns (B,)
    bool, True where the move touches any wall. Counting endpoint touches
    as hits keeps the agent strictly inside open space.
    """
    a, b = walls[:, 0], walls[:, 1]  # (W, 2)

    def cross(o, d1, d2):
        return ((d1[..., 0] - o[..., 0]) * (d2[..., 1] - o[..., 1])
                - (d1[..., 1] - o[..., 1]) * (d2[..., 0] - o[..., 0]))

    p_ = p[:, None, :]
    q_ = q[:, None, :]
    a_ = a[None, :, :]
    b_ = b[None, :, :]
    d1 = cross(p_, q_, a_)
    d2 = cross(p_, q_, b_)
    d3 = cross(a_, b_, p_)
    d4 = cross(a_, b_, q_)
    proper = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0)) \
        & (d1 != 0) & (d2 != 0) & (d3 != 0) & (d4 != 0)

    def on_segment(o, e, pt):
        collinear = cross(o, e, pt) == 0
        inside = ((np.minimum(o[..., 0], e[..., 0]) <= pt[..., 0])
                  & (pt[..., 0] <= np.maximum(o[..., 0], e[..., 0]))
                  & (np.minimum(o[..., 1], e[..., 1]) <= pt[..., 1])
                  & (pt[..., 1] <= np.maximum(o[..., 1], e[..., 1])))
        return collinear & inside

    touch = (on_segment(a_, b_, p_) | on_segment(a_, b_, q_)
             | on_segment(p_, q_, a_) | on_segment(p_, q_, b_))
    return (proper | touch).any(axis=1)


class GridWorld:
    """Continuous four-room world (rooms 5x5 units, four hallways).

    The map spans [0, size]^2 with interior walls on the half lines,
    interrupted by hallways of width 1 centered on each shared wall.
    Displacement is clamped to +-max_step per axis; any move whose
    segment touches a wall is ignored and the agent stays put. Episodes
    start uniformly inside a 1x1 square centered in the bottom-left room.
    The full wall-segment list is versioned here so visitation maps are
    comparable across runs.
    """

    max_step = 0.2

    def __init__(self, layout: str = "four_rooms", size: float = 10.0):
        self.size = float(size)
        self.layout = layout
        s, h = self.size, self.size / 2.0
        outer = [
            ((0.0, 0.0), (s, 0.0)),
            ((s, 0.0), (s, s)),
            ((s, s), (0.0, s)),
            ((0.0, s), (0.0, 0.0)),
        ]
        if layout == "four_rooms":
            q1, q3 = h / 2.0, 3.0 * h / 2.0  # hallway centers per axis
            inner = [
                ((h, 0.0), (h, q1 - 0.5)),
                ((h, q1 + 0.5), (h, q3 - 0.5)),
                ((h, q3 + 0.5), (h, s)),
                ((0.0, h), (q1 - 0.5, h)),
                ((q1 + 0.5, h), (q3 - 0.5, h)),
                ((q3 + 0.5, h), (s, h)),
            ]
            start_center = (q1, q1)
        elif layout == "open":
            inner = []
            start_center = (h, h)
        else:
            raise ValueError(f"unknown layout {layout!r}")
        self.walls = np.array(outer + inner, dtype=np.float64)
        self.start_low = np.array(start_center) - 0.5
        self.start_high = np.array(start_center) + 0.5
        self.spec = EnvSpec(
            name="gridworld" if layout == "four_rooms" else "gridworld-open",
            obs_dim=2, action_dim=2,
            action_low=-self.max_step, action_high=self.max_step,
            entropy_feature_indices=(0, 1),
            heatmap_bounds=((0.0, s), (0.0, s)),
            obs_loc=(h, h), obs_scale=(h, h),
        )

    def reset(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        return rng.uniform(self.start_low, self.start_high, size=(n, 2))

    def step(self, states, actions) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        _check_shapes(states, actions, 2, 2)
        d = np.clip(actions, -self.max_step, self.max_step)
        proposal = states + d
        blocked = _segments_cross(states, proposal, self.walls)
        return np.where(blocked[:, None], states, proposal)


@dataclass(frozen=True)
class MountainCarParams:
    """Standard continuous mountain-car constants (pinned, not hard-coded)."""
    min_position: float = -1.2
    max_position: float = 0.6
    max_speed: float = 0.07
    power: float = 0.0015
    gravity: float = 0.0025
    min_action: float = -1.0
    max_action: float = 1.0
    reset_position_low: float = -0.6
    reset_position_high: float = -0.4


class MountainCar:
    """Continuous mountain car with a wall on top of the right mountain.

    Observation is (position, velocity). Reaching the right position bound
    zeroes the velocity instead of ending the episode, so the environment
    is non-episodic; the left bound behaves as in the standard benchmark.
    """

    def __init__(self, params: MountainCarParams = MountainCarParams()):
        self.params = params
        mid = 0.5 * (params.min_position + params.max_position)
        half = 0.5 * (params.max_position - params.min_position)
        self.spec = EnvSpec(
            name="mountaincar", obs_dim=2, action_dim=1,
            action_low=params.min_action, action_high=params.max_action,
            entropy_feature_indices=(0, 1),
            heatmap_bounds=((params.min_position, params.max_position),
                            (-params.max_speed, params.max_speed)),
            obs_loc=(mid, 0.0), obs_scale=(half, params.max_speed),
        )

    def reset(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        pos = rng.uniform(self.params.reset_position_low,
                          self.params.reset_position_high, size=n)
        return np.stack([pos, np.zeros(n)], axis=1)

    def step(self, states, actions) -> np.ndarray:
        p = self.params
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        _check_shapes(states, actions, 2, 1)
        force = np.clip(actions[:, 0], p.min_action, p.max_action)
        pos, vel = states[:, 0], states[:, 1]
        vel = vel + force * p.power - p.gravity * np.cos(3.0 * pos)
        vel = np.clip(vel, -p.max_speed, p.max_speed)
        pos = pos + vel
        pos = np.clip(pos, p.min_position, p.max_position)
        vel = np.where((pos >= p.max_position), 0.0, vel)  # the wall
        vel = np.where((pos <= p.min_position) & (vel < 0.0), 0.0, vel)
        return np.stack([pos, vel], axis=1)


class BoxWorld:
    """Axis-aligned [0, size]^dim world with clamped moves and no walls.

    Scalability stand-in for very high-dimensional navigation: per-axis
    displacement clamp of +-max_step, positions clamped to the box.
    """

    max_step = 0.2

    def __init__(self, dim: int = 2, size: float = 5.0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        self.size = float(size)
        center = np.full(self.dim, self.size / 2.0)
        self.start_low = center - 0.5
        self.start_high = center + 0.5
        half = self.size / 2.0
        self.spec = EnvSpec(
            name=f"ndgrid{self.dim}", obs_dim=self.dim, action_dim=self.dim,
            action_low=-self.max_step, action_high=self.max_step,
            entropy_feature_indices=tuple(range(self.dim)),
            heatmap_bounds=((0.0, self.size), (0.0, self.size)) if self.dim >= 2
            else ((0.0, self.size), (0.0, 1.0)),
            obs_loc=(half,) * self.dim, obs_scale=(half,) * self.dim,
        )

    def reset(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        return rng.uniform(self.start_low, self.start_high, size=(n, self.dim))

    def step(self, states, actions) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        _check_shapes(states, actions, self.dim, self.dim)
        d = np.clip(actions, -self.max_step, self.max_step)
        return np.clip(states + d, 0.0, self.size)


_REGISTRY = {
    "gridworld": lambda **kw: GridWorld(layout="four_rooms", **kw),
    "gridworld-open": lambda **kw: GridWorld(layout="open", **kw),
    "mountaincar": lambda **kw: MountainCar(
        MountainCarParams(**kw) if kw else MountainCarParams()),
    "ndgrid": lambda **kw: BoxWorld(**kw),
}


def env_names():
    return sorted(_REGISTRY)


def make_env(name: str, **kwargs):
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; known: {env_names()}") from None
    return factory(**kwargs)
