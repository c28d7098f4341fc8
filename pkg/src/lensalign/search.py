"""Black-box alignment algorithms and the episode driver.

Optimizers think in absolute target poses inside a reduced search box;
the episode driver turns each proposal into a sequence of clamped relative
moves, feeds observed scores back, and records the best-so-far trajectory.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .env import OPTIMUM, AlignmentEnv
from .surrogates import GPModel, ObjectiveSample, RFModel, expected_improvement, gp_fit, rf_fit

N_INIT = 10  # Latin-hypercube design proposals before model-guided search
N_CANDIDATES = 1024
N_INCUMBENT = 64
REACH_TOL = 1e-9


@dataclass(frozen=True)
class SearchBox:
    """Axis-aligned proposal bounds per active dim, centered at 0.5."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be 1-D arrays of equal length")
        if np.any(lo >= hi):
            raise ValueError("box must have lo < hi per dim")
        if np.any(lo < 0) or np.any(hi > 1):
            raise ValueError("box must lie within [0, 1]")
        if np.any(np.abs((lo + hi) / 2 - OPTIMUM) > 1e-9):
            raise ValueError("box must be centered at 0.5 per dim")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n_dims(self) -> int:
        return len(self.lo)

    @staticmethod
    def centered(n_dims: int, fraction: float = 0.08, mode: str = "volume") -> "SearchBox":
        """Box covering `fraction` of the unit cube: either that volume
        fraction (per-dim width fraction**(1/n)) or that width per dim."""
        if not (0 < fraction <= 1):
            raise ValueError("fraction must be in (0, 1]")
        if mode == "volume":
            width = fraction ** (1.0 / n_dims)
        elif mode == "per_dim":
            width = fraction
        else:
            raise ValueError(f"unknown box mode '{mode}'")
        half = width / 2.0
        return SearchBox(lo=np.full(n_dims, OPTIMUM - half), hi=np.full(n_dims, OPTIMUM + half))

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)


def random_propose(box: SearchBox, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample within the box."""
    return rng.uniform(box.lo, box.hi)


def latin_hypercube(n: int, box: SearchBox, rng: np.random.Generator) -> np.ndarray:
    """n stratified design points: one sample per axis stratum, strata
    permuted independently per dim."""
    d = box.n_dims
    u = (rng.permuted(np.tile(np.arange(n), (d, 1)), axis=1).T + rng.uniform(size=(n, d))) / n
    return box.lo + u * (box.hi - box.lo)


def bo_step(model, history: list[ObjectiveSample], box: SearchBox, rng: np.random.Generator) -> np.ndarray:
    """One Bayesian-optimization proposal: EI argmax over uniform
    candidates plus jittered copies of the incumbent best; falls back to
    the highest-variance candidate when EI vanishes everywhere."""
    best_idx = int(np.argmin([s.score for s in history]))
    best_score = history[best_idx].score
    incumbent = history[best_idx].proposal
    uniform = rng.uniform(box.lo, box.hi, size=(N_CANDIDATES, box.n_dims))
    jitter = incumbent + rng.normal(0.0, 0.05 * (box.hi - box.lo), size=(N_INCUMBENT, box.n_dims))
    candidates = np.vstack([uniform, box.clip(jitter)])
    mean, var = model.predict(candidates)
    ei = expected_improvement(mean, var, best_score)
    if np.max(ei) <= 0.0:
        return candidates[int(np.argmax(var))]
    return candidates[int(np.argmax(ei))]


class RandomSearch:
    """Uniform random proposals within the box; learns nothing."""

    name = "random"

    def __init__(self, box: SearchBox, seed: int):
        self.box = box
        self.rng = np.random.default_rng(seed)
        self.history: list[ObjectiveSample] = []

    def ask(self) -> np.ndarray:
        return random_propose(self.box, self.rng)

    def tell(self, proposal: np.ndarray, score: float) -> None:
        self.history.append(ObjectiveSample(proposal, score))


class BayesOpt:
    """BO with a GP or random-forest surrogate behind shared EI."""

    def __init__(self, box: SearchBox, seed: int, surrogate: str = "gp", n_trees: int = 50):
        if surrogate not in ("gp", "rf"):
            raise ValueError(f"unknown surrogate '{surrogate}'")
        self.name = f"bo-{surrogate}"
        self.box = box
        self.rng = np.random.default_rng(seed)
        self.surrogate = surrogate
        self.n_trees = n_trees
        self.history: list[ObjectiveSample] = []
        self._design = latin_hypercube(N_INIT, box, self.rng)
        self._asks = 0

    def _fit(self):
        if self.surrogate == "gp":
            return gp_fit(self.history)
        return rf_fit(self.history, n_trees=self.n_trees, seed=int(self.rng.integers(2**63)))

    def ask(self) -> np.ndarray:
        if self._asks < N_INIT:
            proposal = self._design[self._asks]
        else:
            proposal = bo_step(self._fit(), self.history, self.box, self.rng)
        self._asks += 1
        return proposal

    def tell(self, proposal: np.ndarray, score: float) -> None:
        self.history.append(ObjectiveSample(proposal, score))


ALGORITHMS = {
    "random": lambda box, seed: RandomSearch(box, seed),
    "bo-gp": lambda box, seed: BayesOpt(box, seed, surrogate="gp"),
    "bo-rf": lambda box, seed: BayesOpt(box, seed, surrogate="rf"),
}


@dataclass(frozen=True)
class TrajectoryRow:
    step: int
    proposal: np.ndarray  # absolute 6-dim target pose (inactive dims at 0.5)
    score: float
    best: float


@dataclass
class EpisodeTrajectory:
    rows: list[TrajectoryRow] = field(default_factory=list)
    step_ms: list[float] = field(default_factory=list)
    terminated: bool = False
    terminal_step: int | None = None
    bundle_digest: str = ""

    @property
    def best_curve(self) -> np.ndarray:
        return np.array([r.best for r in self.rows])


def run_episode(algorithm, env: AlignmentEnv, budget: int, seed: int) -> EpisodeTrajectory:
    """Drive one episode: the algorithm proposes target poses, the driver
    submits per-coordinate clamped moves (several env steps when the target
    is farther than a_max), and every observed RMSE is fed back as the
    current proposal's score.

    The driver tracks the commanded pose by dead reckoning; the distorted
    true pose stays hidden, so scores attach to proposals as the optimizer
    saw them.
    """
    config = env.config
    if budget > config.max_steps:
        raise ValueError("budget must not exceed the env step limit")
    active = config.active_dims
    _, state = env.reset(seed)
    digest = hashlib.blake2b(
        state.variances.w_off.tobytes()
        + state.variances.w_dist.tobytes()
        + state.variances.w_lens.tobytes(),
        digest_size=16,
    ).hexdigest()

    traj = EpisodeTrajectory(bundle_digest=digest)
    pose_est = state.pose.coords.copy()  # encoder reading at episode start
    score = state.last_score
    best = score
    traj.rows.append(TrajectoryRow(step=0, proposal=pose_est.copy(), score=score, best=best))
    algorithm.tell(pose_est[active], score)

    steps_used = 0
    done = False
    while steps_used < budget and not done:
        t0 = time.perf_counter()
        target = np.asarray(algorithm.ask(), dtype=np.float64)
        target6 = np.full(6, OPTIMUM)
        target6[active] = target
        while True:
            delta = np.where(config.active_mask, target6 - pose_est, 0.0)
            action = np.clip(delta, -config.a_max, config.a_max)
            _, _, terminated, truncated, state = env.step(action)
            pose_est = np.clip(pose_est + action, 0.0, 1.0)
            steps_used += 1
            score = state.last_score
            best = min(best, score)
            traj.rows.append(
                TrajectoryRow(step=steps_used, proposal=target6.copy(), score=score, best=best)
            )
            traj.step_ms.append((time.perf_counter() - t0) * 1000.0)
            t0 = time.perf_counter()
            if terminated:
                traj.terminated = True
                traj.terminal_step = steps_used
                done = True
                break
            if truncated or steps_used >= budget:
                done = truncated or steps_used >= budget
                break
            if np.max(np.abs(np.where(config.active_mask, target6 - pose_est, 0.0))) <= REACH_TOL:
                break
        algorithm.tell(target, score)
    return traj
