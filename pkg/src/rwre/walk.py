"""The main walk on the lazily generated tree, and its trajectory record.

The walk starts at the root, steps to neighbors with the weight-determined
probabilities, and reflects off the sentinel above the root.  It is run as
the full-tree case of the clock engine, so the exact-coupling and
restriction identities with subtree extensions hold by construction rather
than by a separate code path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, IO, List, Optional, Tuple

import numpy as np

from . import clocks, streams
from .clocks import RawRun, SubtreeSpec, _simulate
from .env import EnvSpec, make_weight_sampler
from .errors import InvalidInputError
from .tree import ROOT, SENTINEL, Vertex, VertexPath, validate_path

_Z99 = 2.5758293035489004  # two-sided 99% normal quantile


@dataclass(frozen=True)
class StopRule:
    """When to stop a run: at an absolute level, a step budget, or the
    sentinel.  The step budget is a hard safety cap so recurrent
    configurations always terminate."""

    max_level: Optional[int] = None
    max_steps: int = 10 ** 8
    stop_at_sentinel: bool = False

    def __post_init__(self):
        if self.max_level is not None and self.max_level < 1:
            raise InvalidInputError("max_level must be at least 1")
        if self.max_steps < 1:
            raise InvalidInputError("max_steps must be at least 1")


class Trajectory:
    """Levels of one walk plus lazy access to visited-vertex data.

    Only the level sequence and the per-vertex discovery structure are kept,
    so memory is proportional to the number of distinct visited vertices.
    Vertex paths are rebuilt on demand.
    """

    def __init__(self, run: RawRun):
        self._run = run
        self.levels = np.asarray(run.levels, dtype=np.int64)
        self.steps_taken = run.steps_taken
        self.truncated = run.truncated
        self.stop_reason = run.stop_reason

    @property
    def max_level_attained(self) -> int:
        return int(self.levels.max())

    def fresh_vertex_times(self) -> List[Tuple[int, VertexPath]]:
        """(step, vertex) pairs at first visits, in step order."""
        return [(step, self._run.path_of(vid)) for step, vid in self._run.fresh]

    def visit_counts(self) -> Dict[Vertex, int]:
        counts = self._run.visit_counts_by_id()
        return {self._run.path_of(vid): c for vid, c in counts.items()}

    def vertex_path_at_step(self, step: int) -> Vertex:
        return self._run.path_of(self._run.ids[step])

    def visited_digest_sequence(self) -> List[bytes]:
        return self._run.visited_digest_sequence()

    @property
    def raw_run(self) -> RawRun:
        return self._run

    def first_passage_steps(self) -> np.ndarray:
        """T_n for n = 0..max level: the first step at which level n is hit."""
        lv = self.levels
        top = int(lv.max())
        out = np.full(top + 1, -1, dtype=np.int64)
        running = -1
        for step, l in enumerate(lv):
            if l > running:
                running = l
                if l >= 0:
                    out[l] = step
        return out

    def distinct_per_level(self) -> np.ndarray:
        """Number of distinct visited vertices at each level 0..max."""
        top = int(self.levels.max())
        out = np.zeros(top + 1, dtype=np.int64)
        for _, vid in self._run.fresh:
            d = self._run.dep[vid]
            if d <= top:
                out[d] += 1
        return out


def run_walk(spec: EnvSpec, stop: StopRule, walk_index: int = 0) -> Trajectory:
    """Run the walk from the root until the stop rule fires."""
    run = _simulate(
        spec,
        SubtreeSpec.full_tree(),
        walk_index=walk_index,
        max_steps=stop.max_steps,
        max_level=stop.max_level,
        stop_at_sentinel=stop.stop_at_sentinel,
    )
    return Trajectory(run)


def step_walk(spec: EnvSpec, current: Vertex, walk_index: int = 0) -> Vertex:
    """One step from ``current`` with no prior history at that vertex.

    The sentinel steps to the root with probability one; elsewhere the k=0
    clocks race, which is exactly how a run first leaves a fresh vertex, so
    single steps and full runs agree.
    """
    if current is SENTINEL:
        return ROOT
    validate_path(current, spec.b)
    b = spec.b
    dg = streams.vertex_digest(spec.seed, current)
    w = make_weight_sampler(spec)(dg)
    w8 = streams.walk_token(walk_index)
    best = math.inf
    best_j = 0
    blk = None
    blk_m = -1
    for j in range(b + 1):
        m = j >> 3
        if m != blk_m:
            blk = streams.clock_init_block(dg, w8, m)
            blk_m = m
        y = -math.log(blk[j & 7])
        val = y if j == 0 else y / w[j - 1]
        if val < best:
            best = val
            best_j = j
    if best_j == 0:
        return SENTINEL if current == ROOT else current[:-1]
    return current + (best_j,)


@dataclass(frozen=True)
class EscapeEstimate:
    """Monte Carlo escape probability with a 99% normal CI."""

    n: int
    trials: int
    successes: int
    probability: float
    std_error: float
    ci_low: float
    ci_high: float
    scaled_estimate: float  # b^n times the probability


def escape_probability(spec: EnvSpec, n: int, trials: int) -> EscapeEstimate:
    """Annealed chance that a fresh walk reaches level n before level -1.

    Each trial draws a new environment and walk (derived sub-seed) and runs
    until level n or the sentinel is hit.
    """
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    if trials < 100:
        raise InvalidInputError("need at least 100 trials")
    successes = 0
    for t in range(trials):
        sub = spec.subseed(b"esc", t)
        run = _simulate(sub, SubtreeSpec.full_tree(), max_steps=10 ** 7,
                        max_level=n, stop_at_sentinel=True)
        if run.stop_reason == "level":
            successes += 1
        elif run.stop_reason != "sentinel":
            raise InvalidInputError("escape trial exhausted its step cap")
    p = successes / trials
    se = math.sqrt(p * (1.0 - p) / trials)
    return EscapeEstimate(
        n=n,
        trials=trials,
        successes=successes,
        probability=p,
        std_error=se,
        ci_low=max(0.0, p - _Z99 * se),
        ci_high=min(1.0, p + _Z99 * se),
        scaled_estimate=float(spec.b) ** n * p,
    )


def trajectory_to_csv(traj: Trajectory, fh: IO[str], stride: int = 1) -> None:
    """(step, level) rows, downsampled by ``stride``; the last step is
    always included."""
    if stride < 1:
        raise InvalidInputError("stride must be at least 1")
    w = csv.writer(fh)
    w.writerow(["step", "level"])
    last = len(traj.levels) - 1
    for i in range(0, last + 1, stride):
        w.writerow([i, int(traj.levels[i])])
    if last % stride:
        w.writerow([last, int(traj.levels[last])])


def trajectory_summary(traj: Trajectory) -> dict:
    """JSON-ready summary: step count, stop reason, and the T_n table."""
    tn = traj.first_passage_steps()
    return {
        "steps_taken": int(traj.steps_taken),
        "truncated": bool(traj.truncated),
        "stop_reason": traj.stop_reason,
        "max_level": int(traj.max_level_attained),
        "first_passage_steps": {str(i): int(t) for i, t in enumerate(tn)},
    }
