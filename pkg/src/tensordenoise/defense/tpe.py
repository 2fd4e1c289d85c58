"""Tree-structured Parzen Estimator over the denoiser space.

After `n_startup` completed trials, completed history is split at the
`gamma` quantile of fitness into good and bad sets. Each parameter gets a
categorical Parzen estimate per set (Laplace-smoothed counts over its
choices), with the rank axes restricted to the choices of the drawn (K, S).
Candidates are sampled from the good estimate and the one with the largest
sum of log l(x)/g(x) is suggested. Configurations already in the history are
never suggested again while untried ones remain.

The random stream is keyed on (seed, history length), so a suggestion is a
pure function of the seed and the history.
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from ..errors import ConfigError
from .denoiser import DenoiserConfig
from .space import SearchSpace
from .trials import Trial, ranked


@dataclass
class TPEState:
    seed: int
    gamma: float = 0.25
    n_startup: int = 10
    candidate_draws: int = 24
    smoothing: float = 1.0
    history: list[Trial] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.n_startup < 0 or self.candidate_draws < 1 or self.smoothing <= 0.0:
            raise ConfigError("n_startup >= 0, candidate_draws >= 1 and smoothing > 0 required")

    @property
    def completed(self) -> list[Trial]:
        return [t for t in self.history if t.status == "complete"]

    def split(self) -> tuple[list[Trial], list[Trial]]:
        done = ranked(self.completed)
        n = len(done)
        n_good = max(1, math.ceil(self.gamma * n))
        if n >= 2:
            n_good = min(n_good, n - 1)
        return done[:n_good], done[n_good:]


class _Parzen:
    def __init__(self, trials: Sequence[Trial], smoothing: float) -> None:
        self.smoothing = smoothing
        # strides are counted per patch size so they can be read conditionally
        self.counts: dict[str, Counter[Any]] = {
            "patch": Counter(t.config.patch.kernel for t in trials),
            "stride": Counter((t.config.patch.kernel, t.config.patch.stride) for t in trials),
            "method": Counter(t.config.method for t in trials),
            "rank_k": Counter(t.config.rank_k for t in trials),
            "rank_p": Counter(t.config.rank_p for t in trials),
        }

    def weights(self, param: str, choices: Sequence[Any], key: Any = None) -> NDArray[np.float64]:
        counts = self.counts[param]
        raw = np.array(
            [counts.get(c if key is None else (key, c), 0) for c in choices], dtype=np.float64
        )
        raw += self.smoothing
        return raw / raw.sum()


@dataclass
class _Candidate:
    rng: np.random.Generator
    good: _Parzen
    bad: _Parzen
    score: float = 0.0

    def draw(self, param: str, choices: Sequence[Any], key: Any = None) -> Any:
        lw = self.good.weights(param, choices, key)
        gw = self.bad.weights(param, choices, key)
        i = int(self.rng.choice(len(choices), p=lw))
        self.score += math.log(lw[i]) - math.log(gw[i])
        return choices[i]


def _uniform(
    state: TPEState, configs: Sequence[DenoiserConfig], rng: np.random.Generator
) -> DenoiserConfig:
    if not state.history:
        return configs[int(rng.integers(len(configs)))]
    # without replacement until the space is exhausted
    tried = {t.config for t in state.history}
    untried = [c for c in configs if c not in tried] or list(configs)
    return untried[int(rng.integers(len(untried)))]


def suggest(state: TPEState, space: SearchSpace) -> DenoiserConfig:
    configs = space.configs  # raises ConfigError when nothing is feasible
    rng = np.random.default_rng([state.seed, len(state.history)])
    if len(state.completed) < state.n_startup:
        return _uniform(state, configs, rng)

    good, bad = state.split()
    l_est, g_est = _Parzen(good, state.smoothing), _Parzen(bad, state.smoothing)
    kernels = tuple(dict.fromkeys(k for k, _ in space.feasible_pairs))
    # without replacement until the space is exhausted
    tried = {t.config for t in state.history}

    best: DenoiserConfig | None = None
    best_score = -math.inf
    for _ in range(state.candidate_draws):
        c = _Candidate(rng, l_est, g_est)
        k = c.draw("patch", kernels)
        s = c.draw("stride", tuple(s for kk, s in space.feasible_pairs if kk == k), key=k)
        method = c.draw("method", space.methods)
        rank_k = c.draw("rank_k", space.rank_k_choices(k, s))
        rank_p = c.draw("rank_p", space.rank_p_choices(k))
        cand = DenoiserConfig.of(k, s, method, rank_k, rank_p)
        if cand not in tried and c.score > best_score:
            best, best_score = cand, c.score

    if best is None:
        return _uniform(state, configs, rng)
    return best
