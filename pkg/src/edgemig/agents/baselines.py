"""Rule-based and evolutionary migration baselines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import env as mdp
from ..errors import InvalidArgument


def am_policy(state: mdp.SystemState) -> np.ndarray:
    """Always migrate: follow the vehicle to its nearest node."""
    return state.attached.copy()


def nm_policy(state: mdp.SystemState) -> np.ndarray:
    """Never migrate: keep the instance where the episode created it."""
    return state.initial_hosting.copy()


@dataclass(frozen=True)
class GAParams:
    pop: int = 40
    generations: int = 30
    crossover_rate: float = 0.9
    mutation_rate: float = 0.05
    tournament: int = 3
    elitism: int = 1

    def __post_init__(self):
        if self.pop < 2:
            raise InvalidArgument("GA population must be >= 2")
        if self.generations < 0 or self.tournament < 1 or not 0 <= self.elitism < self.pop:
            raise InvalidArgument(f"bad GA parameters: {self}")


def ga_policy(state: mdp.SystemState, params: GAParams, rng: np.random.Generator,
              evaluator: Callable = mdp.evaluate_population, seed_individuals=None,
              history: list | None = None) -> np.ndarray:
    """Search decision vectors by fitness = reward of a hypothetical step from ``state``.

    Tournament selection, uniform crossover, per-gene mutation to a random
    node and elitism. ``seed_individuals`` replace the first random rows of
    the initial population. If ``history`` is given, the best fitness of the
    initial population and of each generation is appended to it.
    """
    u, m = state.config.n_vehicles, state.config.n_nodes
    pop = rng.integers(0, m, size=(params.pop, u))
    if seed_individuals is not None:
        seeds = np.atleast_2d(np.asarray(seed_individuals, dtype=np.int64))[: params.pop]
        pop[: len(seeds)] = seeds
    fit = np.asarray(evaluator(state, pop), dtype=float)
    if history is not None:
        history.append(float(fit.max()))
    n_children = params.pop - params.elitism
    for _ in range(params.generations):
        elite_idx = np.argsort(-fit, kind="stable")[: params.elitism]
        contenders = rng.integers(0, params.pop, size=(n_children, 2, params.tournament))
        winners = np.take_along_axis(contenders, np.argmax(fit[contenders], axis=2)[..., None], 2)[..., 0]
        a, b = pop[winners[:, 0]], pop[winners[:, 1]]
        cross = (rng.random((n_children, 1)) < params.crossover_rate) & (rng.random((n_children, u)) < 0.5)
        children = np.where(cross, b, a)
        mutate = rng.random((n_children, u)) < params.mutation_rate
        children = np.where(mutate, rng.integers(0, m, size=(n_children, u)), children)
        child_fit = np.asarray(evaluator(state, children), dtype=float)
        pop = np.concatenate([pop[elite_idx], children])
        fit = np.concatenate([fit[elite_idx], child_fit])
        if history is not None:
            history.append(float(fit.max()))
    return pop[int(np.argmax(fit))].copy()


class GAPolicy:
    """Stateful wrapper so the GA can be used wherever a ``state -> decisions`` policy is."""

    def __init__(self, params: GAParams | None = None, seed: int = 0, seed_with_current: bool = False,
                 record: bool = False):
        self.params = params or GAParams()
        self.rng = np.random.default_rng(seed)
        self.seed_with_current = seed_with_current
        self.histories: list[list[float]] | None = [] if record else None

    def __call__(self, state: mdp.SystemState) -> np.ndarray:
        hist: list[float] | None = [] if self.histories is not None else None
        seeds = [state.hosting] if self.seed_with_current else None
        x = ga_policy(state, self.params, self.rng, seed_individuals=seeds, history=hist)
        if hist is not None:
            self.histories.append(hist)
        return x
