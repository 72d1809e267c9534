"""Incremental replanning on the chain-structured Bayes tree of a planning graph.

Eliminating support states in time order turns the factor graph into a
chain of cliques. Clique k holds the Gaussian conditional

    R_k delta_k + S_k delta_{k+1} = d_k

(upper-triangular R_k) and the root clique N holds R_N delta_N = d_N. Each
clique also caches the message it passes to its parent, so adding or
replacing factors that touch variable m only requires re-eliminating cliques
m..N; cliques below m keep their conditionals untouched.

Deltas are relative to per-clique linearization points. When a clique is
re-eliminated at a new estimate, the cached incoming message is shifted to
that point first (b' = b - H s).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InvalidArgumentError, NumericalFailureError
from .gp_prior import Trajectory
from .gpmp2 import (
    DEFAULT_FIXED_COV,
    Factor,
    FactorGraph,
    FixedState,
    GoalPrior,
    LMSettings,
    build_graph,
    clamp_to_limits,
    graph_error,
    linearize_factors,
    optimize,
)
from .problem import PlanningProblem, PlanResult, evaluate

__all__ = [
    "Clique",
    "ChainBayesTree",
    "UpdateStats",
    "eliminate",
    "back_substitute",
    "update",
    "iterate_updates",
    "change_factors",
    "replan",
    "ReplanResult",
    "plan",
]

MOVE_TOL = 1e-9


@dataclass
class Clique:
    index: int
    R: np.ndarray  # upper triangular
    S: np.ndarray | None  # None for the root
    d: np.ndarray
    frontal_point: np.ndarray  # linearization point of theta_k
    separator_point: np.ndarray | None  # linearization point of theta_{k+1} used here
    message_H: np.ndarray | None = None  # outgoing message on delta_{k+1}
    message_b: np.ndarray | None = None
    dirty: bool = False
    separator_diag: np.ndarray | None = None  # this clique's factor information on theta_{k+1}


@dataclass
class ChainBayesTree:
    graph: FactorGraph
    cliques: list[Clique]
    anchored: list[list[Factor]]  # factors whose lowest key is k

    @property
    def n_states(self) -> int:
        return self.graph.n_states

    def linearization_point(self) -> np.ndarray:
        return np.stack([c.frontal_point for c in self.cliques])


@dataclass
class UpdateStats:
    lowest_index: int
    touched: list[int]
    wall_time: float

    @property
    def n_touched(self) -> int:
        return len(self.touched)


def _anchor(graph: FactorGraph) -> list[list[Factor]]:
    out: list[list[Factor]] = [[] for _ in range(graph.n_states)]
    for f in graph.factors:
        out[min(f.keys)].append(f)
    return out


def _eliminate_clique(tree: ChainBayesTree, k: int, states: np.ndarray, damping: float = 0.0) -> Clique:
    """Relinearize the factors anchored at k at ``states`` and eliminate theta_k.

    ``damping`` > 0 scales up the diagonal of theta_k's full information
    block by (1 + damping), as in Levenberg-Marquardt.
    """
    n = tree.graph.state_dim
    last = tree.n_states - 1
    width = 1 if k == last else 2
    A, b, _ = linearize_factors(tree.anchored[k], states[k:k + width], width, n, offset=k)
    H_kk = A.diag[0].copy()
    b_k = b[0].copy()
    info_diag = np.diag(A.diag[0]).copy()
    if k > 0:
        prev = tree.cliques[k - 1]
        shift = states[k] - prev.separator_point
        H_kk += prev.message_H
        b_k += prev.message_b - prev.message_H @ shift
        info_diag += prev.separator_diag
    if damping > 0:
        H_kk[np.diag_indices_from(H_kk)] += damping * info_diag
    try:
        L = np.linalg.cholesky(0.5 * (H_kk + H_kk.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"local system of clique {k} is not positive-definite") from exc
    d = solve_triangular(L, b_k, lower=True)
    if k == last:
        return Clique(k, L.T, None, d, np.array(states[k]), None, dirty=True)
    S = solve_triangular(L, A.lower[0].T, lower=True)  # L^-1 H_{k,k+1}
    msg_H = A.diag[1] - S.T @ S
    msg_b = b[1] - S.T @ d
    return Clique(k, L.T, S, d, np.array(states[k]), np.array(states[k + 1]), msg_H, msg_b,
                  dirty=True, separator_diag=np.diag(A.diag[1]).copy())


def eliminate(graph: FactorGraph, traj: Trajectory | np.ndarray) -> ChainBayesTree:
    """Eliminate theta_0 .. theta_N in order, linearizing every factor at ``traj``."""
    states = np.asarray(traj.states if isinstance(traj, Trajectory) else traj, dtype=float)
    if states.shape != (graph.n_states, graph.state_dim):
        raise InvalidArgumentError("trajectory does not match the graph")
    tree = ChainBayesTree(graph, [], _anchor(graph))
    for k in range(graph.n_states):
        tree.cliques.append(_eliminate_clique(tree, k, states))
    return tree


def back_substitute(tree: ChainBayesTree) -> np.ndarray:
    """Solve the chain from the root down; returns absolute states (N + 1, n)."""
    out = np.empty((tree.n_states, tree.graph.state_dim))
    root = tree.cliques[-1]
    out[-1] = root.frontal_point + solve_triangular(root.R, root.d)
    for c in reversed(tree.cliques[:-1]):
        sep_delta = out[c.index + 1] - c.separator_point
        out[c.index] = c.frontal_point + solve_triangular(c.R, c.d - c.S @ sep_delta)
    return out


def _same_slot(a: Factor, b: Factor) -> bool:
    return a.kind is b.kind and tuple(a.keys) == tuple(b.keys)


def update(tree: ChainBayesTree, new_factors=(), replaced_factors=(),
           traj: Trajectory | np.ndarray | None = None,
           lowest_index: int | None = None) -> tuple[np.ndarray, UpdateStats]:
    """Apply factor changes and re-eliminate only the affected cliques.

    ``replaced_factors`` swap out existing factors of the same kind on the
    same keys; ``new_factors`` are added. Cliques from the lowest affected
    variable to the root are relinearized at ``traj`` (default: the current
    solution) and re-eliminated; all cliques are then back-substituted.

    Returns:
        (new states, stats) where stats.touched lists re-eliminated cliques.
    """
    t0 = time.perf_counter()
    new_factors, replaced_factors = list(new_factors), list(replaced_factors)
    changed = new_factors + replaced_factors
    for f in changed:
        tree.graph._check(f)
    if lowest_index is None:
        if not changed:
            raise InvalidArgumentError("nothing to update")
        lowest_index = min(min(f.keys) for f in changed)
    if traj is None:
        states = back_substitute(tree)
    else:
        states = np.asarray(traj.states if isinstance(traj, Trajectory) else traj, dtype=float)

    for f in replaced_factors:
        k = min(f.keys)
        slot = tree.anchored[k]
        matches = [i for i, g in enumerate(slot) if _same_slot(g, f)]
        if not matches:
            raise InvalidArgumentError(f"no {f.kind} factor on keys {f.keys} to replace")
        for i in reversed(matches):
            del slot[i]
        slot.append(f)
    for f in new_factors:
        tree.anchored[min(f.keys)].append(f)
    tree.graph.factors = [f for slot in tree.anchored for f in slot]

    for c in tree.cliques:
        c.dirty = False
    touched = list(range(lowest_index, tree.n_states))
    for k in touched:
        tree.cliques[k] = _eliminate_clique(tree, k, states)
    out = back_substitute(tree)
    return out, UpdateStats(lowest_index, touched, time.perf_counter() - t0)


def _reeliminate(tree: ChainBayesTree, states: np.ndarray, start: int, damping: float) -> UpdateStats:
    t0 = time.perf_counter()
    for c in tree.cliques:
        c.dirty = False
    touched = list(range(start, tree.n_states))
    for k in touched:
        tree.cliques[k] = _eliminate_clique(tree, k, states, damping)
    return UpdateStats(start, touched, time.perf_counter() - t0)


def iterate_updates(tree: ChainBayesTree, states: np.ndarray, max_updates: int = 10,
                    rel_tol: float = 1e-4, max_retries: int = 10,
                    max_damping: float = 1e6) -> tuple[np.ndarray, list[UpdateStats], list[float]]:
    """Relinearize and re-solve until the error stops decreasing.

    Each pass re-eliminates from the lowest variable whose estimate moved
    away from its clique's linearization point and takes the undamped step
    if it lowers the error. Otherwise the affected cliques are re-eliminated
    with Levenberg-Marquardt damping (x10 per retry) until the error drops;
    a pass that cannot lower the error ends the iteration.
    """
    errors = [graph_error(tree.graph, states)]
    all_stats = []
    damping = 0.0
    damped_last = False
    for _ in range(max_updates):
        moved = np.nonzero(np.max(np.abs(states - tree.linearization_point()), axis=1) > MOVE_TOL)[0]
        start = int(moved[0]) if len(moved) else 0
        saved = list(tree.cliques)
        accepted = False
        trial = 0.0
        for _ in range(max_retries + 1):
            st = _reeliminate(tree, states, start if trial == 0.0 else 0, trial)
            cand = back_substitute(tree)
            err = graph_error(tree.graph, cand)
            all_stats.append(st)
            if err < errors[-1]:
                accepted = True
                break
            tree.cliques = list(saved)
            trial = max(damping, 1e-3) if trial == 0.0 else trial * 10.0
            if trial > max_damping:
                break
        if not accepted:
            break
        damped_last = trial > 0.0
        damping = trial / 10.0 if damped_last else 0.0
        change = (errors[-1] - err) / max(errors[-1], 1e-300)
        states = cand
        errors.append(err)
        if change < rel_tol:
            break
    if damped_last:
        # leave an undamped tree behind, linearized at the final estimate
        _reeliminate(tree, states, 0, 0.0)
    return states, all_stats, errors


@dataclass
class ReplanResult:
    batch: PlanResult
    incremental: PlanResult
    single_update_time: float
    touched_cliques: int
    batch_objective: float
    incremental_objective: float
    single_update_states: np.ndarray = field(repr=False, default=None)

    def to_json_dict(self) -> dict:
        return {
            "incremental": self.incremental.to_json_dict(),
            "batch": self.batch.to_json_dict(),
            "timing": {
                "single_update": self.single_update_time,
                "incremental_total": self.incremental.wall_time,
                "batch_resolve": self.batch.wall_time,
                "touched_cliques": self.touched_cliques,
            },
            "objective": {"incremental": self.incremental_objective, "batch": self.batch_objective},
        }


def change_factors(problem: PlanningProblem, previous: PlanResult, new_goal=None,
                   fixed_state: tuple[int, np.ndarray | None] | None = None) -> tuple[list, list]:
    """Factors for a goal change and/or a fixed state (returns (new, replaced))."""
    prior = previous.prior
    D = problem.robot.dof
    N = prior.n_segments
    new, replaced = [], []
    if new_goal is not None:
        goal_q = np.asarray(new_goal, dtype=float)
        if goal_q.shape != (D,):
            raise InvalidArgumentError(f"new goal must have length {D}")
        target = np.array(previous.trajectory.states[-1])
        target[:D] = goal_q
        if problem.goal_qdot is None:
            target[D:2 * D] = (goal_q - problem.start_q) / problem.total_time
        replaced.append(GoalPrior((N,), target, prior.kn))
    if fixed_state is not None:
        idx, q = fixed_state
        if not 0 <= idx <= N:
            raise InvalidArgumentError(f"fixed-state index {idx} out of range")
        target = np.array(previous.trajectory.states[idx])
        if q is not None:
            q = np.asarray(q, dtype=float)
            if q.shape != (D,):
                raise InvalidArgumentError(f"fixed state must have length {D}")
            target[:D] = q
        new.append(FixedState((idx,), target, DEFAULT_FIXED_COV))
    if not new and not replaced:
        raise InvalidArgumentError("a replan needs a new goal and/or a fixed state")
    return new, replaced


def replan(problem: PlanningProblem, previous: PlanResult, new_goal=None,
           fixed_state: tuple[int, np.ndarray | None] | None = None,
           iterate: bool = True, max_updates: int = 10) -> ReplanResult:
    """Replan incrementally after a goal change and/or a fixed-state observation.

    The Bayes tree is built at the previous solution (as it would be after
    the original solve), the change is applied with one incremental update,
    and optionally further updates are iterated until the error settles. A
    warm-started batch re-solve of the modified graph is run for comparison.
    """
    prior = previous.prior
    graph = build_graph(problem, prior)
    new, replaced = change_factors(problem, previous, new_goal, fixed_state)
    tree = eliminate(graph, previous.trajectory)

    t0 = time.perf_counter()
    states, st = update(tree, new, replaced)
    single_time = time.perf_counter() - t0
    single_states = states.copy()
    n_updates = 1
    if iterate:
        # the single update is the first step; keep it only if it lowered the error
        if graph_error(tree.graph, states) >= graph_error(tree.graph, previous.trajectory.states):
            states = np.array(previous.trajectory.states)
        states, more, _ = iterate_updates(tree, states, max_updates - 1)
        n_updates += len(more)
    states = clamp_to_limits(states, problem.robot)
    inc_time = time.perf_counter() - t0
    inc_traj = previous.trajectory.with_states(states)
    inc_obj = graph_error(tree.graph, inc_traj)
    inc = PlanResult(inc_traj, prior, evaluate(problem, inc_traj, prior), n_updates, True, inc_time,
                     "igpmp2", {"touched_cliques": st.n_touched, "single_update_time": single_time,
                                "objective": inc_obj})

    batch_graph = graph.copy()
    batch_graph.factors = [f for f in build_graph(problem, prior).factors
                           if not any(_same_slot(f, r) for r in replaced)] + replaced + new
    p = problem.params
    t1 = time.perf_counter()
    b_traj, b_stats = optimize(batch_graph, previous.trajectory,
                               LMSettings(p.initial_damping, p.max_iterations, p.rel_tol), problem.robot)
    b_time = time.perf_counter() - t1
    b_obj = graph_error(batch_graph, b_traj)
    batch = PlanResult(b_traj, prior, evaluate(problem, b_traj, prior), b_stats.iterations,
                       b_stats.converged, b_time, "gpmp2", {**b_stats.to_dict(), "objective": b_obj})
    return ReplanResult(batch, inc, single_time, st.n_touched, b_obj, inc_obj, single_states)


def plan(problem: PlanningProblem, init: Trajectory | None = None) -> PlanResult:
    """Solve from scratch through the Bayes tree (eliminate, then iterate updates)."""
    t0 = time.perf_counter()
    prior = problem.prior()
    graph = build_graph(problem, prior)
    traj = init if init is not None else prior.mean
    tree = eliminate(graph, traj)
    p = problem.params
    states, stats, errors = iterate_updates(tree, np.array(traj.states), p.max_iterations, p.rel_tol)
    states = clamp_to_limits(states, problem.robot)
    out = traj.with_states(states)
    passes = len(errors) - 1
    converged = passes < p.max_iterations
    return PlanResult(out, prior, evaluate(problem, out, prior), passes, converged,
                      time.perf_counter() - t0, "igpmp2",
                      {"error_trace": errors, "eliminations": len(stats)})
