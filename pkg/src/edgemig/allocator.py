"""Per-node computational-resource allocation.

Each edge node splits its CPU among the service instances it hosts. The
objective is the summed computation delay ``sum_z K_z / (e_z F)`` subject to
``sum_z e_z <= 1`` and ``0 < e_z <= 1``. The optimum has the closed form
``e_z = sqrt(K_z) / sum sqrt(K)``; the grid oracle and the KKT/Hessian checks
here exist to verify it independently.
"""

from __future__ import annotations

import heapq
import itertools

import numpy as np

from .errors import InvalidArgument

MAX_ORACLE_INSTANCES = 6


def _cycles(cycles) -> np.ndarray:
    k = np.asarray(cycles, dtype=float).reshape(-1)
    if k.size and not (np.all(np.isfinite(k)) and np.all(k > 0)):
        raise InvalidArgument("every cycle demand must be finite and strictly positive")
    return k


def objective(cycles, proportions, capacity: float = 1.0) -> float:
    k = np.asarray(cycles, dtype=float)
    e = np.asarray(proportions, dtype=float)
    return float(np.sum(k / (e * capacity)))


def optimal_allocation(cycles) -> np.ndarray:
    k = _cycles(cycles)
    if k.size == 0:
        return k
    r = np.sqrt(k)
    return r / r.sum()


def proportional_allocation(cycles) -> np.ndarray:
    k = _cycles(cycles)
    if k.size == 0:
        return k
    return k / k.sum()


def oracle_allocation(cycles, resolution: int = 2000) -> np.ndarray:
    """Best point of the grid ``{e : e_z = n_z/resolution, n_z >= 1, sum n_z = resolution}``.

    The objective is separable and each term ``K_z / n_z`` is convex and
    decreasing in the integer share ``n_z``, so granting units one at a time
    to the largest marginal improvement reaches the exact grid minimum (ties
    to the lowest index). :func:`brute_force_allocation` enumerates the same
    grid and is used to confirm the two agree.
    """
    k = _cycles(cycles)
    n = k.size
    if not 1 <= n <= MAX_ORACLE_INSTANCES:
        raise InvalidArgument(f"oracle supports 1..{MAX_ORACLE_INSTANCES} instances, got {n}")
    if resolution < 100:
        raise InvalidArgument(f"resolution must be at least 100, got {resolution}")
    if resolution < n:
        raise InvalidArgument("resolution too small for the number of instances")
    units = [1] * n
    gains = [(-(k[z] / 1 - k[z] / 2), z) for z in range(n)]
    heapq.heapify(gains)
    for _ in range(resolution - n):
        _, z = heapq.heappop(gains)
        units[z] += 1
        u = units[z]
        heapq.heappush(gains, (-(k[z] / u - k[z] / (u + 1)), z))
    return np.asarray(units, dtype=float) / resolution


def brute_force_allocation(cycles, resolution: int) -> np.ndarray:
    """Exhaustive enumeration of the discretized simplex; only for tiny grids."""
    k = _cycles(cycles)
    n = k.size
    if n == 0:
        raise InvalidArgument("empty request")
    best, best_val = None, np.inf
    for head in itertools.product(range(1, resolution), repeat=n - 1):
        last = resolution - sum(head)
        if last < 1:
            continue
        units = np.array(head + (last,), dtype=float)
        val = float(np.sum(k / units))
        if val < best_val:
            best, best_val = units, val
    return best / resolution


def _check_feasible(k, e, tol=1e-12):
    if e.shape != k.shape:
        raise InvalidArgument("allocation does not match the request length")
    if np.any(e <= 0) or np.any(e > 1 + tol) or e.sum() > 1 + tol:
        raise InvalidArgument("allocation is infeasible")


def kkt_residual(cycles, proportions, capacity: float = 1.0) -> float:
    """Relative KKT violation of an interior allocation.

    With all ``e_z`` interior the bound multipliers vanish and stationarity
    reads ``K_z / (e_z^2 F) = beta`` for every z. ``beta`` is estimated as the
    mean of those terms; the residual is the largest deviation from it,
    relative to ``beta``, plus the slack ``|sum e - 1|``.
    """
    k = _cycles(cycles)
    e = np.asarray(proportions, dtype=float).reshape(-1)
    _check_feasible(k, e)
    if k.size == 0:
        return 0.0
    g = k / (e * e * capacity)
    beta = g.mean()
    return float(np.max(np.abs(g - beta)) / beta + abs(e.sum() - 1.0))


def hessian_diagonal(cycles, point, capacity: float = 1.0) -> np.ndarray:
    k = _cycles(cycles)
    e = np.asarray(point, dtype=float)
    return 2.0 * k / (e**3 * capacity)


def finite_difference_hessian(cycles, point, capacity: float = 1.0, step: float = 1e-6) -> np.ndarray:
    """Central-difference Hessian of the objective, evaluated in extended precision."""
    k = np.asarray(cycles, dtype=np.longdouble)
    e0 = np.asarray(point, dtype=np.longdouble)
    f = lambda e: np.sum(k / (e * np.longdouble(capacity)))  # noqa: E731
    h = np.longdouble(step)
    n = e0.size
    hess = np.zeros((n, n), dtype=np.longdouble)
    eye = np.eye(n, dtype=np.longdouble) * h
    for i in range(n):
        hess[i, i] = (f(e0 + eye[i]) - 2 * f(e0) + f(e0 - eye[i])) / (h * h)
        for j in range(i + 1, n):
            v = (f(e0 + eye[i] + eye[j]) - f(e0 + eye[i] - eye[j])
                 - f(e0 - eye[i] + eye[j]) + f(e0 - eye[i] - eye[j])) / (4 * h * h)
            hess[i, j] = hess[j, i] = v
    return hess.astype(float)


def hessian_pd_check(cycles, point, capacity: float = 1.0, step: float = 1e-6) -> bool:
    """Positive-definiteness of the (diagonal) objective Hessian at an interior point.

    The analytic diagonal must be strictly positive and must agree with the
    finite-difference diagonal to 1e-3 relative error, with off-diagonal
    entries below 1e-6 of the diagonal scale.
    """
    k = _cycles(cycles)
    e = np.asarray(point, dtype=float).reshape(-1)
    if e.shape != k.shape or k.size == 0:
        raise InvalidArgument("point must match a nonempty request")
    if np.any(e <= step) or np.any(e >= 1.0 + 1e-12) or e.sum() > 1 + 1e-12:
        raise InvalidArgument("Hessian check needs an interior feasible point")
    diag = hessian_diagonal(k, e, capacity)
    if not np.all(diag > 0):
        return False
    # Single-instance point e=1 sits on the upper bound; only the left side is
    # feasible there but the objective extends smoothly, so evaluate anyway.
    fd = finite_difference_hessian(k, e, capacity, step)
    if np.any(np.abs(np.diag(fd) - diag) > 1e-3 * diag):
        return False
    off = fd - np.diag(np.diag(fd))
    return bool(np.all(np.abs(off) < 1e-6 * diag.max()))


def allocate_by_node(cycles, nodes, n_nodes: int, mode: str = "optimal") -> np.ndarray:
    """Allocate every node's CPU among the instances it hosts, all nodes at once.

    ``nodes[i]`` is the hosting node of instance ``i``. Extra leading axes are
    independent scenarios (used for population evaluation). Equivalent to
    applying the per-node allocator to each node's instance list.
    """
    k = np.asarray(cycles, dtype=float)
    nodes = np.asarray(nodes)
    if mode == "optimal":
        w = np.sqrt(k)
    elif mode == "proportional":
        w = k
    else:
        raise InvalidArgument(f"unknown allocation mode {mode!r}")
    w, nodes = np.broadcast_arrays(w, nodes)
    lead = nodes.shape[:-1]
    flat = nodes.reshape(-1, nodes.shape[-1])
    wf = w.reshape(flat.shape)
    offset = np.arange(flat.shape[0])[:, None] * n_nodes
    sums = np.bincount((flat + offset).ravel(), weights=wf.ravel(), minlength=flat.shape[0] * n_nodes)
    e = wf / sums[flat + offset]
    return e.reshape(lead + (nodes.shape[-1],))


def softmax_by_node(logits, nodes, n_nodes: int) -> np.ndarray:
    """Per-node normalized exponentials of instance logits."""
    z = np.asarray(logits, dtype=float)
    nodes = np.asarray(nodes)
    shifted = np.empty_like(z)
    for m in np.unique(nodes):
        mask = nodes == m
        shifted[mask] = z[mask] - z[mask].max()
    w = np.exp(shifted)
    sums = np.bincount(nodes, weights=w, minlength=n_nodes)
    return w / sums[nodes]
