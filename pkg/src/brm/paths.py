"""Brownian path construction on dyadic grids with adaptive bridge refinement.

Base paths are built by midpoint (Levy) construction, so the grid with ``2n``
steps reuses every draw of the grid with ``n`` steps and adds one more level.
Intervals of the base grid on which an exceedance event cannot be excluded
are split further by sampling Brownian-bridge midpoints.  Midpoint normals come
from :func:`brm.rng.keyed_normals`, keyed by (path id, base interval, dyadic
node), so refinement nodes are identical in every run that reaches them.
"""

from __future__ import annotations

import numpy as np

from .errors import PreconditionViolation
from .rng import keyed_normals, keyed_uniforms

LOG_EPS = np.log(1e-10)


def check_dyadic(n_steps: int) -> int:
    n_steps = int(n_steps)
    if n_steps < 1 or n_steps & (n_steps - 1):
        raise PreconditionViolation(f"n_steps must be a power of two, got {n_steps}")
    return n_steps.bit_length() - 1


def levy_grid(gen, chol, drift, s_start, t_end, n_steps, n_paths):
    """Antithetic paths of a drifted Brownian motion on a uniform dyadic grid.

    ``drift`` is ``(d,)`` or ``(n_paths, d)``.  Paths ``i`` and ``i + n_paths//2``
    use mirrored normals.  Returns an array ``(n_paths, n_steps + 1, d)``.
    """
    levels = check_dyadic(n_steps)
    d = chol.shape[0]
    half = n_paths // 2
    drift = np.broadcast_to(np.asarray(drift, dtype=float), (n_paths, d))

    def draw(*shape):
        z = gen.standard_normal((half, *shape, d))
        z = z * chol[0, 0] if d == 1 else z @ chol.T
        return np.concatenate([z, -z])

    dt = (t_end - s_start) / n_steps
    x0 = drift * s_start + np.sqrt(s_start) * draw()
    x1 = x0 + drift * (t_end - s_start) + np.sqrt(t_end - s_start) * draw()
    cur = np.stack([x0, x1], axis=1)
    for lev in range(1, levels + 1):
        h = n_steps >> lev
        mids = 0.5 * (cur[:, :-1] + cur[:, 1:])
        mids += np.sqrt(h * dt / 2) * draw(cur.shape[1] - 1)
        new = np.empty((n_paths, 2 * cur.shape[1] - 1, d))
        new[:, ::2] = cur
        new[:, 1::2] = mids
        cur = new
    return cur


def crossing_possible(x0, x1, dt, level, var):
    """Per-component flag: the bridge between ``x0`` and ``x1`` may exceed ``level``.

    False only when both endpoints are below the level and the bridge crossing
    probability ``exp(-2 g0 g1 / (var dt))`` is below 1e-10.
    """
    g0 = level - x0
    g1 = level - x1
    dt = np.asarray(dt, dtype=float)
    if dt.ndim:
        dt = dt.reshape(dt.shape + (1,) * (g0.ndim - dt.ndim))
    # one endpoint above makes the product negative; both above is caught by g0 < 0
    return (g0 * g1 < (-0.5 * LOG_EPS) * var * dt) | (g0 < 0)


def descend(p, j, t0, dt, x0, x1, *, key, chol, max_depth, keep, visit, path_offset=0, leaf=None):
    """Breadth-first bridge refinement of intervals.

    ``keep(p, t0, dt, x0, x1)`` selects the intervals to split; ``visit(p, t, x)``
    receives every new midpoint.  After the last level, ``leaf(p, j, heap, dt, x0, x1)``
    (if given) receives the intervals that ``keep`` still selects.  Returns the
    number of midpoints sampled.
    """
    d = chol.shape[0]
    heap = np.ones(len(p), dtype=np.uint64)
    nodes = 0
    for _ in range(max_depth):
        if len(p) == 0:
            break
        m = keep(p, t0, dt, x0, x1)
        p, j, t0, dt, x0, x1, heap = p[m], j[m], t0[m], dt[m], x0[m], x1[m], heap[m]
        if len(p) == 0:
            break
        z = keyed_normals(key, [p + path_offset, j, heap], d)
        xm = 0.5 * (x0 + x1) + (0.5 * np.sqrt(dt))[:, None] * (z @ chol.T)
        tm = t0 + 0.5 * dt
        nodes += len(p)
        visit(p, tm, xm)
        two = np.uint64(2)
        p = np.concatenate([p, p])
        j = np.concatenate([j, j])
        t0 = np.concatenate([t0, tm])
        dt = np.concatenate([0.5 * dt, 0.5 * dt])
        x0, x1 = np.concatenate([x0, xm]), np.concatenate([xm, x1])
        heap = np.concatenate([heap * two, heap * two + np.uint64(1)])
    if leaf is not None and len(p):
        m = keep(p, t0, dt, x0, x1)
        if np.any(m):
            leaf(p[m], j[m], heap[m], dt[m], x0[m], x1[m])
    return nodes


class ExceedanceTracker:
    """Detects ``#{i : X_i(t) > level_i} >= k`` (or per-subset joint exceedance) along paths.

    With ``subsets`` given, one flag per subset is tracked: subset ``I`` is hit
    when all ``X_i, i in I`` exceed their levels at a common time.
    """

    def __init__(self, level, var, k=None, subsets=None, first_time=False):
        self.level = np.asarray(level, dtype=float)
        self.var = np.asarray(var, dtype=float)
        self.k = k
        self.subsets = None
        if subsets is not None:
            d = self.var.size
            self.subsets = np.zeros((len(subsets), d), dtype=bool)
            for s, idx in enumerate(subsets):
                self.subsets[s, list(idx)] = True
        self.first_time = first_time

    def _level(self, p):
        return self.level if self.level.ndim == 1 else self.level[p]

    def node_hits(self, above):
        """``above`` is ``(..., d)``; returns ``(...)`` or ``(..., n_subsets)``."""
        if self.subsets is None:
            return above.sum(-1) >= self.k
        return np.all(above[..., None, :] | ~self.subsets, axis=-1)

    def open_intervals(self, possible, resolved):
        if self.subsets is None:
            return (possible.sum(-1) >= self.k) & ~resolved
        ok = np.all(possible[..., None, :] | ~self.subsets, axis=-1) & ~resolved
        return ok.any(-1)

    def run(self, X, times, key, chol, max_depth, path_offset=0):
        """Evaluate the event on base paths ``X`` (n, N+1, d) and refine.

        Returns ``(hit, first_time, nodes)``; ``hit`` is ``(n,)`` or
        ``(n, n_subsets)``, ``first_time`` is ``inf`` where no hit occurred.
        With ``first_time`` tracking, ``self.first_value`` holds the state at
        that time.
        """
        n, N1, d = X.shape
        level = self.level if self.level.ndim == 1 else self.level[:, None, :]
        above = X > level
        node_hit = self.node_hits(above)
        if self.subsets is None:
            hit = node_hit.any(axis=1)
            first_idx = np.where(hit, np.argmax(node_hit, axis=1), N1)
        else:
            hit = node_hit.any(axis=1)
            first_idx = np.full(n, N1)
        first_time = np.where(first_idx < N1, times[np.minimum(first_idx, N1 - 1)], np.inf)
        # state at the first hit (for stopped likelihood ratios); nan where no hit
        first_value = np.where((first_idx < N1)[:, None], X[np.arange(n), np.minimum(first_idx, N1 - 1)], np.nan)
        self.first_value = first_value

        dt = np.diff(times)
        possible = crossing_possible(X[:, :-1], X[:, 1:], dt[None, :], level, self.var)
        if self.subsets is None:
            if self.first_time:
                resolved = np.arange(N1 - 1)[None, :] >= first_idx[:, None]
            else:
                resolved = np.broadcast_to(hit[:, None], (n, N1 - 1))
            cand = self.open_intervals(possible, resolved)
        else:
            cand = self.open_intervals(possible, np.broadcast_to(hit[:, None, :], (n, N1 - 1, hit.shape[1])))
        p, j = np.nonzero(cand)
        if len(p) == 0 or max_depth == 0:
            return hit, first_time, 0

        def keep(pp, t0, dtt, x0, x1):
            poss = crossing_possible(x0, x1, dtt, self._level(pp), self.var)
            if self.subsets is None:
                if self.first_time:
                    resolved = t0 >= first_time[pp]
                else:
                    resolved = hit[pp]
                return self.open_intervals(poss, resolved)
            return self.open_intervals(poss, hit[pp])

        def visit(pp, tm, xm):
            h = self.node_hits(xm > self._level(pp))
            if self.subsets is None:
                if self.first_time:
                    sel = np.nonzero(h & (tm < first_time[pp]))[0]
                    # earliest qualifying node per path
                    sel = sel[np.lexsort((tm[sel], pp[sel]))]
                    sel = sel[np.unique(pp[sel], return_index=True)[1]]
                    first_time[pp[sel]] = tm[sel]
                    first_value[pp[sel]] = xm[sel]
                hit[pp[h]] = True
            else:
                rows, cols = np.nonzero(h)
                hit[pp[rows], cols] = True

        nodes = descend(
            p, j, times[j], dt[j], X[p, j], X[p, j + 1],
            key=key, chol=chol, max_depth=max_depth, keep=keep, visit=visit, path_offset=path_offset,
        )
        return hit, first_time, nodes


LEAF_SALT = 0x5BD1E9955BD1E995


def bridge_max(x0, x1, var_dt, u):
    """Maximum of a Brownian bridge from ``x0`` to ``x1`` with variance ``var_dt``, by inversion of ``u``."""
    return 0.5 * (x0 + x1 + np.sqrt((x1 - x0) ** 2 - 2.0 * var_dt * np.log(u)))


def path_maxima(X, times, key, chol, max_depth, eps=1e-4, path_offset=0, exact_leaves=True):
    """Per-component maxima of paths ``X`` (n, N+1, d), refined by bridge midpoints.

    An interval is split while the bridge of some component exceeds that
    component's current maximum with probability above ``eps``.  With
    ``exact_leaves`` the intervals still open after ``max_depth`` levels
    contribute an exact bridge-maximum draw per component, so ``M`` follows the
    continuous-time law of each component maximum up to the ``eps`` cut.
    Returns ``(M, nodes)`` with ``M`` of shape ``(n, d)``.
    """
    n, N1, d = X.shape
    var = np.sum(chol * chol, axis=1)
    M = X.max(axis=1)
    thresh = -0.5 * np.log(eps)
    dt = np.diff(times)
    g0 = M[:, None, :] - X[:, :-1]
    g1 = M[:, None, :] - X[:, 1:]
    cand = np.any(g0 * g1 < thresh * var * dt[None, :, None], axis=-1)
    p, j = np.nonzero(cand)
    if len(p) == 0 or max_depth == 0:
        return M, 0

    def keep(pp, t0, dtt, x0, x1):
        m = M[pp]
        return np.any((m - x0) * (m - x1) < thresh * var * dtt[:, None], axis=-1)

    def visit(pp, tm, xm):
        np.maximum.at(M, pp, xm)

    def leaf(pp, jj, heap, dtt, x0, x1):
        u = keyed_uniforms(key ^ LEAF_SALT, [pp + path_offset, jj, heap], d)
        np.maximum.at(M, pp, bridge_max(x0, x1, var * dtt[:, None], u))

    nodes = descend(p, j, times[j], dt[j], X[p, j], X[p, j + 1], key=key, chol=chol,
                    max_depth=max_depth, keep=keep, visit=visit, path_offset=path_offset,
                    leaf=leaf if exact_leaves else None)
    return M, nodes
