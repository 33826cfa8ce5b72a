"""Pure-Python (numpy) versions of the hot kernels.

Each function here has a twin with an identical signature in ``_kernels.pyx``.
They implement the same algorithm step for step, so results agree to
floating-point round-off; tests run both.
"""
import numpy as np

# Masses are scaled to integers so degenerate pivots are detected exactly.
MASS_SCALE = 2**50


def transport_simplex(a, b, cost, max_iter=0):
    """Solve the balanced transportation problem by the network simplex method.

    Parameters
    ----------
    a, b : int64 arrays
        Integer supplies and demands with equal sums.
    cost : (m, n) float64 array
    max_iter : int
        Pivot cap; 0 picks a generous default.

    Returns
    -------
    total : float
        ``sum(flow * cost)`` in integer-flow units.
    rows, cols, flows : arrays
        The basic cells of the optimal spanning tree and their flows.
    n_pivots : int
    """
    a = np.array(a, dtype=np.int64)
    b = np.array(b, dtype=np.int64)
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    m, n = cost.shape
    nb = m + n - 1
    if max_iter <= 0:
        max_iter = 50 * (m + n) * (m + n) + 1000

    rows = np.empty(nb, dtype=np.int64)
    cols = np.empty(nb, dtype=np.int64)
    flows = np.empty(nb, dtype=np.int64)
    basic = np.zeros((m, n), dtype=bool)

    # north-west corner start: a staircase spanning tree
    ra = a.copy()
    rb = b.copy()
    i = j = 0
    for k in range(nb):
        x = min(ra[i], rb[j])
        rows[k], cols[k], flows[k] = i, j, x
        basic[i, j] = True
        ra[i] -= x
        rb[j] -= x
        if ra[i] == 0 and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1

    scale = 1.0 + float(np.max(np.abs(cost))) if cost.size else 1.0
    eps = 1e-11 * scale
    streak_limit = m + n
    streak = 0
    n_pivots = 0
    n_nodes = m + n
    u = np.zeros(n_nodes)  # potentials; sinks stored at m + j
    parent = np.empty(n_nodes, dtype=np.int64)
    parent_arc = np.empty(n_nodes, dtype=np.int64)
    depth = np.empty(n_nodes, dtype=np.int64)

    while n_pivots < max_iter:
        # potentials by BFS over the basis tree rooted at source 0
        adj = [[] for _ in range(n_nodes)]
        for k in range(nb):
            adj[rows[k]].append(k)
            adj[m + cols[k]].append(k)
        parent[:] = -1
        parent_arc[:] = -1
        depth[0] = 0
        u[0] = 0.0
        seen = np.zeros(n_nodes, dtype=bool)
        seen[0] = True
        queue = [0]
        head = 0
        while head < len(queue):
            node = queue[head]
            head += 1
            for k in adj[node]:
                other = m + cols[k] if node < m else rows[k]
                if seen[other]:
                    continue
                seen[other] = True
                parent[other] = node
                parent_arc[other] = k
                depth[other] = depth[node] + 1
                # u_i + v_j = c_ij on basic cells
                u[other] = cost[rows[k], cols[k]] - u[node]
                queue.append(other)

        reduced = cost - u[:m, None] - u[None, m:]
        reduced[basic] = 0.0
        if streak > streak_limit:
            # Bland: lowest-index improving cell
            cand = np.flatnonzero(reduced.ravel() < -eps)
            if cand.size == 0:
                break
            flat = int(cand[0])
        else:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -eps:
                break
        ei, ej = divmod(flat, n)

        # cycle: entering arc ei -> ej, then the tree path ej ... ei
        s = ei
        t = m + ej
        up_t = []  # arcs from t up to apex
        up_s = []  # arcs from s up to apex
        while depth[t] > depth[s]:
            up_t.append(parent_arc[t])
            t = parent[t]
        while depth[s] > depth[t]:
            up_s.append(parent_arc[s])
            s = parent[s]
        while s != t:
            up_t.append(parent_arc[t])
            t = parent[t]
            up_s.append(parent_arc[s])
            s = parent[s]
        path = up_t + up_s[::-1]
        # arcs alternate -, +, -, ... starting after the entering arc
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flows[k] for k in minus)
        tied = [k for k in minus if flows[k] == theta]
        if streak > streak_limit:
            leave = min(tied, key=lambda k: rows[k] * n + cols[k])
        else:
            leave = tied[0]
        for k in minus:
            flows[k] -= theta
        for k in plus:
            flows[k] += theta
        basic[rows[leave], cols[leave]] = False
        rows[leave], cols[leave], flows[leave] = ei, ej, theta
        basic[ei, ej] = True
        streak = streak + 1 if theta == 0 else 0
        n_pivots += 1

    total = float(np.sum(flows.astype(np.float64) * cost[rows, cols]))
    return total, rows, cols, flows, n_pivots


def lasso_cd_gram(gram, xty, lam, coef, tol, max_iter):
    """Cyclic coordinate descent for ``v'Gv - 2c'v + lam*|v|_1``.

    Coordinates are swept in ascending order.  Returns ``(coef, n_sweeps,
    converged)``; ``coef`` is updated in a copy.
    """
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    xty = np.asarray(xty, dtype=np.float64)
    v = np.array(coef, dtype=np.float64)
    p = v.shape[0]
    gv = gram @ v
    half = 0.5 * lam
    for sweep in range(1, max_iter + 1):
        max_change = 0.0
        for j in range(p):
            gjj = gram[j, j]
            old = v[j]
            if gjj <= 0.0:
                new = 0.0
            else:
                rho = xty[j] - gv[j] + gjj * old
                if rho > half:
                    new = (rho - half) / gjj
                elif rho < -half:
                    new = (rho + half) / gjj
                else:
                    new = 0.0
            delta = new - old
            if delta != 0.0:
                gv += delta * gram[:, j]
                v[j] = new
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if max_change < tol:
            return v, sweep, True
    return v, max_iter, False


def slic_assign(image, centers, step, compactness):
    """One SLIC assignment pass.

    ``centers`` rows are ``(intensity, row, col)``.  Each center claims the
    pixels of its ``2*step`` window where its distance
    ``di^2 + (ds/step)^2 * compactness^2`` beats the current best.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    labels = np.full((h, w), -1, dtype=np.int64)
    best = np.full((h, w), np.inf)
    ratio = (compactness / step) ** 2
    rr = np.arange(h)
    cc = np.arange(w)
    for k in range(centers.shape[0]):
        ci, cr, ccol = centers[k]
        r0 = max(int(cr - 2 * step), 0)
        r1 = min(int(cr + 2 * step) + 1, h)
        c0 = max(int(ccol - 2 * step), 0)
        c1 = min(int(ccol + 2 * step) + 1, w)
        if r0 >= r1 or c0 >= c1:
            continue
        patch = image[r0:r1, c0:c1]
        dr = (rr[r0:r1] - cr)[:, None]
        dc = (cc[c0:c1] - ccol)[None, :]
        dist = (patch - ci) ** 2 + (dr * dr + dc * dc) * ratio
        view = best[r0:r1, c0:c1]
        better = dist < view
        view[better] = dist[better]
        labels[r0:r1, c0:c1][better] = k
    return labels, best
