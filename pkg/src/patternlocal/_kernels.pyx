# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels.

Step-for-step ports of ``_kernels_py``; see that module for documentation.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cnp.import_array()

ctypedef long long i64


def transport_simplex(a, b, cost, long max_iter=0):
    cdef cnp.ndarray[i64, ndim=1] a_arr = np.array(a, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] b_arr = np.array(b, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=2] c_arr = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t m = c_arr.shape[0]
    cdef Py_ssize_t n = c_arr.shape[1]
    cdef Py_ssize_t nb = m + n - 1
    cdef Py_ssize_t n_nodes = m + n
    if max_iter <= 0:
        max_iter = 50 * (m + n) * (m + n) + 1000

    cdef double[:, ::1] C = c_arr
    rows_arr = np.empty(nb, dtype=np.int64)
    cols_arr = np.empty(nb, dtype=np.int64)
    flows_arr = np.empty(nb, dtype=np.int64)
    cdef i64[::1] rows = rows_arr
    cdef i64[::1] cols = cols_arr
    cdef i64[::1] flows = flows_arr
    cdef cnp.uint8_t[:, ::1] basic = np.zeros((m, n), dtype=np.uint8)
    cdef i64[::1] ra = a_arr.copy()
    cdef i64[::1] rb = b_arr.copy()

    cdef Py_ssize_t i = 0, j = 0, k, kk, node, other, head, tail, p
    cdef i64 x
    for k in range(nb):
        x = ra[i] if ra[i] < rb[j] else rb[j]
        rows[k] = i
        cols[k] = j
        flows[k] = x
        basic[i, j] = 1
        ra[i] -= x
        rb[j] -= x
        if ra[i] == 0 and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1

    cdef double scale = 0.0
    for i in range(m):
        for j in range(n):
            if fabs(C[i, j]) > scale:
                scale = fabs(C[i, j])
    scale += 1.0
    cdef double eps = 1e-11 * scale
    cdef Py_ssize_t streak_limit = m + n
    cdef Py_ssize_t streak = 0
    cdef long n_pivots = 0

    cdef double[::1] u = np.zeros(n_nodes)
    cdef i64[::1] parent = np.empty(n_nodes, dtype=np.int64)
    cdef i64[::1] parent_arc = np.empty(n_nodes, dtype=np.int64)
    cdef i64[::1] depth = np.empty(n_nodes, dtype=np.int64)
    cdef i64[::1] degree = np.empty(n_nodes + 1, dtype=np.int64)
    cdef i64[::1] fill = np.empty(n_nodes, dtype=np.int64)
    cdef i64[::1] adj = np.empty(2 * nb, dtype=np.int64)
    cdef i64[::1] queue = np.empty(n_nodes, dtype=np.int64)
    cdef cnp.uint8_t[::1] seen = np.zeros(n_nodes, dtype=np.uint8)
    cdef i64[::1] path = np.empty(2 * n_nodes, dtype=np.int64)
    cdef i64[::1] up_s = np.empty(n_nodes, dtype=np.int64)

    cdef double r, best
    cdef Py_ssize_t ei = 0, ej = 0, s, t, n_path, n_up_s, leave
    cdef i64 theta, key, best_key
    cdef bint bland, found

    while n_pivots < max_iter:
        # CSR adjacency of the basis tree
        for node in range(n_nodes + 1):
            degree[node] = 0
        for k in range(nb):
            degree[rows[k] + 1] += 1
            degree[m + cols[k] + 1] += 1
        for node in range(n_nodes):
            degree[node + 1] += degree[node]
            fill[node] = degree[node]
        for k in range(nb):
            adj[fill[rows[k]]] = k
            fill[rows[k]] += 1
            adj[fill[m + cols[k]]] = k
            fill[m + cols[k]] += 1

        for node in range(n_nodes):
            seen[node] = 0
            parent[node] = -1
            parent_arc[node] = -1
        depth[0] = 0
        u[0] = 0.0
        seen[0] = 1
        queue[0] = 0
        head = 0
        tail = 1
        while head < tail:
            node = queue[head]
            head += 1
            for p in range(degree[node], degree[node + 1]):
                k = adj[p]
                if node < m:
                    other = m + cols[k]
                else:
                    other = rows[k]
                if seen[other]:
                    continue
                seen[other] = 1
                parent[other] = node
                parent_arc[other] = k
                depth[other] = depth[node] + 1
                u[other] = C[rows[k], cols[k]] - u[node]
                queue[tail] = other
                tail += 1

        bland = streak > streak_limit
        found = False
        best = 0.0
        for i in range(m):
            for j in range(n):
                if basic[i, j]:
                    continue
                r = C[i, j] - u[i] - u[m + j]
                if bland:
                    if r < -eps:
                        ei = i
                        ej = j
                        found = True
                        break
                elif r < best:
                    best = r
                    ei = i
                    ej = j
            if bland and found:
                break
        if not bland:
            found = best < -eps
        if not found:
            break

        s = ei
        t = m + ej
        n_path = 0
        n_up_s = 0
        while depth[t] > depth[s]:
            path[n_path] = parent_arc[t]
            n_path += 1
            t = parent[t]
        while depth[s] > depth[t]:
            up_s[n_up_s] = parent_arc[s]
            n_up_s += 1
            s = parent[s]
        while s != t:
            path[n_path] = parent_arc[t]
            n_path += 1
            t = parent[t]
            up_s[n_up_s] = parent_arc[s]
            n_up_s += 1
            s = parent[s]
        for kk in range(n_up_s - 1, -1, -1):
            path[n_path] = up_s[kk]
            n_path += 1

        theta = flows[path[0]]
        for kk in range(0, n_path, 2):
            if flows[path[kk]] < theta:
                theta = flows[path[kk]]
        leave = -1
        best_key = -1
        for kk in range(0, n_path, 2):
            k = path[kk]
            if flows[k] == theta:
                if bland:
                    key = rows[k] * n + cols[k]
                    if leave < 0 or key < best_key:
                        leave = k
                        best_key = key
                elif leave < 0:
                    leave = k
        for kk in range(n_path):
            if kk % 2 == 0:
                flows[path[kk]] -= theta
            else:
                flows[path[kk]] += theta
        basic[rows[leave], cols[leave]] = 0
        rows[leave] = ei
        cols[leave] = ej
        flows[leave] = theta
        basic[ei, ej] = 1
        if theta == 0:
            streak += 1
        else:
            streak = 0
        n_pivots += 1

    cdef double total = 0.0
    for k in range(nb):
        total += <double>flows[k] * C[rows[k], cols[k]]
    return total, rows_arr, cols_arr, flows_arr, n_pivots


def lasso_cd_gram(gram, xty, double lam, coef, double tol, long max_iter):
    cdef double[:, ::1] G = np.ascontiguousarray(gram, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(xty, dtype=np.float64)
    v_arr = np.array(coef, dtype=np.float64)
    cdef double[::1] v = v_arr
    cdef Py_ssize_t p = v.shape[0]
    gv_arr = np.asarray(G) @ v_arr
    cdef double[::1] gv = gv_arr
    cdef double half = 0.5 * lam
    cdef double gjj, old, new, rho, delta, max_change
    cdef Py_ssize_t j, q
    cdef long sweep
    for sweep in range(1, max_iter + 1):
        max_change = 0.0
        for j in range(p):
            gjj = G[j, j]
            old = v[j]
            if gjj <= 0.0:
                new = 0.0
            else:
                rho = c[j] - gv[j] + gjj * old
                if rho > half:
                    new = (rho - half) / gjj
                elif rho < -half:
                    new = (rho + half) / gjj
                else:
                    new = 0.0
            delta = new - old
            if delta != 0.0:
                for q in range(p):
                    gv[q] += delta * G[q, j]
                v[j] = new
                if fabs(delta) > max_change:
                    max_change = fabs(delta)
        if max_change < tol:
            return v_arr, sweep, True
    return v_arr, max_iter, False


def slic_assign(image, centers, double step, double compactness):
    cdef double[:, ::1] img = np.ascontiguousarray(image, dtype=np.float64)
    cdef double[:, ::1] cen = np.ascontiguousarray(centers, dtype=np.float64)
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    labels_arr = np.full((h, w), -1, dtype=np.int64)
    best_arr = np.full((h, w), np.inf)
    cdef i64[:, ::1] labels = labels_arr
    cdef double[:, ::1] best = best_arr
    cdef double ratio = (compactness / step) ** 2
    cdef Py_ssize_t k, r, q, r0, r1, c0, c1
    cdef double ci, cr, cc, d, dr, dc
    for k in range(cen.shape[0]):
        ci = cen[k, 0]
        cr = cen[k, 1]
        cc = cen[k, 2]
        r0 = max(<Py_ssize_t>(cr - 2 * step), 0)
        r1 = min(<Py_ssize_t>(cr + 2 * step) + 1, h)
        c0 = max(<Py_ssize_t>(cc - 2 * step), 0)
        c1 = min(<Py_ssize_t>(cc + 2 * step) + 1, w)
        for r in range(r0, r1):
            dr = r - cr
            for q in range(c0, c1):
                dc = q - cc
                d = (img[r, q] - ci) * (img[r, q] - ci) + (dr * dr + dc * dc) * ratio
                if d < best[r, q]:
                    best[r, q] = d
                    labels[r, q] = k
    return labels_arr, best_arr
