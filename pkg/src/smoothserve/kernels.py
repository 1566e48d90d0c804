"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public names at the bottom of this module resolve to the numba variant
unless ``SMOOTHSERVE_DISABLE_NUMBA`` is set. Both variants accumulate norms
coordinate by coordinate in the same order, so threshold decisions (``<= eta``)
come out identical on either path.
"""

import numpy as np

from ._accel import njit, pick

L1, L2, LINF = 0, 1, 2
INF = np.inf
IINF = np.int64(2**62)


# ---------------------------------------------------------------- distances


def row_norms(diff, code):
    """Norm over the last axis of ``diff``."""
    m = diff.shape[-1]
    if code == LINF:
        out = np.abs(diff[..., 0])
        for j in range(1, m):
            out = np.maximum(out, np.abs(diff[..., j]))
        return out
    if code == L1:
        out = np.abs(diff[..., 0])
        for j in range(1, m):
            out = out + np.abs(diff[..., j])
        return out
    out = diff[..., 0] * diff[..., 0]
    for j in range(1, m):
        out = out + diff[..., j] * diff[..., j]
    return np.sqrt(out)


def _dist(a, b, code):
    m = a.shape[0]
    t = abs(a[0] - b[0])
    if code == L2:
        s = t * t
        for j in range(1, m):
            t = a[j] - b[j]
            s = s + t * t
        return np.sqrt(s)
    s = t
    for j in range(1, m):
        t = abs(a[j] - b[j])
        if code == L1:
            s = s + t
        elif t > s:
            s = t
    return s


_dist_nb = njit(_dist)


# ---------------------------------------------------------- nearest neighbor


def _nearest_nb(points, queries, code):
    nq = queries.shape[0]
    ids = np.empty(nq, dtype=np.int64)
    out = np.empty(nq)
    for q in range(nq):
        best = INF
        arg = -1
        for i in range(points.shape[0]):
            d = _dist_nb(queries[q], points[i], code)
            if d < best:
                best = d
                arg = i
        ids[q] = arg
        out[q] = best
    return ids, out


_nearest_nb = njit(_nearest_nb) if _dist_nb is not None else None


def _nearest_np(points, queries, code, chunk=None):
    nq = queries.shape[0]
    ids = np.empty(nq, dtype=np.int64)
    out = np.empty(nq)
    if chunk is None:
        chunk = max(1, 4_000_000 // max(1, points.shape[0]))
    for lo in range(0, nq, chunk):
        q = queries[lo:lo + chunk]
        d = row_norms(q[:, None, :] - points[None, :, :], code)
        a = np.argmin(d, axis=1)
        ids[lo:lo + chunk] = a
        out[lo:lo + chunk] = d[np.arange(len(q)), a]
    return ids, out


def _min_pair_nb(points, code):
    best = INF
    bi = -1
    bj = -1
    n = points.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            d = _dist_nb(points[i], points[j], code)
            if d < best:
                best = d
                bi = i
                bj = j
    return best, bi, bj


_min_pair_nb = njit(_min_pair_nb) if _dist_nb is not None else None


def _min_pair_np(points, code):
    best, bi, bj = INF, -1, -1
    for i in range(points.shape[0] - 1):
        d = row_norms(points[i + 1:] - points[i], code)
        a = int(np.argmin(d))
        if d[a] < best:
            best, bi, bj = float(d[a]), i, i + 1 + a
    return best, bi, bj


# ---------------------------------------------------------------- net build


def _greedy_insert_nb(cands, eta, code, net, n):
    for c in range(cands.shape[0]):
        ok = True
        for j in range(n):
            if _dist_nb(cands[c], net[j], code) <= eta:
                ok = False
                break
        if ok:
            net[n] = cands[c]
            n += 1
    return n


_greedy_insert_nb = njit(_greedy_insert_nb) if _dist_nb is not None else None


def _greedy_insert_np(cands, eta, code, net, n):
    for c in range(cands.shape[0]):
        if n == 0 or row_norms(net[:n] - cands[c], code).min() > eta:
            net[n] = cands[c]
            n += 1
    return n


def _bucket_of(x, lo, side, G):
    flat = 0
    stride = 1
    for a in range(x.shape[0]):
        b = int(np.floor((x[a] - lo[a]) / side))
        if b < 0:
            b = 0
        elif b >= G:
            b = G - 1
        flat += b * stride
        stride *= G
    return flat


_bucket_of_nb = njit(_bucket_of)


def _bucket_nearest(x, net, head, nxt, lo, side, G, offsets, code):
    """Nearest net point among the 3^m Linf-neighbouring buckets (lowest id on ties)."""
    m = x.shape[0]
    best = INF
    arg = -1
    base = np.empty(m, dtype=np.int64)
    for a in range(m):
        b = int(np.floor((x[a] - lo[a]) / side))
        if b < 0:
            b = 0
        elif b >= G:
            b = G - 1
        base[a] = b
    for o in range(offsets.shape[0]):
        flat = 0
        stride = 1
        inside = True
        for a in range(m):
            b = base[a] + offsets[o, a]
            if b < 0 or b >= G:
                inside = False
                break
            flat += b * stride
            stride *= G
        if not inside:
            continue
        j = head[flat]
        while j >= 0:
            d = _dist_nb(x, net[j], code)
            if d < best or (d == best and j < arg):
                best = d
                arg = j
            j = nxt[j]
    return best, arg


_bucket_nearest_nb = njit(_bucket_nearest) if _dist_nb is not None else None


def _bucket_project_nb(points, queries, head, nxt, lo, side, G, offsets, code, eta):
    nq = queries.shape[0]
    ids = np.empty(nq, dtype=np.int64)
    out = np.empty(nq)
    for q in range(nq):
        best, arg = _bucket_nearest_nb(queries[q], points, head, nxt, lo, side, G, offsets, code)
        if best > eta:
            best = INF
            for i in range(points.shape[0]):
                d = _dist_nb(queries[q], points[i], code)
                if d < best:
                    best = d
                    arg = i
        ids[q] = arg
        out[q] = best
    return ids, out


_bucket_project_nb = njit(_bucket_project_nb) if _dist_nb is not None else None


def _refine_level_nb(centers, side, rq, eta, code, c0, R, net, n, head, nxt, lo, bside, G,
                     offsets, last):
    m = centers.shape[1]
    nsub = 1 << m
    kids = np.empty((centers.shape[0] * nsub if not last else 0, m))
    nk = 0
    resid = 0
    q = side / 4.0
    for i in range(centers.shape[0]):
        x = centers[i]
        bx = _dist_nb(x, c0, code)
        if bx - rq > R:
            continue
        f, _ = _bucket_nearest_nb(x, net, head, nxt, lo, bside, G, offsets, code)
        if f > eta:
            f = INF
        if bx <= R and f > eta:
            net[n] = x
            flat = _bucket_of_nb(x, lo, bside, G)
            nxt[n] = head[flat]
            head[flat] = n
            n += 1
            f = 0.0
        if f + rq <= eta:
            continue
        if last:
            resid += 1
            continue
        for b in range(nsub):
            for a in range(m):
                if (b >> a) & 1:
                    kids[nk, a] = x[a] + q
                else:
                    kids[nk, a] = x[a] - q
            nk += 1
    return n, kids[:nk], resid


_refine_level_nb = njit(_refine_level_nb) if _dist_nb is not None else None


def _refine_level_np(centers, side, rq, eta, code, c0, R, net, n, last):
    m = centers.shape[1]
    bx = row_norms(centers - c0, code)
    live = bx - rq <= R
    f = np.full(len(centers), INF)
    if n > 0 and live.any():
        idx = np.flatnonzero(live)
        _, d = _nearest_np(net[:n], centers[idx], code)
        f[idx] = d
    f[f > eta] = INF
    todo = np.flatnonzero(live & (f + rq > eta))
    split = []
    resid = 0
    n0 = n
    for i in todo:
        x = centers[i]
        fi = f[i]
        if n > n0:
            d = row_norms(net[n0:n] - x, code).min()
            if d <= eta and d < fi:
                fi = d
        if bx[i] <= R and fi > eta:
            net[n] = x
            n += 1
            fi = 0.0
        if fi + rq <= eta:
            continue
        if last:
            resid += 1
        else:
            split.append(i)
    if last or not split:
        return n, np.empty((0, m)), resid
    signs = np.array([[1.0 if (b >> a) & 1 else -1.0 for a in range(m)] for b in range(1 << m)])
    q = side / 4.0
    parents = centers[np.asarray(split)]
    # x + q and x - q, matching the compiled kernel bit for bit
    kids = np.where(signs[None, :, :] > 0, parents[:, None, :] + q, parents[:, None, :] - q)
    return n, kids.reshape(-1, m), resid


# --------------------------------------------------------- work functions


def _config_distances_nb(cfgs, dmat, perms):
    C = cfgs.shape[0]
    k = cfgs.shape[1]
    D = np.zeros((C, C))
    for a in range(C):
        for b in range(a + 1, C):
            best = INF
            for p in range(perms.shape[0]):
                s = 0.0
                for j in range(k):
                    s = s + dmat[cfgs[a, j], cfgs[b, perms[p, j]]]
                if s < best:
                    best = s
            D[a, b] = best
            D[b, a] = best
    return D


_config_distances_nb = njit(_config_distances_nb)


def _config_distances_np(cfgs, dmat, perms):
    k = cfgs.shape[1]
    D = None
    for perm in perms:
        s = dmat[cfgs[:, 0][:, None], cfgs[:, perm[0]][None, :]]
        for j in range(1, k):
            s = s + dmat[cfgs[:, j][:, None], cfgs[:, perm[j]][None, :]]
        D = s if D is None else np.minimum(D, s)
    # symmetric by construction of the permutation set; pin the diagonal
    np.fill_diagonal(D, 0.0)
    return np.minimum(D, D.T)


def _wfa_update_nb(w, D, src, dst):
    C = D.shape[1]
    out = np.full(C, INF)
    for j in range(src.shape[0]):
        base = w[src[j]]
        row = dst[j]
        for c in range(C):
            v = base + D[row, c]
            if v < out[c]:
                out[c] = v
    return out


_wfa_update_nb = njit(_wfa_update_nb)


def _wfa_update_np(w, D, src, dst):
    return (w[src][:, None] + D[dst]).min(axis=0)


# ------------------------------------------------------------ min-cost flow


def _dijkstra_nb(n_nodes, start, adj, to, cost, cap, pot, src):
    dist = np.full(n_nodes, IINF, dtype=np.int64)
    par = np.full(n_nodes, -1, dtype=np.int64)
    done = np.zeros(n_nodes, dtype=np.bool_)
    dist[src] = 0
    for _ in range(n_nodes):
        u = -1
        best = IINF
        for v in range(n_nodes):
            if not done[v] and dist[v] < best:
                best = dist[v]
                u = v
        if u < 0:
            break
        done[u] = True
        for t in range(start[u], start[u + 1]):
            e = adj[t]
            if cap[e] <= 0:
                continue
            v = to[e]
            nd = best + cost[e] + pot[u] - pot[v]
            if nd < dist[v]:
                dist[v] = nd
                par[v] = e
    return dist, par


_dijkstra_nb = njit(_dijkstra_nb)


def _dijkstra_np(n_nodes, start, adj, to, cost, cap, pot, src):
    dist = np.full(n_nodes, IINF, dtype=np.int64)
    par = np.full(n_nodes, -1, dtype=np.int64)
    done = np.zeros(n_nodes, dtype=bool)
    dist[src] = 0
    for _ in range(n_nodes):
        masked = np.where(done, IINF, dist)
        u = int(np.argmin(masked))
        best = masked[u]
        if best >= IINF:
            break
        done[u] = True
        arcs = adj[start[u]:start[u + 1]]
        arcs = arcs[cap[arcs] > 0]
        if len(arcs) == 0:
            continue
        v = to[arcs]
        nd = best + cost[arcs] + pot[u] - pot[v]
        better = nd < dist[v]
        # networks carry no parallel arcs, so heads in ``v`` are distinct
        dist[v[better]] = nd[better]
        par[v[better]] = arcs[better]
    return dist, par


def _dag_potentials_nb(n_nodes, start, adj, to, cost, cap, src):
    dist = np.full(n_nodes, IINF, dtype=np.int64)
    dist[src] = 0
    for u in range(n_nodes):
        if dist[u] >= IINF:
            continue
        for t in range(start[u], start[u + 1]):
            e = adj[t]
            if cap[e] <= 0:
                continue
            v = to[e]
            nd = dist[u] + cost[e]
            if nd < dist[v]:
                dist[v] = nd
    return dist


_dag_potentials_nb = njit(_dag_potentials_nb)


def _dag_potentials_np(n_nodes, start, adj, to, cost, cap, src):
    dist = np.full(n_nodes, IINF, dtype=np.int64)
    dist[src] = 0
    for u in range(n_nodes):
        if dist[u] >= IINF:
            continue
        arcs = adj[start[u]:start[u + 1]]
        arcs = arcs[cap[arcs] > 0]
        if len(arcs):
            np.minimum.at(dist, to[arcs], dist[u] + cost[arcs])
    return dist


# ----------------------------------------------------------------- combiner


def _hedge_stream_nb(costs, switch, rate, uniforms, active):
    T = costs.shape[0]
    L = costs.shape[1]
    logw = np.zeros(L)
    p = np.full(L, 1.0 / L)
    q = np.empty(L)
    trail = np.empty(T, dtype=np.int64)
    service = 0.0
    moving = 0.0
    n_switch = 0
    for t in range(T):
        service = service + costs[t, active]
        mx = -INF
        for i in range(L):
            logw[i] = logw[i] - rate * costs[t, i]
            if logw[i] > mx:
                mx = logw[i]
        z = 0.0
        for i in range(L):
            logw[i] = logw[i] - mx
            q[i] = np.exp(logw[i])
            z = z + q[i]
        for i in range(L):
            q[i] = q[i] / z
        if q[active] < p[active]:
            if uniforms[t, 0] >= q[active] / p[active]:
                gain = 0.0
                for i in range(L):
                    if q[i] > p[i]:
                        gain = gain + (q[i] - p[i])
                target = uniforms[t, 1] * gain
                acc = 0.0
                nxt = -1
                for i in range(L):
                    if q[i] > p[i]:
                        acc = acc + (q[i] - p[i])
                        nxt = i
                        if target < acc:
                            break
                if nxt >= 0 and nxt != active:
                    moving = moving + switch[active, nxt]
                    n_switch += 1
                    active = nxt
        for i in range(L):
            p[i] = q[i]
        trail[t] = active
    return service, moving, n_switch, trail


_hedge_stream_nb = njit(_hedge_stream_nb)


def _hedge_stream_np(costs, switch, rate, uniforms, active):
    from .combiner import BlumBurch

    bb = BlumBurch(costs.shape[1], diam=1.0, rate=rate, active=active)
    trail = np.empty(costs.shape[0], dtype=np.int64)
    service = moving = 0.0
    n_switch = 0
    for t in range(costs.shape[0]):
        before = bb.active
        service += costs[t, before]
        bb.update(costs[t], uniforms[t])
        if bb.active != before:
            moving += switch[before, bb.active]
            n_switch += 1
        trail[t] = bb.active
    return service, moving, n_switch, trail


# ------------------------------------------------------------ dispatch

nearest = pick(_nearest_nb, _nearest_np)
min_pair = pick(_min_pair_nb, _min_pair_np)
greedy_insert = pick(_greedy_insert_nb, _greedy_insert_np)
config_distances = pick(_config_distances_nb, _config_distances_np)
wfa_update = pick(_wfa_update_nb, _wfa_update_np)
dijkstra = pick(_dijkstra_nb, _dijkstra_np)
dag_potentials = pick(_dag_potentials_nb, _dag_potentials_np)
hedge_stream = pick(_hedge_stream_nb, _hedge_stream_np)

VARIANTS = {
    "nearest": (_nearest_nb, _nearest_np),
    "min_pair": (_min_pair_nb, _min_pair_np),
    "greedy_insert": (_greedy_insert_nb, _greedy_insert_np),
    "config_distances": (_config_distances_nb, _config_distances_np),
    "wfa_update": (_wfa_update_nb, _wfa_update_np),
    "dijkstra": (_dijkstra_nb, _dijkstra_np),
    "dag_potentials": (_dag_potentials_nb, _dag_potentials_np),
    "hedge_stream": (_hedge_stream_nb, _hedge_stream_np),
}
