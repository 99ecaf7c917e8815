"""Pure-Python fallback for the compiled kernels in ``_kernels.pyx``.

Every function mirrors its compiled counterpart: same arguments, same
splitmix64 random stream, same node numbering and the same floating-point
expressions wherever the result feeds a comparison.
"""
import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def mix64(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * MIX1) & MASK
    z = ((z ^ (z >> 27)) * MIX2) & MASK
    return z ^ (z >> 31)


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed):
        self.state = int(seed) & MASK

    def next(self):
        self.state = (self.state + GOLDEN) & MASK
        return mix64(self.state)

    def below(self, k):
        return self.next() % k


def _auc(scores, labels):
    n1 = float(labels.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        return float("nan")
    order = np.argsort(scores, kind="stable")
    sv = scores[order]
    lab = labels[order]
    rsum = 0.0
    start = 0
    m = len(sv)
    # group boundaries of tied scores
    cuts = np.flatnonzero(sv[1:] != sv[:-1]) + 1
    bounds = np.concatenate(([0], cuts, [m]))
    for start, end in zip(bounds[:-1], bounds[1:]):
        pos = float(lab[start:end].sum())
        rsum += (start + 1 + end) / 2.0 * pos
    return (rsum - n1 * (n1 + 1) / 2.0) / (n1 * n0)


def _grow_tree(cols, y, sw, samples, algo, mtry, min_node, crit, rng, nodes, imp, feats, is_bin):
    p = len(cols)
    base = len(nodes["feature"])
    w_root = float(sw[samples].sum())
    mtry_eff = min(mtry, p)
    for key in nodes:
        nodes[key].append(0)
    nodes["feature"][base] = -1
    stack = [(0, 0, len(samples), 0)]
    while stack:
        local, start, end, dep = stack.pop()
        node = base + local
        rows = samples[start:end]
        wr = sw[rows]
        yr = y[rows]
        n1 = float(wr[yr == 1].sum())
        n0 = float(wr[yr == 0].sum())
        tot = n0 + n1
        nodes["feature"][node] = -1
        nodes["threshold"][node] = 0.0
        nodes["left"][node] = -1
        nodes["right"][node] = -1
        nodes["value"][node] = n1 / tot
        nodes["weight"][node] = tot
        nodes["depth"][node] = dep
        if n0 == 0 or n1 == 0 or tot < 2 * min_node:
            continue

        best_f = -1
        best_thr = 0.0
        if algo == 0:
            parent = (n0 * n0 + n1 * n1) / tot
            best = parent
        else:
            best = -1.0
            vh = (n1 / tot) * (1.0 - n1 / tot)
        for c in range(mtry_eff):
            r = c + rng.below(p - c)
            feats[c], feats[r] = feats[r], feats[c]
            f = feats[c]
            col = cols[f]
            if algo == 0 and is_bin[f]:
                zero = col[rows] == 0
                l1 = float(wr[zero & (yr == 1)].sum())
                l0 = float(wr[zero & (yr == 0)].sum())
                lt = l0 + l1
                rt = tot - lt
                if lt == 0 or rt == 0 or lt < min_node or rt < min_node:
                    continue
                r0 = n0 - l0
                r1 = n1 - l1
                score = (l0 * l0 + l1 * l1) / lt + (r0 * r0 + r1 * r1) / rt
                if score > best:
                    best = score
                    best_f = f
                    best_thr = 0.5
            elif algo == 0:
                v = col[rows]
                o = np.argsort(v, kind="stable")
                vs = v[o]
                if vs[0] == vs[-1]:
                    continue
                ws = wr[o]
                c1 = np.cumsum(ws * yr[o])[:-1]
                lt = np.cumsum(ws)[:-1]
                c0 = lt - c1
                rt = tot - lt
                ok = (vs[:-1] < vs[1:]) & (lt >= min_node) & (rt >= min_node)
                if not ok.any():
                    continue
                r0 = n0 - c0
                r1 = n1 - c1
                with np.errstate(divide="ignore", invalid="ignore"):
                    score = (c0 * c0 + c1 * c1) / lt + (r0 * r0 + r1 * r1) / rt
                score = np.where(ok, score, -np.inf)
                k = int(np.argmax(score))
                if score[k] > best:
                    best = float(score[k])
                    best_f = f
                    thr = (vs[k] + vs[k + 1]) / 2.0
                    if thr >= vs[k + 1]:
                        thr = vs[k]
                    best_thr = float(thr)
            else:
                v = col[rows]
                if v.min() == v.max():
                    continue
                mean = float(np.dot(wr, v)) / tot
                xc = v - mean
                sxc = float(np.dot(wr * xc, xc))
                txy = float(np.dot(wr * xc, yr))
                var = tot / (tot - 1.0) * vh * sxc
                if var <= 0:
                    continue
                stat = txy * txy / var
                if stat > best:
                    best = stat
                    best_f = f

        if best_f < 0:
            continue
        if algo == 1:
            if best <= crit:
                continue
            v = cols[best_f][rows]
            o = np.argsort(v, kind="stable")
            vs = v[o]
            ws = wr[o]
            lt = np.cumsum(ws)[:-1]
            l1 = np.cumsum(ws * yr[o])[:-1]
            rt = tot - lt
            ok = (vs[:-1] < vs[1:]) & (lt >= min_node) & (rt >= min_node)
            if not ok.any():
                continue
            xv = l1 - lt * n1 / tot
            with np.errstate(divide="ignore", invalid="ignore"):
                score = xv * xv * (tot - 1.0) / (vh * lt * rt)
            score = np.where(ok, score, -np.inf)
            k = int(np.argmax(score))
            thr = (vs[k] + vs[k + 1]) / 2.0
            if thr >= vs[k + 1]:
                thr = vs[k]
            best_thr = float(thr)
        else:
            if best - parent <= 1e-12 * tot:
                continue
            imp[best_f] += (best - parent) / w_root

        go_left = cols[best_f][rows] <= best_thr
        left_rows = rows[go_left]
        nl = len(left_rows)
        samples[start:end] = np.concatenate((left_rows, rows[~go_left]))
        size = len(nodes["feature"])
        for key in nodes:
            nodes[key].extend((0, 0))
        left_id = size - base
        nodes["feature"][node] = best_f
        nodes["threshold"][node] = best_thr
        nodes["left"][node] = left_id
        nodes["right"][node] = left_id + 1
        stack.append((left_id + 1, start + nl, end, dep + 1))
        stack.append((left_id, start, start + nl, dep + 1))


def build_forest(Xc, n, p, y, algo, mode, n_sub, mtry, min_node, crit, tree_seeds):
    Xc = np.asarray(Xc, dtype=np.float64)
    y = np.asarray(y, dtype=np.int32)
    cols = [Xc[f * n:(f + 1) * n] for f in range(p)]
    is_bin = [bool(np.all((c == 0) | (c == 1))) for c in cols]
    ntree = len(tree_seeds)
    inbag = np.zeros((ntree, n), dtype=np.int32)
    gimp = np.zeros((ntree, p), dtype=np.float64)
    offsets = np.zeros(ntree + 1, dtype=np.int64)
    nodes = {k: [] for k in ("feature", "threshold", "left", "right", "value", "weight", "depth")}
    for t in range(ntree):
        offsets[t] = len(nodes["feature"])
        rng = SplitMix64(int(tree_seeds[t]))
        sw = np.zeros(n, dtype=np.float64)
        if mode == 0:
            for _ in range(n):
                sw[rng.below(n)] += 1
        else:
            perm = list(range(n))
            for i in range(n_sub):
                r = i + rng.below(n - i)
                perm[i], perm[r] = perm[r], perm[i]
                sw[perm[i]] = 1
        inbag[t] = sw.astype(np.int32)
        samples = np.flatnonzero(sw > 0).astype(np.int64)
        if len(samples) == 0:
            raise ValueError("empty resample")
        feats = list(range(p))
        row = np.zeros(p)
        _grow_tree(cols, y, sw, samples, algo, mtry, min_node, crit, rng, nodes, row, feats, is_bin)
        gimp[t] = row
    offsets[ntree] = len(nodes["feature"])
    out = {
        "feature": np.asarray(nodes["feature"], dtype=np.int32),
        "threshold": np.asarray(nodes["threshold"], dtype=np.float64),
        "left": np.asarray(nodes["left"], dtype=np.int32),
        "right": np.asarray(nodes["right"], dtype=np.int32),
        "value": np.asarray(nodes["value"], dtype=np.float64),
        "weight": np.asarray(nodes["weight"], dtype=np.float64),
        "depth": np.asarray(nodes["depth"], dtype=np.int32),
        "offsets": offsets,
        "inbag": inbag,
        "gini": gimp,
    }
    return out


def _tree_values(cols, rows, feature, threshold, left, right, value, base, swap_f=-1, swap_x=None):
    """Vectorised descent of one tree for the given rows."""
    node = np.zeros(len(rows), dtype=np.int64)
    active = feature[base + node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        nd = node[idx] + base
        f = feature[nd]
        xv = np.empty(len(idx))
        for ff in np.unique(f):
            sel = f == ff
            if ff == swap_f:
                xv[sel] = swap_x[idx[sel]]
            else:
                xv[sel] = cols[ff][rows[idx[sel]]]
        go_left = xv <= threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active = feature[base + node] >= 0
    return value[base + node]


def predict_trees(Xc, n, feature, threshold, left, right, value, offsets):
    Xc = np.asarray(Xc, dtype=np.float64)
    ntree = len(offsets) - 1
    p = len(Xc) // n if n else 0
    cols = [Xc[f * n:(f + 1) * n] for f in range(p)]
    out = np.empty((ntree, n), dtype=np.float64)
    if n == 0:
        return out
    rows = np.arange(n)
    for t in range(ntree):
        out[t] = _tree_values(cols, rows, feature, threshold, left, right, value, int(offsets[t]))
    return out


def perm_importance(Xc, n, p, y, feature, threshold, left, right, value, offsets,
                    inbag, measure, seed, n_perm):
    Xc = np.asarray(Xc, dtype=np.float64)
    y = np.asarray(y, dtype=np.int32)
    cols = [Xc[f * n:(f + 1) * n] for f in range(p)]
    ntree = len(offsets) - 1
    out = np.zeros((ntree, p), dtype=np.float64)
    for t in range(ntree):
        base = int(offsets[t])
        rows = np.flatnonzero(inbag[t] == 0)
        m = len(rows)
        lab = y[rows]
        npos = int(lab.sum())
        if m == 0 or (measure == 1 and (npos == 0 or npos == m)):
            out[t] = np.nan
            continue
        tree_feats = feature[base:int(offsets[t + 1])]
        used = np.zeros(p, dtype=bool)
        used[tree_feats[tree_feats >= 0]] = True
        sc = _tree_values(cols, rows, feature, threshold, left, right, value, base)
        if measure == 0:
            basem = float(((sc > 0.5) == (lab == 1)).sum()) / m
        else:
            basem = _auc(sc, lab)
        for j in range(p):
            if not used[j]:
                out[t, j] = 0.0
                continue
            total = 0.0
            for rep in range(n_perm):
                key = (t * p + j) * n_perm + rep
                rng = SplitMix64(mix64((int(seed) + GOLDEN * (key + 1)) & MASK))
                pv = cols[j][rows].copy()
                for k in range(m - 1, 0, -1):
                    r = rng.below(k + 1)
                    pv[k], pv[r] = pv[r], pv[k]
                sc = _tree_values(cols, rows, feature, threshold, left, right, value, base, j, pv)
                if measure == 0:
                    metric = float(((sc > 0.5) == (lab == 1)).sum()) / m
                else:
                    metric = _auc(sc, lab)
                total += basem - metric
            out[t, j] = total / n_perm
    return out


def _soft(g, t):
    if g > t:
        return g - t
    if g < -t:
        return g + t
    return 0.0


def cd_path(Xc, n, p, y, w, lambdas, alpha, penalized, family, fit_intercept, tol,
            max_outer, max_inner, b0_init, beta_init):
    Xc = np.asarray(Xc, dtype=np.float64)
    cols = [Xc[j * n:(j + 1) * n] for j in range(p)]
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    L = len(lambdas)
    b0s = np.empty(L)
    betas = np.empty((L, p))
    conv = np.zeros(L, dtype=bool)
    b0 = float(b0_init)
    beta = np.array(beta_init, dtype=np.float64)
    eta = np.full(n, b0)
    for j in range(p):
        if beta[j] != 0:
            eta += cols[j] * beta[j]
    for l in range(L):
        lam = float(lambdas[l])
        l1 = lam * (1.0 - alpha)
        l2 = 2.0 * lam * alpha
        inner_ok = False
        for _ in range(max_outer):
            if family == 0:
                pr = 1.0 / (1.0 + np.exp(-eta))
                pc = np.clip(pr, 1e-5, 1.0 - 1e-5)
                W = w * pc * (1.0 - pc)
                r = w * (y - pr)
            else:
                W = w.copy()
                r = w * (y - eta)
            hw = float(W.sum())
            H = np.array([float(np.dot(W * c, c)) for c in cols])
            bold = beta.copy()
            outer_b0 = b0
            full = True
            for _ in range(max_inner):
                maxd = 0.0
                if fit_intercept and hw > 0:
                    d = float(r.sum()) / hw
                    if d != 0:
                        b0 += d
                        r -= W * d
                        eta += d
                    maxd = max(maxd, abs(d))
                for j in range(p):
                    if H[j] <= 0 or (not full and beta[j] == 0):
                        continue
                    g = float(np.dot(cols[j], r)) + H[j] * beta[j]
                    if penalized[j]:
                        new = _soft(g, l1) / (H[j] + l2)
                    else:
                        new = g / H[j]
                    d = new - beta[j]
                    if d != 0:
                        beta[j] = new
                        step = cols[j] * d
                        r -= W * step
                        eta += step
                    maxd = max(maxd, abs(d))
                # sweep the active set until it settles, then confirm with a full sweep
                if maxd < tol:
                    if full:
                        break
                    full = True
                else:
                    full = False
            inner_ok = maxd < tol and full
            change = max(abs(b0 - outer_b0), float(np.max(np.abs(beta - bold))) if p else 0.0)
            if family == 1:
                conv[l] = inner_ok
                break
            if change < tol and inner_ok:
                conv[l] = True
                break
        b0s[l] = b0
        betas[l] = beta
    return b0s, betas, conv
