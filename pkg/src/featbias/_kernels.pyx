# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, nonecheck=False
"""Compiled hot loops: forest growing, forest prediction, permutation
importance and coordinate-descent penalty paths.

``featbias._pykernels`` holds a pure-Python twin of every function here with
the same signature and the same random stream; the two must stay in step.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int32_t, int64_t, uint8_t
from libc.stdlib cimport malloc, free, realloc
from libc.string cimport memset
from libc.math cimport exp, fabs, NAN

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t sm_next(uint64_t* s) noexcept nogil:
    s[0] += GOLDEN
    return mix64(s[0])


cdef inline Py_ssize_t sm_below(uint64_t* s, Py_ssize_t k) noexcept nogil:
    return <Py_ssize_t>(sm_next(s) % <uint64_t>k)


cdef inline void swap2(double* v, int32_t* ix, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef double tv = v[a]
    cdef int32_t ti = ix[a]
    v[a] = v[b]
    v[b] = tv
    ix[a] = ix[b]
    ix[b] = ti


cdef void sort2(double* v, int32_t* ix, Py_ssize_t n) noexcept nogil:
    """Sort ``v`` ascending carrying ``ix``; three-way quicksort for duplicates."""
    cdef Py_ssize_t lt, i, gt, j
    cdef double pivot, a, b, c, tv
    cdef int32_t ti
    while n > 16:
        a = v[0]
        b = v[n // 2]
        c = v[n - 1]
        if a < b:
            if b < c:
                pivot = b
            elif a < c:
                pivot = c
            else:
                pivot = a
        else:
            if a < c:
                pivot = a
            elif b < c:
                pivot = c
            else:
                pivot = b
        lt = 0
        i = 0
        gt = n
        while i < gt:
            if v[i] < pivot:
                swap2(v, ix, i, lt)
                i += 1
                lt += 1
            elif v[i] > pivot:
                gt -= 1
                swap2(v, ix, i, gt)
            else:
                i += 1
        if lt < n - gt:
            sort2(v, ix, lt)
            v += gt
            ix += gt
            n -= gt
        else:
            sort2(v + gt, ix + gt, n - gt)
            n = lt
    for i in range(1, n):
        tv = v[i]
        ti = ix[i]
        j = i - 1
        while j >= 0 and v[j] > tv:
            v[j + 1] = v[j]
            ix[j + 1] = ix[j]
            j -= 1
        v[j + 1] = tv
        ix[j + 1] = ti


cdef double auc_of(double* scores, int32_t* labels, Py_ssize_t m,
                   double* sv, int32_t* so) noexcept nogil:
    """Rank-sum AUC with midranks; NaN when a class is missing."""
    cdef Py_ssize_t k, start, end
    cdef double n1 = 0, n0, rsum = 0, pos, avg
    for k in range(m):
        sv[k] = scores[k]
        so[k] = <int32_t>k
        n1 += labels[k]
    n0 = m - n1
    if n1 == 0 or n0 == 0:
        return NAN
    sort2(sv, so, m)
    start = 0
    while start < m:
        end = start + 1
        while end < m and sv[end] == sv[start]:
            end += 1
        pos = 0
        for k in range(start, end):
            pos += labels[so[k]]
        avg = (start + 1 + end) / 2.0
        rsum += avg * pos
        start = end
    return (rsum - n1 * (n1 + 1) / 2.0) / (n1 * n0)


cdef struct NodeBuf:
    int32_t* feature
    double* threshold
    int32_t* left
    int32_t* right
    double* value
    double* weight
    int32_t* depth
    Py_ssize_t size
    Py_ssize_t cap


cdef int buf_reserve(NodeBuf* b, Py_ssize_t need) noexcept nogil:
    cdef Py_ssize_t cap
    if need <= b.cap:
        return 0
    cap = b.cap * 2
    if cap < need:
        cap = need
    if cap < 1024:
        cap = 1024
    b.feature = <int32_t*>realloc(b.feature, cap * sizeof(int32_t))
    b.threshold = <double*>realloc(b.threshold, cap * sizeof(double))
    b.left = <int32_t*>realloc(b.left, cap * sizeof(int32_t))
    b.right = <int32_t*>realloc(b.right, cap * sizeof(int32_t))
    b.value = <double*>realloc(b.value, cap * sizeof(double))
    b.weight = <double*>realloc(b.weight, cap * sizeof(double))
    b.depth = <int32_t*>realloc(b.depth, cap * sizeof(int32_t))
    if (b.feature == NULL or b.threshold == NULL or b.left == NULL or b.right == NULL
            or b.value == NULL or b.weight == NULL or b.depth == NULL):
        return -1
    b.cap = cap
    return 0


cdef void buf_free(NodeBuf* b) noexcept nogil:
    free(b.feature)
    free(b.threshold)
    free(b.left)
    free(b.right)
    free(b.value)
    free(b.weight)
    free(b.depth)


cdef int grow_tree(const double* Xc, Py_ssize_t n, Py_ssize_t p, const int32_t* y,
                   double* sw, int32_t* samples, Py_ssize_t m, int algo,
                   Py_ssize_t mtry, double min_node, double crit, uint64_t* rng,
                   NodeBuf* buf, double* imp, int32_t* feats, double* vals,
                   int32_t* order, int32_t* tmp, int32_t* stack,
                   const uint8_t* is_bin) noexcept nogil:
    cdef Py_ssize_t base = buf.size
    cdef Py_ssize_t sp = 0, node, start, end, k, c, r, f, i, nl, mtry_eff
    cdef int32_t dep, ti
    cdef double n0, n1, tot, w_root = 0, parent, best, score, thr, best_thr
    cdef double l0, l1, lt, rt, r0, r1, wi, xv, mean, sxc, txy, vh, var, stat
    cdef double xmin, xmax
    cdef Py_ssize_t best_f
    cdef const double* col

    for k in range(m):
        w_root += sw[samples[k]]
    if buf_reserve(buf, base + 1) != 0:
        return -1
    buf.size = base + 1
    stack[0] = 0
    stack[1] = 0
    stack[2] = <int32_t>m
    stack[3] = 0
    sp = 1
    mtry_eff = mtry if mtry < p else p

    while sp > 0:
        sp -= 1
        node = base + stack[4 * sp]
        start = stack[4 * sp + 1]
        end = stack[4 * sp + 2]
        dep = stack[4 * sp + 3]
        n0 = 0
        n1 = 0
        for k in range(start, end):
            i = samples[k]
            if y[i]:
                n1 += sw[i]
            else:
                n0 += sw[i]
        tot = n0 + n1
        buf.feature[node] = -1
        buf.threshold[node] = 0.0
        buf.left[node] = -1
        buf.right[node] = -1
        buf.value[node] = n1 / tot
        buf.weight[node] = tot
        buf.depth[node] = dep
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
            r = c + sm_below(rng, p - c)
            ti = feats[c]
            feats[c] = feats[r]
            feats[r] = ti
            f = feats[c]
            col = Xc + f * n
            if algo == 0 and is_bin[f]:
                l0 = 0
                l1 = 0
                for k in range(start, end):
                    i = samples[k]
                    if col[i] == 0:
                        if y[i]:
                            l1 += sw[i]
                        else:
                            l0 += sw[i]
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
                for k in range(start, end):
                    order[k - start] = samples[k]
                    vals[k - start] = col[samples[k]]
                sort2(vals, order, end - start)
                if vals[0] == vals[end - start - 1]:
                    continue
                l0 = 0
                l1 = 0
                for k in range(end - start - 1):
                    i = order[k]
                    wi = sw[i]
                    if y[i]:
                        l1 += wi
                    else:
                        l0 += wi
                    if vals[k] < vals[k + 1]:
                        lt = l0 + l1
                        rt = tot - lt
                        if lt < min_node or rt < min_node:
                            continue
                        r0 = n0 - l0
                        r1 = n1 - l1
                        score = (l0 * l0 + l1 * l1) / lt + (r0 * r0 + r1 * r1) / rt
                        if score > best:
                            best = score
                            best_f = f
                            thr = (vals[k] + vals[k + 1]) / 2.0
                            if thr >= vals[k + 1]:
                                thr = vals[k]
                            best_thr = thr
            else:
                i = samples[start]
                xmin = col[i]
                xmax = col[i]
                mean = 0
                for k in range(start, end):
                    i = samples[k]
                    xv = col[i]
                    mean += sw[i] * xv
                    if xv < xmin:
                        xmin = xv
                    if xv > xmax:
                        xmax = xv
                if xmin == xmax:
                    continue
                mean = mean / tot
                sxc = 0
                txy = 0
                for k in range(start, end):
                    i = samples[k]
                    xv = col[i] - mean
                    sxc += sw[i] * xv * xv
                    if y[i]:
                        txy += sw[i] * xv
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
            col = Xc + best_f * n
            for k in range(start, end):
                order[k - start] = samples[k]
                vals[k - start] = col[samples[k]]
            sort2(vals, order, end - start)
            best = -1.0
            l1 = 0
            lt = 0
            for k in range(end - start - 1):
                i = order[k]
                wi = sw[i]
                lt += wi
                if y[i]:
                    l1 += wi
                if vals[k] < vals[k + 1]:
                    rt = tot - lt
                    if lt < min_node or rt < min_node:
                        continue
                    xv = l1 - lt * n1 / tot
                    score = xv * xv * (tot - 1.0) / (vh * lt * rt)
                    if score > best:
                        best = score
                        thr = (vals[k] + vals[k + 1]) / 2.0
                        if thr >= vals[k + 1]:
                            thr = vals[k]
                        best_thr = thr
            if best < 0:
                continue
        else:
            if best - parent <= 1e-12 * tot:
                continue
            imp[best_f] += (best - parent) / w_root

        col = Xc + best_f * n
        nl = 0
        for k in range(start, end):
            if col[samples[k]] <= best_thr:
                tmp[nl] = samples[k]
                nl += 1
        r = nl
        for k in range(start, end):
            if col[samples[k]] > best_thr:
                tmp[r] = samples[k]
                r += 1
        for k in range(start, end):
            samples[k] = tmp[k - start]
        if buf_reserve(buf, buf.size + 2) != 0:
            return -1
        buf.feature[node] = <int32_t>best_f
        buf.threshold[node] = best_thr
        buf.left[node] = <int32_t>(buf.size - base)
        buf.right[node] = <int32_t>(buf.size - base + 1)
        # right child pushed first so the left subtree is grown first
        stack[4 * sp] = buf.right[node]
        stack[4 * sp + 1] = <int32_t>(start + nl)
        stack[4 * sp + 2] = <int32_t>end
        stack[4 * sp + 3] = dep + 1
        sp += 1
        stack[4 * sp] = buf.left[node]
        stack[4 * sp + 1] = <int32_t>start
        stack[4 * sp + 2] = <int32_t>(start + nl)
        stack[4 * sp + 3] = dep + 1
        sp += 1
        buf.size += 2
    return 0


def build_forest(const double[::1] Xc, Py_ssize_t n, Py_ssize_t p, const int32_t[::1] y,
                 int algo, int mode, Py_ssize_t n_sub, Py_ssize_t mtry, double min_node,
                 double crit, const uint64_t[::1] tree_seeds):
    """Grow ``len(tree_seeds)`` trees on the column-major matrix ``Xc``.

    ``algo`` is 0 for Gini splits and 1 for conditional-inference splits;
    ``mode`` is 0 for bootstrap resampling and 1 for ``n_sub`` rows drawn
    without replacement.
    """
    cdef Py_ssize_t ntree = tree_seeds.shape[0]
    cdef Py_ssize_t t, i, k, m, r
    cdef int32_t ti
    cdef uint64_t state
    cdef int rc = 0
    cdef NodeBuf buf
    inbag_arr = np.zeros((ntree, n), dtype=np.int32)
    gimp_arr = np.zeros((ntree, p), dtype=np.float64)
    offsets_arr = np.zeros(ntree + 1, dtype=np.int64)
    cdef int32_t[:, ::1] inbag = inbag_arr
    cdef double[:, ::1] gimp = gimp_arr
    cdef int64_t[::1] offsets = offsets_arr
    bin_arr = np.ones(max(p, 1), dtype=np.uint8)
    cdef uint8_t[::1] is_bin = bin_arr
    for k in range(p):
        for i in range(n):
            if Xc[k * n + i] != 0 and Xc[k * n + i] != 1:
                is_bin[k] = 0
                break

    memset(&buf, 0, sizeof(NodeBuf))
    cdef double* sw = <double*>malloc(max(n, 1) * sizeof(double))
    cdef int32_t* samples = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef int32_t* perm = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef int32_t* feats = <int32_t*>malloc(max(p, 1) * sizeof(int32_t))
    cdef double* vals = <double*>malloc(max(n, 1) * sizeof(double))
    cdef int32_t* order = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef int32_t* tmp = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef int32_t* stack = <int32_t*>malloc(4 * (2 * n + 2) * sizeof(int32_t))
    if (sw == NULL or samples == NULL or perm == NULL or feats == NULL or vals == NULL
            or order == NULL or tmp == NULL or stack == NULL):
        rc = -1
    with nogil:
        if rc == 0:
            for t in range(ntree):
                offsets[t] = buf.size
                state = tree_seeds[t]
                for i in range(n):
                    sw[i] = 0
                if mode == 0:
                    for i in range(n):
                        sw[sm_below(&state, n)] += 1
                else:
                    for i in range(n):
                        perm[i] = <int32_t>i
                    for i in range(n_sub):
                        r = i + sm_below(&state, n - i)
                        ti = perm[i]
                        perm[i] = perm[r]
                        perm[r] = ti
                        sw[perm[i]] = 1
                m = 0
                for i in range(n):
                    inbag[t, i] = <int32_t>sw[i]
                    if sw[i] > 0:
                        samples[m] = <int32_t>i
                        m += 1
                for k in range(p):
                    feats[k] = <int32_t>k
                if m == 0:
                    rc = -2
                    break
                rc = grow_tree(&Xc[0], n, p, &y[0], sw, samples, m, algo, mtry, min_node,
                               crit, &state, &buf, &gimp[t, 0], feats, vals, order, tmp, stack,
                               &is_bin[0])
                if rc != 0:
                    break
            offsets[ntree] = buf.size
    free(sw)
    free(samples)
    free(perm)
    free(feats)
    free(vals)
    free(order)
    free(tmp)
    free(stack)
    if rc == -1:
        buf_free(&buf)
        raise MemoryError("forest node buffer allocation failed")
    if rc == -2:
        buf_free(&buf)
        raise ValueError("empty resample")
    size = buf.size
    feature = np.empty(size, dtype=np.int32)
    threshold = np.empty(size, dtype=np.float64)
    left = np.empty(size, dtype=np.int32)
    right = np.empty(size, dtype=np.int32)
    value = np.empty(size, dtype=np.float64)
    weight = np.empty(size, dtype=np.float64)
    depth = np.empty(size, dtype=np.int32)
    cdef int32_t[::1] fv = feature, lv = left, rv = right, dv = depth
    cdef double[::1] tv = threshold, vv = value, wv = weight
    for k in range(size):
        fv[k] = buf.feature[k]
        tv[k] = buf.threshold[k]
        lv[k] = buf.left[k]
        rv[k] = buf.right[k]
        vv[k] = buf.value[k]
        wv[k] = buf.weight[k]
        dv[k] = buf.depth[k]
    buf_free(&buf)
    return {
        "feature": feature, "threshold": threshold, "left": left, "right": right,
        "value": value, "weight": weight, "depth": depth, "offsets": offsets_arr,
        "inbag": inbag_arr, "gini": gimp_arr,
    }


cdef inline double leaf_value(const double* Xc, Py_ssize_t n, Py_ssize_t row,
                              const int32_t* feature, const double* threshold,
                              const int32_t* left, const int32_t* right,
                              const double* value, Py_ssize_t base,
                              Py_ssize_t swap_f, double swap_x) noexcept nogil:
    cdef Py_ssize_t node = 0
    cdef int32_t f
    cdef double xv
    f = feature[base]
    while f >= 0:
        if f == swap_f:
            xv = swap_x
        else:
            xv = Xc[f * n + row]
        if xv <= threshold[base + node]:
            node = left[base + node]
        else:
            node = right[base + node]
        f = feature[base + node]
    return value[base + node]


def predict_trees(const double[::1] Xc, Py_ssize_t n, const int32_t[::1] feature,
                  const double[::1] threshold, const int32_t[::1] left,
                  const int32_t[::1] right, const double[::1] value,
                  const int64_t[::1] offsets):
    """Leaf class-1 proportion for every (tree, row): shape (ntree, n)."""
    cdef Py_ssize_t ntree = offsets.shape[0] - 1
    cdef Py_ssize_t t, i
    out_arr = np.empty((ntree, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if n == 0 or ntree == 0:
        return out_arr
    with nogil:
        for t in range(ntree):
            for i in range(n):
                out[t, i] = leaf_value(&Xc[0], n, i, &feature[0], &threshold[0], &left[0],
                                       &right[0], &value[0], offsets[t], -1, 0.0)
    return out_arr


def perm_importance(const double[::1] Xc, Py_ssize_t n, Py_ssize_t p, const int32_t[::1] y,
                    const int32_t[::1] feature, const double[::1] threshold,
                    const int32_t[::1] left, const int32_t[::1] right,
                    const double[::1] value, const int64_t[::1] offsets,
                    const int32_t[:, ::1] inbag, int measure, uint64_t seed, int n_perm):
    """Per-tree out-of-bag permutation importance, shape (ntree, p).

    ``measure`` 0 is accuracy and 1 is AUC. Rows are NaN for trees whose
    out-of-bag set is empty (or single-class under AUC).
    """
    cdef Py_ssize_t ntree = offsets.shape[0] - 1
    cdef Py_ssize_t t, i, j, k, m, r, base, rep
    cdef double v, basem, metric, hits, total, tv
    cdef uint64_t state, key
    cdef int32_t npos
    out_arr = np.zeros((ntree, p), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef int32_t* rows = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef int32_t* lab = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef int32_t* so = <int32_t*>malloc(max(n, 1) * sizeof(int32_t))
    cdef double* sc = <double*>malloc(max(n, 1) * sizeof(double))
    cdef double* sv = <double*>malloc(max(n, 1) * sizeof(double))
    cdef double* pv = <double*>malloc(max(n, 1) * sizeof(double))
    cdef uint8_t* used = <uint8_t*>malloc(max(p, 1) * sizeof(uint8_t))
    if (rows == NULL or lab == NULL or so == NULL or sc == NULL or sv == NULL
            or pv == NULL or used == NULL):
        free(rows); free(lab); free(so); free(sc); free(sv); free(pv); free(used)
        raise MemoryError()
    with nogil:
        for t in range(ntree):
            base = offsets[t]
            m = 0
            npos = 0
            for i in range(n):
                if inbag[t, i] == 0:
                    rows[m] = <int32_t>i
                    lab[m] = y[i]
                    npos += y[i]
                    m += 1
            if m == 0 or (measure == 1 and (npos == 0 or npos == m)):
                for j in range(p):
                    out[t, j] = NAN
                continue
            for j in range(p):
                used[j] = 0
            for k in range(base, offsets[t + 1]):
                if feature[k] >= 0:
                    used[feature[k]] = 1
            for k in range(m):
                sc[k] = leaf_value(&Xc[0], n, rows[k], &feature[0], &threshold[0], &left[0],
                                   &right[0], &value[0], base, -1, 0.0)
            if measure == 0:
                hits = 0
                for k in range(m):
                    if (sc[k] > 0.5) == (lab[k] == 1):
                        hits += 1
                basem = hits / m
            else:
                basem = auc_of(sc, lab, m, sv, so)
            for j in range(p):
                if not used[j]:
                    out[t, j] = 0.0
                    continue
                total = 0
                for rep in range(n_perm):
                    key = <uint64_t>((t * p + j) * n_perm + rep)
                    state = mix64(seed + GOLDEN * (key + 1))
                    for k in range(m):
                        pv[k] = Xc[j * n + rows[k]]
                    for k in range(m - 1, 0, -1):
                        r = sm_below(&state, k + 1)
                        tv = pv[k]
                        pv[k] = pv[r]
                        pv[r] = tv
                    for k in range(m):
                        sc[k] = leaf_value(&Xc[0], n, rows[k], &feature[0], &threshold[0],
                                           &left[0], &right[0], &value[0], base, j, pv[k])
                    if measure == 0:
                        hits = 0
                        for k in range(m):
                            if (sc[k] > 0.5) == (lab[k] == 1):
                                hits += 1
                        metric = hits / m
                    else:
                        metric = auc_of(sc, lab, m, sv, so)
                    total += basem - metric
                out[t, j] = total / n_perm
    free(rows); free(lab); free(so); free(sc); free(sv); free(pv); free(used)
    return out_arr


cdef inline double soft(double g, double t) noexcept nogil:
    if g > t:
        return g - t
    if g < -t:
        return g + t
    return 0.0


def cd_path(const double[::1] Xc, Py_ssize_t n, Py_ssize_t p, const double[::1] y,
            const double[::1] w, const double[::1] lambdas, double alpha,
            const uint8_t[::1] penalized, int family, int fit_intercept, double tol,
            int max_outer, int max_inner, double b0_init, const double[::1] beta_init):
    """Coordinate descent along a penalty path with warm starts.

    Objective per lambda: loss + lambda * (alpha * ||b||^2 + (1 - alpha) * |b|_1)
    over penalized coordinates, where loss is the weighted negative
    log-likelihood (``family`` 0) or half the weighted residual sum of
    squares (``family`` 1). Returns (intercepts, coefficients, converged).
    """
    cdef Py_ssize_t L = lambdas.shape[0]
    cdef Py_ssize_t l, i, j, it, outer
    cdef double lam, l1, l2, b0, g, new, d, maxd, hw, pi, wi, outer_d, sumr
    cdef bint inner_ok = 0
    cdef bint full = 1
    b0s_arr = np.empty(L, dtype=np.float64)
    betas_arr = np.empty((L, p), dtype=np.float64)
    conv_arr = np.zeros(L, dtype=np.uint8)
    cdef double[::1] b0s = b0s_arr
    cdef double[:, ::1] betas = betas_arr
    cdef uint8_t[::1] conv = conv_arr
    cdef double* beta = <double*>malloc(max(p, 1) * sizeof(double))
    cdef double* bold = <double*>malloc(max(p, 1) * sizeof(double))
    cdef double* H = <double*>malloc(max(p, 1) * sizeof(double))
    cdef double* eta = <double*>malloc(max(n, 1) * sizeof(double))
    cdef double* W = <double*>malloc(max(n, 1) * sizeof(double))
    cdef double* r = <double*>malloc(max(n, 1) * sizeof(double))
    if beta == NULL or bold == NULL or H == NULL or eta == NULL or W == NULL or r == NULL:
        free(beta); free(bold); free(H); free(eta); free(W); free(r)
        raise MemoryError()
    with nogil:
        b0 = b0_init
        for j in range(p):
            beta[j] = beta_init[j]
        for i in range(n):
            eta[i] = b0
        for j in range(p):
            if beta[j] != 0:
                for i in range(n):
                    eta[i] += Xc[j * n + i] * beta[j]
        for l in range(L):
            lam = lambdas[l]
            l1 = lam * (1.0 - alpha)
            l2 = 2.0 * lam * alpha
            for outer in range(max_outer):
                hw = 0
                for i in range(n):
                    if family == 0:
                        pi = 1.0 / (1.0 + exp(-eta[i]))
                        if pi < 1e-5:
                            pi = 1e-5
                        elif pi > 1.0 - 1e-5:
                            pi = 1.0 - 1e-5
                        W[i] = w[i] * pi * (1.0 - pi)
                        r[i] = w[i] * (y[i] - 1.0 / (1.0 + exp(-eta[i])))
                    else:
                        W[i] = w[i]
                        r[i] = w[i] * (y[i] - eta[i])
                    hw += W[i]
                for j in range(p):
                    g = 0
                    for i in range(n):
                        g += W[i] * Xc[j * n + i] * Xc[j * n + i]
                    H[j] = g
                    bold[j] = beta[j]
                outer_d = b0
                full = 1
                for it in range(max_inner):
                    maxd = 0
                    if fit_intercept and hw > 0:
                        sumr = 0
                        for i in range(n):
                            sumr += r[i]
                        d = sumr / hw
                        if d != 0:
                            b0 += d
                            for i in range(n):
                                r[i] -= W[i] * d
                                eta[i] += d
                        if fabs(d) > maxd:
                            maxd = fabs(d)
                    for j in range(p):
                        if H[j] <= 0 or (not full and beta[j] == 0):
                            continue
                        g = 0
                        for i in range(n):
                            g += Xc[j * n + i] * r[i]
                        g += H[j] * beta[j]
                        if penalized[j]:
                            new = soft(g, l1) / (H[j] + l2)
                        else:
                            new = g / H[j]
                        d = new - beta[j]
                        if d != 0:
                            beta[j] = new
                            for i in range(n):
                                wi = Xc[j * n + i] * d
                                r[i] -= W[i] * wi
                                eta[i] += wi
                        if fabs(d) > maxd:
                            maxd = fabs(d)
                    # sweep the active set until it settles, then confirm with a full sweep
                    if maxd < tol:
                        if full:
                            break
                        full = 1
                    else:
                        full = 0
                inner_ok = maxd < tol and full
                maxd = fabs(b0 - outer_d)
                for j in range(p):
                    if fabs(beta[j] - bold[j]) > maxd:
                        maxd = fabs(beta[j] - bold[j])
                if family == 1:
                    conv[l] = inner_ok
                    break
                if maxd < tol and inner_ok:
                    conv[l] = 1
                    break
            b0s[l] = b0
            for j in range(p):
                betas[l, j] = beta[j]
    free(beta); free(bold); free(H); free(eta); free(W); free(r)
    return b0s_arr, betas_arr, conv_arr.astype(bool)
