# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled boosting kernel.

Structural twin of _gbt_py: same greedy histogram splits, same first-wins
tie-breaking, same accumulation orders, so forests match the NumPy backend
bit-for-bit.  Only the inner loops live here; binning, subsampling, and
inference are shared glue in _gbt.
"""

import numpy as np


def fit_forest(const int[:, ::1] bins, const int[::1] nbins, const double[::1] y,
               double base, int n_rounds, int max_depth, double learning_rate,
               samples,
               int[:, ::1] feature, int[:, ::1] split_bin, double[:, ::1] value,
               double[::1] gain, double[::1] curve, double[::1] pred):
    cdef Py_ssize_t n = bins.shape[0]
    cdef Py_ssize_t m = bins.shape[1]
    cdef Py_ssize_t max_nodes = feature.shape[1]
    cdef Py_ssize_t widest = 1 << (max_depth - 1)
    cdef Py_ssize_t slots_cap = widest if widest < n else n

    if samples is None:
        samples = np.arange(n, dtype=np.int32).reshape(1, n)
    cdef const int[:, ::1] samp = samples
    cdef Py_ssize_t samp_rows = samp.shape[0]

    cdef double[::1] resid = np.empty(n)
    cdef int[::1] node_of = np.empty(n, dtype=np.int32)
    cdef double[::1] sums = np.zeros(max_nodes)
    cdef long long[::1] cnts = np.zeros(max_nodes, dtype=np.int64)
    cdef int[::1] slot_map = np.empty(widest, dtype=np.int32)
    cdef double[:, :, ::1] hsum = np.zeros((slots_cap, m, 256))
    cdef long long[:, :, ::1] hcnt = np.zeros((slots_cap, m, 256), dtype=np.int64)

    cdef const int[::1] row_set
    cdef Py_ssize_t t, i, r, d, first, width, li, nd, f, b, nb, slot, nslots
    cdef Py_ssize_t m_sub, child
    cdef long long ctot, cl, cr, best_cl
    cdef double stot, sl, sr, g, parent_score, best_gain, best_sl, dd, acc, err
    cdef int best_f, best_b, made_split, fx, sb

    for t in range(n_rounds):
        for r in range(n):
            resid[r] = y[r] - pred[r]
        row_set = samp[t % samp_rows]
        m_sub = row_set.shape[0]

        for nd in range(max_nodes):
            sums[nd] = 0.0
            cnts[nd] = 0
        cnts[0] = m_sub
        acc = 0.0
        for i in range(m_sub):
            node_of[i] = 0
            acc += resid[row_set[i]]
        sums[0] = acc

        for d in range(max_depth):
            first = (1 << d) - 1
            width = 1 << d
            made_split = 0

            nslots = 0
            for li in range(width):
                nd = first + li
                if cnts[nd] >= 2:
                    slot_map[li] = <int> nslots
                    nslots += 1
                else:
                    slot_map[li] = -1

            if nslots > 0:
                for slot in range(nslots):
                    for f in range(m):
                        for b in range(256):
                            hsum[slot, f, b] = 0.0
                            hcnt[slot, f, b] = 0
                for i in range(m_sub):
                    nd = node_of[i]
                    if nd < 0:
                        continue
                    slot = slot_map[nd - first]
                    if slot < 0:
                        continue
                    r = row_set[i]
                    dd = resid[r]
                    for f in range(m):
                        b = bins[r, f]
                        hsum[slot, f, b] += dd
                        hcnt[slot, f, b] += 1

            for li in range(width):
                nd = first + li
                if cnts[nd] == 0:
                    continue
                stot = sums[nd]
                ctot = cnts[nd]
                slot = slot_map[li]
                best_gain = 0.0
                best_f = -1
                best_b = -1
                best_sl = 0.0
                best_cl = 0
                if slot >= 0:
                    parent_score = stot * stot / ctot
                    for f in range(m):
                        nb = nbins[f]
                        sl = 0.0
                        cl = 0
                        for b in range(nb - 1):
                            sl += hsum[slot, f, b]
                            cl += hcnt[slot, f, b]
                            if cl < 1 or cl > ctot - 1:
                                continue
                            sr = stot - sl
                            cr = ctot - cl
                            g = sl * sl / cl + sr * sr / cr - parent_score
                            if g > best_gain:
                                best_gain = g
                                best_f = <int> f
                                best_b = <int> b
                                best_sl = sl
                                best_cl = cl
                if best_f < 0:
                    feature[t, nd] = -1
                    value[t, nd] = stot / ctot
                else:
                    feature[t, nd] = best_f
                    split_bin[t, nd] = best_b
                    gain[best_f] += best_gain
                    sums[2 * nd + 1] = best_sl
                    cnts[2 * nd + 1] = best_cl
                    sums[2 * nd + 2] = stot - best_sl
                    cnts[2 * nd + 2] = ctot - best_cl
                    made_split = 1

            for i in range(m_sub):
                nd = node_of[i]
                if nd < 0:
                    continue
                fx = feature[t, nd]
                if fx == -1:
                    node_of[i] = -1
                else:
                    child = 2 * nd + 1
                    if bins[row_set[i], fx] > split_bin[t, nd]:
                        child += 1
                    node_of[i] = <int> child

            if not made_split:
                break

        for nd in range(max_nodes):
            if cnts[nd] > 0 and feature[t, nd] == -2:
                feature[t, nd] = -1
                value[t, nd] = sums[nd] / cnts[nd]

        acc = 0.0
        for r in range(n):
            nd = 0
            fx = feature[t, 0]
            while fx >= 0:
                nd = 2 * nd + 1
                if bins[r, fx] > split_bin[t, nd // 2]:
                    nd += 1
                fx = feature[t, nd]
            pred[r] += learning_rate * value[t, nd]
            err = y[r] - pred[r]
            acc += err * err
        curve[t] = acc / n
