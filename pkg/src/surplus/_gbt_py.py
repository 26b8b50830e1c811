"""Pure-NumPy boosting kernel.

Mirror of the compiled kernel in _gbt_cy.pyx: the same greedy histogram
splits, the same tie-breaking (first feature, then first bin, strictly
greater gain), and float accumulations in the same order, so the two
backends produce bit-identical forests.  Kept dependency-free beyond NumPy
so the package works without a C compiler.
"""

from __future__ import annotations

import numpy as np


def fit_forest(
    bins, nbins, y, base, n_rounds, max_depth, learning_rate, samples,
    feature, split_bin, value, gain, curve, pred,
):
    n, m = bins.shape
    max_nodes = feature.shape[1]
    sums = np.zeros(max_nodes)
    cnts = np.zeros(max_nodes, dtype=np.int64)
    all_rows = np.arange(n, dtype=np.int32)
    rix = np.arange(n)

    for t in range(n_rounds):
        resid = y - pred
        rows = all_rows if samples is None else samples[t]
        bsub = bins[rows]
        rsub = resid[rows]
        m_sub = rows.shape[0]

        sums[:] = 0.0
        cnts[:] = 0
        node_of = np.zeros(m_sub, dtype=np.int32)
        cnts[0] = m_sub
        sums[0] = float(np.cumsum(rsub)[-1])

        for d in range(max_depth):
            first = (1 << d) - 1
            made_split = False
            for nd in range(first, first + (1 << d)):
                if cnts[nd] == 0:
                    continue
                member = np.nonzero(node_of == nd)[0]
                stot = sums[nd]
                ctot = int(cnts[nd])
                best_gain = 0.0
                best = None
                if ctot >= 2:
                    parent_score = stot * stot / ctot
                    for f in range(m):
                        nb = int(nbins[f])
                        if nb < 2:
                            continue
                        h = np.bincount(
                            bsub[member, f], weights=rsub[member], minlength=nb
                        )
                        c = np.bincount(bsub[member, f], minlength=nb)
                        sl = np.cumsum(h)[:-1]
                        cl = np.cumsum(c)[:-1]
                        valid = (cl >= 1) & (cl <= ctot - 1)
                        if not valid.any():
                            continue
                        with np.errstate(divide="ignore", invalid="ignore"):
                            g = sl * sl / cl + (stot - sl) ** 2 / (ctot - cl)
                        g = np.where(valid, g - parent_score, -np.inf)
                        b = int(np.argmax(g))
                        if g[b] > best_gain:
                            best_gain = float(g[b])
                            best = (f, b, float(sl[b]), int(cl[b]))
                if best is None:
                    feature[t, nd] = -1
                    value[t, nd] = stot / ctot
                    node_of[member] = -1
                    continue
                bf, bb, bsl, bcl = best
                feature[t, nd] = bf
                split_bin[t, nd] = bb
                gain[bf] += best_gain
                sums[2 * nd + 1] = bsl
                cnts[2 * nd + 1] = bcl
                sums[2 * nd + 2] = stot - bsl
                cnts[2 * nd + 2] = ctot - bcl
                node_of[member] = 2 * nd + 1 + (bsub[member, bf] > bb)
                made_split = True
            if not made_split:
                break

        # anything created but never split is a leaf
        for nd in np.nonzero((cnts > 0) & (feature[t] == -2))[0].tolist():
            feature[t, nd] = -1
            value[t, nd] = sums[nd] / cnts[nd]

        # route every row (sampled or not) and add the leaf payloads
        node = np.zeros(n, dtype=np.int32)
        for _ in range(max_depth):
            f = feature[t, node]
            active = f >= 0
            if not active.any():
                break
            b = bins[rix, np.where(active, f, 0)]
            node = np.where(active, 2 * node + 1 + (b > split_bin[t, node]), node)
        pred += learning_rate * value[t, node]
        err = y - pred
        curve[t] = float(np.cumsum(err * err)[-1]) / n
