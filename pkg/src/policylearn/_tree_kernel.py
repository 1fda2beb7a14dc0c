"""Numba kernels for exhaustive depth-limited policy-tree search.

The searched objective is the total selected score: for a candidate tree
T, ``sum_i gamma[i, T(x_i)]``. Candidate thresholds at a node are the
midpoints between consecutive distinct sorted feature values within that
node, thinned to every ``split_step``-th. A split is admissible when it
routes at least ``min_node`` rows to each child.

Tie-breaking is fixed so parallel and serial runs agree: a node starts as
its best leaf and a split is adopted only when strictly better, features
are scanned in ascending index order and thresholds in ascending value
order, and leaf arms resolve ties to the lowest arm id.

``order`` carries the node's row ids sorted per feature; children inherit
sorted order by stable partition, so nothing is ever re-sorted.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _partition(X, order, j, thr, n_left):
    """Stable split of every per-feature order by ``x[:, j] <= thr``."""
    p, m = order.shape
    left = np.empty((p, n_left), dtype=np.int64)
    right = np.empty((p, m - n_left), dtype=np.int64)
    for f in range(p):
        li = 0
        ri = 0
        for t in range(m):
            row = order[f, t]
            if X[row, j] <= thr:
                left[f, li] = row
                li += 1
            else:
                right[f, ri] = row
                ri += 1
    return left, right


@njit(cache=True, nogil=True)
def _search_score(X, gamma, order, depth, split_step, min_node, counter):
    """Best achievable total score for trees of at most ``depth`` splits."""
    p, m = order.shape
    D = gamma.shape[1]

    total = np.zeros(D, dtype=np.float64)
    for i in range(m):
        row = order[0, i]
        for a in range(D):
            total[a] += gamma[row, a]
    leaf_score = total[0]
    for a in range(1, D):
        if total[a] > leaf_score:
            leaf_score = total[a]
    counter[0] += 1

    if depth == 0 or m < 2 * min_node or m < 2:
        return leaf_score

    best = leaf_score
    if depth == 1:
        left = np.zeros(D, dtype=np.float64)
        for j in range(p):
            for a in range(D):
                left[a] = 0.0
            cand = 0
            for i in range(1, m):
                prev = order[j, i - 1]
                for a in range(D):
                    left[a] += gamma[prev, a]
                xprev = X[prev, j]
                xcur = X[order[j, i], j]
                if xprev < xcur:
                    take = (cand % split_step) == 0
                    cand += 1
                    if take and i >= min_node and (m - i) >= min_node:
                        counter[0] += 1
                        bl = left[0]
                        for a in range(1, D):
                            if left[a] > bl:
                                bl = left[a]
                        br = total[0] - left[0]
                        for a in range(1, D):
                            v = total[a] - left[a]
                            if v > br:
                                br = v
                        s = bl + br
                        if s > best:
                            best = s
    else:
        for j in range(p):
            cand = 0
            for i in range(1, m):
                prev = order[j, i - 1]
                xprev = X[prev, j]
                xcur = X[order[j, i], j]
                if xprev < xcur:
                    take = (cand % split_step) == 0
                    cand += 1
                    if take and i >= min_node and (m - i) >= min_node:
                        counter[0] += 1
                        thr = 0.5 * (xprev + xcur)
                        left_o, right_o = _partition(X, order, j, thr, i)
                        s = _search_score(X, gamma, left_o, depth - 1,
                                          split_step, min_node, counter)
                        s += _search_score(X, gamma, right_o, depth - 1,
                                           split_step, min_node, counter)
                        if s > best:
                            best = s
    return best


@njit(cache=True, nogil=True)
def _build(X, gamma, order, depth, split_step, min_node, counter,
           node_feature, node_threshold, node_arm, pos):
    """Like ``_search_score`` but records the argmax tree into heap arrays.

    ``node_feature[pos] == -1`` marks a leaf whose arm is
    ``node_arm[pos]``; children of node ``pos`` live at ``2*pos + 1`` and
    ``2*pos + 2``.
    """
    p, m = order.shape
    D = gamma.shape[1]

    total = np.zeros(D, dtype=np.float64)
    for i in range(m):
        row = order[0, i]
        for a in range(D):
            total[a] += gamma[row, a]
    leaf_arm = 0
    leaf_score = total[0]
    for a in range(1, D):
        if total[a] > leaf_score:
            leaf_score = total[a]
            leaf_arm = a
    counter[0] += 1
    node_feature[pos] = -1
    node_threshold[pos] = 0.0
    node_arm[pos] = leaf_arm

    if depth == 0 or m < 2 * min_node or m < 2:
        return leaf_score

    best = leaf_score
    best_j = -1
    best_thr = 0.0
    best_nl = 0
    if depth == 1:
        left = np.zeros(D, dtype=np.float64)
        for j in range(p):
            for a in range(D):
                left[a] = 0.0
            cand = 0
            for i in range(1, m):
                prev = order[j, i - 1]
                for a in range(D):
                    left[a] += gamma[prev, a]
                xprev = X[prev, j]
                xcur = X[order[j, i], j]
                if xprev < xcur:
                    take = (cand % split_step) == 0
                    cand += 1
                    if take and i >= min_node and (m - i) >= min_node:
                        counter[0] += 1
                        bl = left[0]
                        for a in range(1, D):
                            if left[a] > bl:
                                bl = left[a]
                        br = total[0] - left[0]
                        for a in range(1, D):
                            v = total[a] - left[a]
                            if v > br:
                                br = v
                        s = bl + br
                        if s > best:
                            best = s
                            best_j = j
                            best_thr = 0.5 * (xprev + xcur)
                            best_nl = i
    else:
        for j in range(p):
            cand = 0
            for i in range(1, m):
                prev = order[j, i - 1]
                xprev = X[prev, j]
                xcur = X[order[j, i], j]
                if xprev < xcur:
                    take = (cand % split_step) == 0
                    cand += 1
                    if take and i >= min_node and (m - i) >= min_node:
                        counter[0] += 1
                        thr = 0.5 * (xprev + xcur)
                        left_o, right_o = _partition(X, order, j, thr, i)
                        s = _search_score(X, gamma, left_o, depth - 1,
                                          split_step, min_node, counter)
                        s += _search_score(X, gamma, right_o, depth - 1,
                                           split_step, min_node, counter)
                        if s > best:
                            best = s
                            best_j = j
                            best_thr = thr
                            best_nl = i

    if best_j == -1:
        return leaf_score

    node_feature[pos] = best_j
    node_threshold[pos] = best_thr
    node_arm[pos] = -1
    left_o, right_o = _partition(X, order, best_j, best_thr, best_nl)
    sl = _build(X, gamma, left_o, depth - 1, split_step, min_node, counter,
                node_feature, node_threshold, node_arm, 2 * pos + 1)
    sr = _build(X, gamma, right_o, depth - 1, split_step, min_node, counter,
                node_feature, node_threshold, node_arm, 2 * pos + 2)
    return sl + sr
