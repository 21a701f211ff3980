"""Pure Python/numpy versions of the hot kernels.

Signatures and results match ``_ckernels`` exactly; the compiled module is
preferred when it imports.
"""

import numpy as np


def walk_counts(pred_ptr, pred_idx, starts, uniforms, counts):
    """Run one block of backward walks and add per-vertex visit counts.

    Walk ``i`` starts at ``starts[i]`` and at step ``s`` moves to in-neighbor
    number ``floor(uniforms[i, s] * indeg)`` of its current vertex, stopping
    at a vertex without in-edges. Acyclicity guarantees at most one visit
    per vertex per walk.
    """
    n = counts.shape[0]
    indeg = np.diff(pred_ptr)
    cur = np.array(starts, dtype=np.int64)
    counts += np.bincount(cur, minlength=n)
    active = np.flatnonzero(indeg[cur] > 0)
    step = 0
    while active.size:
        c = cur[active]
        d = indeg[c]
        j = np.minimum((uniforms[active, step] * d).astype(np.int64), d - 1)
        nxt = pred_idx[pred_ptr[c] + j]
        cur[active] = nxt
        counts += np.bincount(nxt, minlength=n)
        active = active[indeg[nxt] > 0]
        step += 1


def _has_edge(ptr, idx, a, b):
    lo, hi = ptr[a], ptr[a + 1]
    while lo < hi:
        mid = (lo + hi) >> 1
        if idx[mid] < b:
            lo = mid + 1
        else:
            hi = mid
    return lo < ptr[a + 1] and idx[lo] == b


def match_pattern(plan, target):
    """Backtracking search for one label-preserving monomorphism.

    ``plan`` = (labels, anchor_pos, anchor_dir, chk_ptr, chk_pos, chk_dir,
    min_out, min_in), all indexed by matching position. ``target`` =
    (labels, succ_ptr, succ_idx, pred_ptr, pred_idx, lab_ptr, lab_idx).
    """
    plab, apos, adir, cptr, cpos, cdir, pout, pin = (list(map(int, a)) for a in plan)
    glab, sptr, sidx, pptr, pidx, lptr, lidx = target
    glab = glab.tolist()
    sptr, sidx, pptr, pidx = sptr.tolist(), sidx.tolist(), pptr.tolist(), pidx.tolist()
    k = len(plab)
    if k == 0:
        return True

    def candidates(i, mapping):
        if apos[i] < 0:
            lab = plab[i]
            return lidx[lptr[lab]:lptr[lab + 1]].tolist()
        x = mapping[apos[i]]
        if adir[i] == 0:
            return sidx[sptr[x]:sptr[x + 1]]
        return pidx[pptr[x]:pptr[x + 1]]

    def ok(i, y, mapping):
        if glab[y] != plab[i]:
            return False
        if sptr[y + 1] - sptr[y] < pout[i] or pptr[y + 1] - pptr[y] < pin[i]:
            return False
        for j in range(i):
            if mapping[j] == y:
                return False
        for t in range(cptr[i], cptr[i + 1]):
            x = mapping[cpos[t]]
            if cdir[t] == 0:
                if not _has_edge(sptr, sidx, x, y):
                    return False
            elif not _has_edge(sptr, sidx, y, x):
                return False
        return True

    mapping = [-1] * k
    stack = [iter(candidates(0, mapping))]
    while stack:
        i = len(stack) - 1
        for y in stack[-1]:
            if ok(i, y, mapping):
                mapping[i] = y
                if i + 1 == k:
                    return True
                stack.append(iter(candidates(i + 1, mapping)))
                break
        else:
            stack.pop()
            mapping[i] = -1
    return False
