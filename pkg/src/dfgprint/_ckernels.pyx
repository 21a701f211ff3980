# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: backward-walk visit counting and fragment matching.

Same contracts as ``dfgprint._pykernels``.
"""

from libc.stdint cimport int64_t
from libc.stdlib cimport malloc, free


def walk_counts(const int64_t[::1] pred_ptr, const int64_t[::1] pred_idx,
                const int64_t[::1] starts, const double[:, ::1] uniforms,
                int64_t[::1] counts):
    cdef Py_ssize_t i, step, nsteps = uniforms.shape[1]
    cdef int64_t v, d, j
    with nogil:
        for i in range(starts.shape[0]):
            v = starts[i]
            counts[v] += 1
            step = 0
            d = pred_ptr[v + 1] - pred_ptr[v]
            while d > 0 and step < nsteps:
                j = <int64_t>(uniforms[i, step] * d)
                if j >= d:
                    j = d - 1
                v = pred_idx[pred_ptr[v] + j]
                counts[v] += 1
                step += 1
                d = pred_ptr[v + 1] - pred_ptr[v]


cdef inline bint _has_edge(const int64_t[::1] ptr, const int64_t[::1] idx,
                           int64_t a, int64_t b) nogil:
    cdef int64_t lo = ptr[a], hi = ptr[a + 1], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if idx[mid] < b:
            lo = mid + 1
        else:
            hi = mid
    return lo < ptr[a + 1] and idx[lo] == b


def match_pattern(plan, target):
    cdef const int64_t[::1] plab = plan[0]
    cdef const int64_t[::1] apos = plan[1]
    cdef const int64_t[::1] adir = plan[2]
    cdef const int64_t[::1] cptr = plan[3]
    cdef const int64_t[::1] cpos = plan[4]
    cdef const int64_t[::1] cdir = plan[5]
    cdef const int64_t[::1] pout = plan[6]
    cdef const int64_t[::1] pin = plan[7]
    cdef const int64_t[::1] glab = target[0]
    cdef const int64_t[::1] sptr = target[1]
    cdef const int64_t[::1] sidx = target[2]
    cdef const int64_t[::1] pptr = target[3]
    cdef const int64_t[::1] pidx = target[4]
    cdef const int64_t[::1] lptr = target[5]
    cdef const int64_t[::1] lidx = target[6]
    cdef Py_ssize_t k = plab.shape[0]
    if k == 0:
        return True
    cdef int64_t *mapping = <int64_t *>malloc(k * sizeof(int64_t))
    cdef int64_t *cur = <int64_t *>malloc(k * sizeof(int64_t))
    cdef int64_t *end = <int64_t *>malloc(k * sizeof(int64_t))
    cdef bint found = False, good
    cdef Py_ssize_t i = 0, j, t
    cdef int64_t x, y, lab
    try:
        with nogil:
            # candidate range for position 0 comes from the label index
            lab = plab[0]
            cur[0] = lptr[lab]
            end[0] = lptr[lab + 1]
            while i >= 0:
                if cur[i] >= end[i]:
                    i -= 1
                    if i >= 0:
                        cur[i] += 1
                    continue
                if apos[i] < 0:
                    y = lidx[cur[i]]
                elif adir[i] == 0:
                    y = sidx[cur[i]]
                else:
                    y = pidx[cur[i]]
                good = glab[y] == plab[i]
                if good and (sptr[y + 1] - sptr[y] < pout[i]
                             or pptr[y + 1] - pptr[y] < pin[i]):
                    good = False
                if good:
                    for j in range(i):
                        if mapping[j] == y:
                            good = False
                            break
                if good:
                    for t in range(cptr[i], cptr[i + 1]):
                        x = mapping[cpos[t]]
                        if cdir[t] == 0:
                            if not _has_edge(sptr, sidx, x, y):
                                good = False
                                break
                        elif not _has_edge(sptr, sidx, y, x):
                            good = False
                            break
                if not good:
                    cur[i] += 1
                    continue
                mapping[i] = y
                if i + 1 == k:
                    found = True
                    break
                i += 1
                if apos[i] < 0:
                    lab = plab[i]
                    cur[i] = lptr[lab]
                    end[i] = lptr[lab + 1]
                else:
                    x = mapping[apos[i]]
                    if adir[i] == 0:
                        cur[i] = sptr[x]
                        end[i] = sptr[x + 1]
                    else:
                        cur[i] = pptr[x]
                        end[i] = pptr[x + 1]
    finally:
        free(mapping)
        free(cur)
        free(end)
    return found
