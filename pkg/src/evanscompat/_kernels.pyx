# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled orbit kernel for inflation column symmetries."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _find(cnp.int64_t[::1] parent, Py_ssize_t j) noexcept nogil:
    cdef Py_ssize_t root = j, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[j] != root:
        nxt = parent[j]
        parent[j] = root
        j = nxt
    return root


def orbit_representatives(cnp.int64_t[::1] radices, cnp.int64_t[:, ::1] perms,
                          cnp.int64_t[:, :, ::1] adm):
    """Smallest column index in each orbit, for every column.

    ``perms[g, k]`` is the new position of digit ``k`` under symmetry ``g``;
    the symmetry applies to a column only if ``digit[adm[g, t, 0]] ==
    digit[adm[g, t, 1]]`` for every ``t``.
    """
    cdef Py_ssize_t D = radices.shape[0], G = perms.shape[0], T = adm.shape[1]
    cdef Py_ssize_t N = 1, j, g, k, t, img, rj, ri, rem
    for k in range(D):
        N *= radices[k]
    cdef cnp.int64_t[::1] stride = np.empty(D, dtype=np.int64)
    rem = 1
    for k in range(D - 1, -1, -1):
        stride[k] = rem
        rem *= radices[k]
    parent_arr = np.arange(N, dtype=np.int64)
    cdef cnp.int64_t[::1] parent = parent_arr
    cdef cnp.int64_t[::1] digit = np.empty(D, dtype=np.int64)
    cdef bint ok
    with nogil:
        for j in range(N):
            rem = j
            for k in range(D):
                digit[k] = rem // stride[k]
                rem = rem - digit[k] * stride[k]
            for g in range(G):
                ok = True
                for t in range(T):
                    if digit[adm[g, t, 0]] != digit[adm[g, t, 1]]:
                        ok = False
                        break
                if not ok:
                    continue
                img = 0
                for k in range(D):
                    img += digit[k] * stride[perms[g, k]]
                if img == j:
                    continue
                rj = _find(parent, j)
                ri = _find(parent, img)
                if rj < ri:
                    parent[ri] = rj
                elif ri < rj:
                    parent[rj] = ri
        for j in range(N):
            parent[j] = _find(parent, j)
    return parent_arr
