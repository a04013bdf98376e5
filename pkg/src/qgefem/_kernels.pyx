# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled element kernel for the quadratic (trilinear) term."""
cimport cython

ctypedef long long index_t


def assemble_quadratic(const double[:, :, :, ::1] qsym,
                       const index_t[:, ::1] cell_map,
                       const index_t[:, :, ::1] pos,
                       const double[::1] psi,
                       double[::1] data,
                       double[::1] res):
    """Accumulate the Jacobian values into ``data`` and the residual into ``res``.

    ``qsym[e, i, j, m]`` is the symmetrised element tensor, so that the element
    Jacobian is ``J_ij = sum_m qsym[e, i, j, m] * psi_m`` and the residual is
    ``J psi / 2``.  Negative entries of ``cell_map`` / ``pos`` are skipped.
    """
    cdef Py_ssize_t ne = qsym.shape[0]
    cdef Py_ssize_t nl = qsym.shape[1]
    cdef Py_ssize_t e, i, j, m
    cdef index_t g, p
    cdef double acc, ri
    cdef double pe[64]
    if nl > 64:
        raise ValueError("element too large for the compiled kernel")
    with nogil:
        for e in range(ne):
            for m in range(nl):
                g = cell_map[e, m]
                pe[m] = psi[g] if g >= 0 else 0.0
            for i in range(nl):
                ri = 0.0
                for j in range(nl):
                    acc = 0.0
                    for m in range(nl):
                        acc = acc + qsym[e, i, j, m] * pe[m]
                    p = pos[e, i, j]
                    if p >= 0:
                        data[p] += acc
                    ri = ri + acc * pe[j]
                g = cell_map[e, i]
                if g >= 0:
                    res[g] += 0.5 * ri
