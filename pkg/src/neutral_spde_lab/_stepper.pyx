# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping kernel; see ``_stepper_py.advance`` for the contract."""


cdef inline double _dot(const double *a, const double *b, Py_ssize_t n) noexcept nogil:
    # four independent accumulators let the compiler pipeline the loop
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t j = 0
    while j + 4 <= n:
        s0 += a[j] * b[j]
        s1 += a[j + 1] * b[j + 1]
        s2 += a[j + 2] * b[j + 2]
        s3 += a[j + 3] * b[j + 3]
        j += 4
    while j < n:
        s0 += a[j] * b[j]
        j += 1
    return (s0 + s1) + (s2 + s3)


def advance(double[:, :, ::1] hist, Py_ssize_t pos, double[:, ::1] z,
            const double[:, ::1] dW, const double[::1] wg, const double[::1] wq,
            const double[::1] a, const double[::1] b, double h, double alpha1,
            double c_shift, bint semi, Py_ssize_t stride,
            double[:, :, ::1] y_out, double[:, :, ::1] z_out):
    cdef Py_ssize_t R = hist.shape[0]
    cdef Py_ssize_t K = hist.shape[1]
    cdef Py_ssize_t M = wg.shape[0]
    cdef Py_ssize_t N = M - 1
    cdef Py_ssize_t nsteps = dW.shape[1]
    cdef Py_ssize_t i, s, k, j, p = pos, o
    cdef double G, S, zn, yn, dw, ak, yt
    cdef double g_end = wg[N]
    cdef bint use_g = False
    cdef bint use_q = False
    cdef double *w
    for j in range(M):
        if wg[j] != 0.0:
            use_g = True
        if wq[j] != 0.0:
            use_q = True
    with nogil:
        for i in range(R):
            p = pos
            o = 0
            for s in range(nsteps):
                dw = dW[i, s]
                for k in range(K):
                    w = &hist[i, k, p]
                    ak = a[k]
                    yt = w[N]
                    G = c_shift * w[0]
                    S = alpha1 * w[1]
                    if use_q and use_g:
                        G += wq[N] * w[N] + _dot(&wq[0], w, N)
                        S += _dot(&wg[0], w + 1, N)
                    elif use_q:
                        G += _dot(&wq[0], w, M)
                    elif use_g:
                        S += _dot(&wg[0], w + 1, N)
                    if semi:
                        yn = (z[i, k] - h * ak * G + b[k] * dw + S) / (1.0 - g_end + h * ak)
                        zn = (1.0 - g_end) * yn - S
                    else:
                        zn = z[i, k] + h * (-ak * yt - ak * G) + b[k] * dw
                        yn = (zn + S) / (1.0 - g_end)
                    z[i, k] = zn
                    hist[i, k, p] = yn
                    hist[i, k, p + M] = yn
                p += 1
                if p == M:
                    p = 0
                if (s + 1) % stride == 0:
                    for k in range(K):
                        y_out[i, o, k] = hist[i, k, p + N]
                        z_out[i, o, k] = z[i, k]
                    o += 1
    return p
