# cython: boundscheck=False, wraparound=False, cdivision=True
"""Direct-loop convolution kernels.

All functions take a pre-padded input so the loops never branch on bounds.
The 1D kernels are channels-last with the innermost loop over output
channels.  The 2D kernels, which dominate the training cost, instead take
channels-first arrays (the Python wrapper transposes): their innermost
loops then run unit-stride along the width axis, which is what lets the
compiler vectorize them.
"""


def conv1d_forward(double[:, ::1] xp, double[:, :, ::1] w, double[::1] b,
                   double[:, ::1] out):
    cdef Py_ssize_t L = out.shape[0], co = out.shape[1]
    cdef Py_ssize_t k = w.shape[0], ci = w.shape[1]
    cdef Py_ssize_t i, u, c, o
    cdef double xv
    with nogil:
        for i in range(L):
            for o in range(co):
                out[i, o] = b[o]
            for u in range(k):
                for c in range(ci):
                    xv = xp[i + u, c]
                    for o in range(co):
                        out[i, o] += w[u, c, o] * xv


def conv1d_grad_weights(double[:, ::1] xp, double[:, ::1] gy,
                        double[:, :, ::1] gw):
    cdef Py_ssize_t L = gy.shape[0], co = gy.shape[1]
    cdef Py_ssize_t k = gw.shape[0], ci = gw.shape[1]
    cdef Py_ssize_t i, u, c, o
    cdef double xv
    with nogil:
        for i in range(L):
            for u in range(k):
                for c in range(ci):
                    xv = xp[i + u, c]
                    for o in range(co):
                        gw[u, c, o] += xv * gy[i, o]


def conv2d_forward(double[:, :, ::1] xp, double[:, :, :, ::1] w, double[::1] b,
                   double[:, :, ::1] out):
    # xp is (c_in, Hp, Wp), w is (c_out, c_in, kh, kw), out is (c_out, H, W)
    cdef Py_ssize_t co = out.shape[0], H = out.shape[1], W = out.shape[2]
    cdef Py_ssize_t ci = w.shape[1], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t o, c, i, u, v, j
    cdef double wv, w0, w1, w2, w3, w4
    with nogil:
        for o in range(co):
            for i in range(H):
                for j in range(W):
                    out[o, i, j] = b[o]
            for c in range(ci):
                for i in range(H):
                    for u in range(kh):
                        if kw == 5:
                            # stencil form: five taps per pass over the row
                            w0 = w[o, c, u, 0]
                            w1 = w[o, c, u, 1]
                            w2 = w[o, c, u, 2]
                            w3 = w[o, c, u, 3]
                            w4 = w[o, c, u, 4]
                            for j in range(W):
                                out[o, i, j] += (
                                    w0 * xp[c, i + u, j]
                                    + w1 * xp[c, i + u, j + 1]
                                    + w2 * xp[c, i + u, j + 2]
                                    + w3 * xp[c, i + u, j + 3]
                                    + w4 * xp[c, i + u, j + 4]
                                )
                        else:
                            for v in range(kw):
                                wv = w[o, c, u, v]
                                for j in range(W):
                                    out[o, i, j] += wv * xp[c, i + u, j + v]


def conv2d_grad_weights(double[:, :, ::1] xp, double[:, :, ::1] gy,
                        double[:, :, :, ::1] gw):
    # xp is (c_in, Hp, Wp), gy is (c_out, H, W), gw is (c_out, c_in, kh, kw)
    cdef Py_ssize_t co = gy.shape[0], H = gy.shape[1], W = gy.shape[2]
    cdef Py_ssize_t ci = gw.shape[1], kh = gw.shape[2], kw = gw.shape[3]
    cdef Py_ssize_t o, c, i, u, v, j
    cdef double acc, g, a0, a1, a2, a3, a4
    with nogil:
        for o in range(co):
            for c in range(ci):
                for u in range(kh):
                    if kw == 5:
                        a0 = a1 = a2 = a3 = a4 = 0.0
                        for i in range(H):
                            for j in range(W):
                                g = gy[o, i, j]
                                a0 += g * xp[c, i + u, j]
                                a1 += g * xp[c, i + u, j + 1]
                                a2 += g * xp[c, i + u, j + 2]
                                a3 += g * xp[c, i + u, j + 3]
                                a4 += g * xp[c, i + u, j + 4]
                        gw[o, c, u, 0] += a0
                        gw[o, c, u, 1] += a1
                        gw[o, c, u, 2] += a2
                        gw[o, c, u, 3] += a3
                        gw[o, c, u, 4] += a4
                    else:
                        for v in range(kw):
                            acc = 0.0
                            for i in range(H):
                                for j in range(W):
                                    acc += xp[c, i + u, j + v] * gy[o, i, j]
                            gw[o, c, u, v] += acc
