# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Jit-compiled direct convolution and pooling loops.

Inputs are NCHW arrays that are already zero padded. Output buffers are
allocated by the caller with the dtype of the inputs, so 64-bit inputs give
64-bit results.
"""
from numba import njit


@njit(cache=True)
def conv2d_forward(x, w, b, stride, out):
    n, c, _, _ = x.shape
    f, _, k, _ = w.shape
    _, _, oh, ow = out.shape
    for i in range(n):
        for o in range(f):
            for r in range(oh):
                for s in range(ow):
                    acc = b[o]
                    r0 = r * stride
                    s0 = s * stride
                    for ch in range(c):
                        for u in range(k):
                            for v in range(k):
                                acc += x[i, ch, r0 + u, s0 + v] * w[o, ch, u, v]
                    out[i, o, r, s] = acc


@njit(cache=True)
def conv2d_backward(x, w, gout, stride, gx, gw, gb):
    n, c, _, _ = x.shape
    f, _, k, _ = w.shape
    _, _, oh, ow = gout.shape
    for i in range(n):
        for o in range(f):
            for r in range(oh):
                for s in range(ow):
                    g = gout[i, o, r, s]
                    if g == 0.0:
                        continue
                    gb[o] += g
                    r0 = r * stride
                    s0 = s * stride
                    for ch in range(c):
                        for u in range(k):
                            for v in range(k):
                                gw[o, ch, u, v] += g * x[i, ch, r0 + u, s0 + v]
                                gx[i, ch, r0 + u, s0 + v] += g * w[o, ch, u, v]


@njit(cache=True)
def maxpool2d_forward(x, size, out, arg):
    n, c, _, _ = x.shape
    _, _, oh, ow = out.shape
    for i in range(n):
        for ch in range(c):
            for r in range(oh):
                for s in range(ow):
                    br = r * size
                    bs = s * size
                    best = x[i, ch, br, bs]
                    for u in range(size):
                        for v in range(size):
                            val = x[i, ch, r * size + u, s * size + v]
                            if val > best:
                                best = val
                                br = r * size + u
                                bs = s * size + v
                    out[i, ch, r, s] = best
                    arg[i, ch, r, s, 0] = br
                    arg[i, ch, r, s, 1] = bs


@njit(cache=True)
def maxpool2d_backward(gout, arg, gx):
    n, c, oh, ow = gout.shape
    for i in range(n):
        for ch in range(c):
            for r in range(oh):
                for s in range(ow):
                    gx[i, ch, arg[i, ch, r, s, 0], arg[i, ch, r, s, 1]] += gout[i, ch, r, s]
