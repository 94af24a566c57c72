"""Slow reference implementations used only by the tests."""

import math

import numpy as np


def naive_conv2d(x, w, b, stride=1, pad=0, groups=1):
    n, c, h, wd = x.shape
    k, cg, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad : pad + h, pad : pad + wd] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, k, ho, wo))
    kpg = k // groups
    for b_ in range(n):
        for o in range(k):
            g = o // kpg
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(cg):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += xp[b_, g * cg + ci, i * stride + di, j * stride + dj] * w[o, ci, di, dj]
                    out[b_, o, i, j] = acc + (b[o] if b is not None else 0.0)
    return out


def naive_dense(x, w, b):
    n, d = x.shape
    k = w.shape[0]
    out = np.zeros((n, k))
    for i in range(n):
        for o in range(k):
            out[i, o] = sum(x[i, f] * w[o, f] for f in range(d)) + b[o]
    return out


def naive_maxpool(x, k, stride):
    n, c, h, w = x.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    out = np.zeros((n, c, ho, wo))
    for a in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    out[a, ch, i, j] = max(
                        x[a, ch, i * stride + di, j * stride + dj] for di in range(k) for dj in range(k)
                    )
    return out


def naive_cross_entropy(logits, labels):
    total = 0.0
    for row, y in zip(logits, labels):
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        total += lse - row[y]
    return total / len(labels)
