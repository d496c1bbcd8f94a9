"""Slow, loop-based reference implementations used only by the tests.

Nothing here imports the package's numerical routines; the network, its
derivatives and the discrete loss are rewritten with scalar math.
"""
import math

import numpy as np


def net_value(subnets, x):
    total = 0.0
    for W1, b1, W2, b2, W3, b3 in subnets:
        h1 = [math.tanh(sum(W1[i][k] * x[k] for k in range(len(x))) + b1[i])
              for i in range(len(b1))]
        h2 = [math.tanh(sum(W2[j][i] * h1[i] for i in range(len(h1))) + b2[j])
              for j in range(len(b2))]
        total += sum(W3[j] * h2[j] for j in range(len(h2))) + b3
    return total


def net_grad_x(subnets, x):
    """Chain rule written out per coordinate."""
    d = len(x)
    g = [0.0] * d
    for W1, b1, W2, b2, W3, b3 in subnets:
        z1 = [sum(W1[i][k] * x[k] for k in range(d)) + b1[i] for i in range(len(b1))]
        h1 = [math.tanh(v) for v in z1]
        z2 = [sum(W2[j][i] * h1[i] for i in range(len(h1))) + b2[j] for j in range(len(b2))]
        for k in range(d):
            dh1 = [(1 - h1[i] ** 2) * W1[i][k] for i in range(len(h1))]
            for j in range(len(z2)):
                dz2 = sum(W2[j][i] * dh1[i] for i in range(len(h1)))
                g[k] += W3[j] * (1 - math.tanh(z2[j]) ** 2) * dz2
    return g


def ritz_loss(subnets, bc, beta, w, f, g, X, Y, N, vol, area):
    """Discrete Ritz energy evaluated point by point."""
    interior = 0.0
    for x in X:
        u = net_value(subnets, x)
        du = net_grad_x(subnets, x)
        interior += 0.5 * sum(v * v for v in du) + 0.5 * w(x) * u * u - f(x) * u
    boundary = 0.0
    for y, nrm in zip(Y, N):
        u = net_value(subnets, y)
        if bc == "neumann":
            boundary += -g(y, nrm) * u
        else:
            boundary += (0.5 * u * u - g(y, nrm) * u) / beta
    return vol * interior / len(X) + area * boundary / len(Y)


def robin_1d_constants(f, w, beta):
    """Solve the 2x2 Robin system for u = f/w + C1 e^(kx) + C2 e^(-kx) by Cramer's rule.

    At x=0 the outward normal is -1: u - beta u' = 0; at x=1: u + beta u' = 0.
    """
    k = math.sqrt(w)
    p = f / w
    a11, a12 = 1 - beta * k, 1 + beta * k
    a21, a22 = (1 + beta * k) * math.exp(k), (1 - beta * k) * math.exp(-k)
    det = a11 * a22 - a12 * a21
    c1 = (-p * a22 + p * a12) / det
    c2 = (-a11 * p + a21 * p) / det
    return c1, c2


def l1_projection_bisect(y, radius, iters=200):
    """Soft threshold with the threshold found by bisection."""
    y = np.asarray(y, dtype=float)
    if np.abs(y).sum() <= radius:
        return y.copy()
    lo, hi = 0.0, np.abs(y).max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(np.abs(y) - mid, 0).sum() > radius:
            lo = mid
        else:
            hi = mid
    return np.sign(y) * np.maximum(np.abs(y) - hi, 0)
