"""Compiled multiplicative-update loop (same arithmetic as ``engine._run``)."""

import math

import numpy as np
from numba import njit

FLOOR = 1e-16


@njit(cache=True)
def _floor_mean(V, WH):
    # a zero mean is only degenerate where the count is positive
    floored = 0
    for i in range(WH.shape[0]):
        for j in range(WH.shape[1]):
            if WH[i, j] <= 0.0:
                WH[i, j] = 0.0
                if V[i, j] > 0.0:
                    WH[i, j] = FLOOR
                    floored += 1
    return floored


@njit(cache=True)
def _floor(A):
    floored = 0
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            if A[i, j] <= 0.0:
                A[i, j] = FLOOR
                floored += 1
    return floored


@njit(cache=True)
def _objective(V, WH, alpha, poisson):
    # Kahan-compensated so sweep-to-sweep differences are not swamped by
    # summation error
    total = 0.0
    comp = 0.0
    N, M = V.shape
    for n in range(N):
        a = alpha[n]
        nb = not (poisson or math.isinf(a))
        for m in range(M):
            v = V[n, m]
            mu = WH[n, m]
            t = 0.0
            if mu == 0.0:
                continue
            if v > 0.0:
                t = v * math.log(v / mu)
            if nb:
                t -= (a + v) * math.log1p((v - mu) / (a + mu))
            else:
                t += mu - v
            y = t - comp
            s = total + y
            comp = (s - total) - y
            total = s
    return total


@njit(cache=True)
def _ratios(V, WH, alpha, poisson, R, D):
    N, M = V.shape
    for n in range(N):
        a = alpha[n]
        nb = not (poisson or math.isinf(a))
        for m in range(M):
            mu = WH[n, m]
            if mu == 0.0:
                R[n, m] = 0.0
                D[n, m] = 1.0
                continue
            R[n, m] = V[n, m] / mu
            D[n, m] = 1.0 + (V[n, m] - mu) / (mu + a) if nb else 1.0


@njit(cache=True)
def mu_loop(V, W, H, alpha, poisson, eps, relative, max_iters):
    N, M = V.shape
    R = np.empty((N, M))
    D = np.empty((N, M))
    trace = np.empty(max_iters + 1)
    WH = np.dot(W, H)
    floored = _floor_mean(V, WH)
    trace[0] = _objective(V, WH, alpha, poisson)
    it = 0
    converged = False
    for it in range(1, max_iters + 1):
        _ratios(V, WH, alpha, poisson, R, D)
        den = np.dot(D, H.T)
        floored += _floor(den)
        W = W * np.dot(R, H.T) / den
        WH = np.dot(W, H)
        floored += _floor_mean(V, WH)

        _ratios(V, WH, alpha, poisson, R, D)
        den = np.dot(W.T, D)
        floored += _floor(den)
        H = H * np.dot(W.T, R) / den
        WH = np.dot(W, H)
        floored += _floor_mean(V, WH)

        trace[it] = _objective(V, WH, alpha, poisson)
        d = abs(trace[it - 1] - trace[it])
        tol = eps * (1.0 + abs(trace[it - 1])) if relative else eps
        if d < tol:
            converged = True
            break
    return W, H, trace[: it + 1].copy(), it, converged, floored
