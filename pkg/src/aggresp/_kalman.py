"""Kalman prediction-error recursions for a zero-mean ARMA process.

State-space form with state dimension ``r = max(p, q + 1)``::

    alpha[t+1] = T alpha[t] + R e[t+1],   y[t] = alpha[t][0]

where ``T`` is the companion matrix with the (zero padded) AR coefficients
in its first column and ``R = (1, theta_1, ..., theta_{r-1})``.  The filter
runs with unit innovation variance; the caller scales by sigma^2.

Several series can be pushed through the same recursion at once (a response
and every design column): gains and prediction variances depend only on the
ARMA parameters, never on the data.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def filter_innovations(Y, phi, rvec, P0):
    """Return innovations ``V`` (n x m) and their variances ``F`` (n,).

    ``phi`` and ``rvec`` have length r; ``P0`` is the stationary state
    covariance for unit innovation variance.
    """
    n, m = Y.shape
    r = phi.shape[0]
    A = np.zeros((r, m))
    P = P0.copy()
    TP = np.empty((r, r))
    Pn = np.empty((r, r))
    K = np.empty(r)
    V = np.empty((n, m))
    F = np.empty(n)
    steady = False
    for t in range(n):
        f = P[0, 0]
        F[t] = f
        for j in range(m):
            V[t, j] = Y[t, j] - A[0, j]
        # gain K = T P Z' / f with Z = e_1
        for i in range(r):
            k = phi[i] * P[0, 0]
            if i + 1 < r:
                k += P[i + 1, 0]
            K[i] = k / f
        # state update a <- T a + K v
        for j in range(m):
            a0 = A[0, j]
            v = V[t, j]
            for i in range(r):
                nxt = A[i + 1, j] if i + 1 < r else 0.0
                A[i, j] = phi[i] * a0 + nxt + K[i] * v
        if steady:
            continue
        # P <- T P T' + R R' - K K' f
        for i in range(r):
            for j in range(r):
                v = phi[i] * P[0, j]
                if i + 1 < r:
                    v += P[i + 1, j]
                TP[i, j] = v
        delta = 0.0
        for i in range(r):
            for j in range(r):
                v = TP[i, 0] * phi[j]
                if j + 1 < r:
                    v += TP[i, j + 1]
                v += rvec[i] * rvec[j] - K[i] * K[j] * f
                Pn[i, j] = v
                d = abs(v - P[i, j])
                if d > delta:
                    delta = d
        for i in range(r):
            for j in range(r):
                P[i, j] = Pn[i, j]
        if delta < 1e-15:
            steady = True
    return V, F
