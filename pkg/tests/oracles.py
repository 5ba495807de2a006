"""Independent reference implementations used by the tests.

These use explicit matrix inverses and element-by-element loops on purpose;
they share no code with the package beyond plain numpy.
"""

import math

import numpy as np


def se(a, b, ls, os):
    a, b, ls = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (a, b, ls))
    return os * math.exp(-0.5 * sum(((ai - bi) / li) ** 2 for ai, bi, li in zip(a, b, ls)))


def gram(A, B, ls, os):
    return np.array([[se(a, b, ls, os) for b in B] for a in A])


def dense_predict(X, y, x, ls, os, noise):
    """Posterior mean and noisy-observation variance via a full matrix inverse."""
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    Kinv = np.linalg.inv(gram(X, X, ls, os) + noise * np.eye(len(y)))
    k = gram(X, [x], ls, os)[:, 0]
    return float(k @ Kinv @ y), float(se(x, x, ls, os) - k @ Kinv @ k + noise)


def dense_obs_var(X, x, ls, os, noise):
    """sigma_y^2(x | inputs X) by direct inversion; observation values are irrelevant."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return os + noise
    X = X.reshape(X.shape[0], -1)
    Kinv = np.linalg.inv(gram(X, X, ls, os) + noise * np.eye(X.shape[0]))
    k = gram(X, [x], ls, os)[:, 0]
    return float(se(x, x, ls, os) - k @ Kinv @ k + noise)


def dense_joint_cov(X, B, ls, os, noise):
    """Noisy predictive covariance of a batch B given inputs X."""
    B = np.asarray(B, dtype=float)
    Kbb = gram(B, B, ls, os) + noise * np.eye(len(B))
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return Kbb
    X = X.reshape(X.shape[0], -1)
    Kinv = np.linalg.inv(gram(X, X, ls, os) + noise * np.eye(X.shape[0]))
    Kxb = gram(X, B, ls, os)
    return Kbb - Kxb.T @ Kinv @ Kxb


def two_step_les(X, Qs, x, ls, os, noise):
    """Entropy difference via two successive conditionings.

    First condition the prior on X, then condition that posterior on each
    virtual set Q^l with a second explicit Gaussian update.
    """
    X = np.asarray(X, dtype=float).reshape(-1, np.size(x))
    d = np.size(x)

    def post_cov(A, B):
        K = gram(A, B, ls, os)
        if X.shape[0] == 0:
            return K
        Kinv = np.linalg.inv(gram(X, X, ls, os) + noise * np.eye(X.shape[0]))
        return K - gram(A, X, ls, os) @ Kinv @ gram(X, B, ls, os)

    x = np.atleast_1d(np.asarray(x, dtype=float))
    base = post_cov([x], [x])[0, 0] + noise
    h0 = 0.5 * math.log(2 * math.pi * math.e * base)
    hs = []
    for Q in Qs:
        Q = np.asarray(Q, dtype=float).reshape(-1, d)
        if Q.shape[0] == 0:
            hs.append(h0)
            continue
        C = post_cov(Q, Q) + noise * np.eye(Q.shape[0])
        c = post_cov(Q, [x])[:, 0]
        v = base - c @ np.linalg.inv(C) @ c
        hs.append(0.5 * math.log(2 * math.pi * math.e * v))
    return h0 - float(np.mean(hs))


def mvn_logpdf(y, S):
    y = np.asarray(y, dtype=float)
    n = y.size
    return float(-0.5 * y @ np.linalg.inv(S) @ y - 0.5 * math.log(np.linalg.det(S)) - 0.5 * n * math.log(2 * math.pi))


def path_value_loop(path, x):
    """Evaluate sum_i w_i amp cos(omega_i . (x / l) + b_i) + sum_j v_j k(x, x_j) term by term."""
    b = path.basis
    total = 0.0
    for i in range(b.num_features):
        arg = b.phases[i] + sum(b.frequencies[i, k] * x[k] / b.lengthscales[k] for k in range(len(x)))
        total += path.weights[i] * b.amp * math.cos(arg)
    hp = path.hyperparams
    for j in range(path.correction_coeffs.size):
        total += path.correction_coeffs[j] * se(x, path.correction_inputs[j], hp.lengthscales, hp.output_scale)
    return total


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def star_discrepancy_grid(points, grid=64):
    """max over anchored boxes [0, u) on a grid of |fraction inside - volume| (2-d)."""
    pts = np.asarray(points)
    n = len(pts)
    worst = 0.0
    for a in np.arange(1, grid + 1) / grid:
        inside_a = pts[:, 0] < a
        for b in np.arange(1, grid + 1) / grid:
            frac = np.count_nonzero(inside_a & (pts[:, 1] < b)) / n
            worst = max(worst, abs(frac - a * b))
    return worst


def mp_obs_var(X, x, ls, os, noise, dps=40):
    """sigma_y^2(x | inputs X) in extended precision."""
    import mpmath as mp

    with mp.workdps(dps):
        ls = [mp.mpf(float(v)) for v in np.atleast_1d(ls)]
        os, s = mp.mpf(float(os)), mp.mpf(float(noise))

        def k(a, b):
            return os * mp.exp(-sum((mp.mpf(float(ai)) - mp.mpf(float(bi))) ** 2 / li**2
                                    for ai, bi, li in zip(a, b, ls)) / 2)

        X = list(np.asarray(X, dtype=float).reshape(-1, len(ls)))
        prior = k(x, x) + s
        if not X:
            return prior
        K = mp.matrix(len(X), len(X))
        for i, a in enumerate(X):
            for j, b in enumerate(X):
                K[i, j] = k(a, b) + (s if i == j else 0)
        kx = mp.matrix([k(a, x) for a in X])
        return prior - (kx.T * mp.lu_solve(K, kx))[0]


def mp_les(X, Qs, x, ls, os, noise):
    """Entropy difference with every variance computed in extended precision."""
    import mpmath as mp

    X = np.asarray(X, dtype=float).reshape(-1, np.size(x))
    base = mp_obs_var(X, x, ls, os, noise)
    terms = [mp.log(mp_obs_var(np.vstack([X, np.reshape(Q, (-1, np.size(x)))]), x, ls, os, noise)) for Q in Qs]
    return float(mp.log(base) / 2 - mp.fsum(terms) / (2 * len(terms)))


def mp_two_step_les(X, Qs, x, ls, os, noise, dps=40):
    """Two successive Gaussian conditionings (data, then virtual set) in extended precision."""
    import mpmath as mp

    with mp.workdps(dps):
        d = np.size(x)
        ls = [mp.mpf(float(v)) for v in np.atleast_1d(ls)]
        os, s = mp.mpf(float(os)), mp.mpf(float(noise))

        def k(a, b):
            return os * mp.exp(-sum((mp.mpf(float(ai)) - mp.mpf(float(bi))) ** 2 / li**2
                                    for ai, bi, li in zip(a, b, ls)) / 2)

        X = list(np.asarray(X, dtype=float).reshape(-1, d))
        if X:
            K = mp.matrix(len(X), len(X))
            for i, a in enumerate(X):
                for j, b in enumerate(X):
                    K[i, j] = k(a, b) + (s if i == j else 0)
            Kinv = mp.inverse(K)

        def post(a, b):
            c = k(a, b)
            if X:
                ka = mp.matrix([k(a, xi) for xi in X])
                kb = mp.matrix([k(xi, b) for xi in X])
                c -= (ka.T * Kinv * kb)[0]
            return c

        x = np.atleast_1d(np.asarray(x, dtype=float))
        base = post(x, x) + s
        terms = []
        for Q in Qs:
            Q = list(np.asarray(Q, dtype=float).reshape(-1, d))
            if not Q:
                terms.append(mp.log(base))
                continue
            C = mp.matrix(len(Q), len(Q))
            for i, a in enumerate(Q):
                for j, b in enumerate(Q):
                    C[i, j] = post(a, b) + (s if i == j else 0)
            c = mp.matrix([post(q, x) for q in Q])
            terms.append(mp.log(base - (c.T * mp.lu_solve(C, c))[0]))
        return float(mp.log(base) / 2 - mp.fsum(terms) / (2 * len(terms)))
