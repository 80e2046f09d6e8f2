"""Slow reference computations used as independent checks.

None of these share code with the package: products are explicit loops,
inverses and determinants come from Gauss-Jordan elimination in pure Python,
and H2 is evaluated densely from its trace form.
"""

import itertools
import math

import numpy as np


def naive_matmul(A, B):
    A, B = np.asarray(A, float), np.asarray(B, float)
    n, m = A.shape
    m2, p = B.shape
    assert m == m2
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            s = 0.0
            for k in range(m):
                s += A[i, k] * B[k, j]
            out[i, j] = s
    return out


def naive_covariance(B, D):
    C = naive_matmul(B, np.asarray(B).T)
    for j in range(len(D)):
        C[j, j] += D[j]
    return C


def gauss_jordan(M):
    """Inverse and determinant by elimination with partial pivoting."""
    M = [list(map(float, row)) for row in np.asarray(M, float)]
    n = len(M)
    inv = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    det = 1.0
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(M[r][col]))
        if M[piv][col] == 0.0:
            raise ZeroDivisionError("singular matrix")
        if piv != col:
            M[col], M[piv] = M[piv], M[col]
            inv[col], inv[piv] = inv[piv], inv[col]
            det = -det
        p = M[col][col]
        det *= p
        M[col] = [x / p for x in M[col]]
        inv[col] = [x / p for x in inv[col]]
        for r in range(n):
            if r != col and M[r][col] != 0.0:
                f = M[r][col]
                M[r] = [a - f * b for a, b in zip(M[r], M[col])]
                inv[r] = [a - f * b for a, b in zip(inv[r], inv[col])]
    return np.array(inv), det


def dense_log_density(y, mu, B, D):
    """-1/2 (J log 2pi + log det Sigma + r' Sigma^-1 r) with an elimination inverse."""
    Sigma = naive_covariance(B, D)
    inv, det = gauss_jordan(Sigma)
    r = np.asarray(y, float) - np.asarray(mu, float)
    quad = sum(r[a] * inv[a, b] * r[b] for a in range(len(r)) for b in range(len(r)))
    return -0.5 * (len(r) * math.log(2 * math.pi) + math.log(det) + quad)


def naive_loglik(Y, pi, comps):
    """sum_i log sum_k pi_k f_k(y_i) without log-sum-exp."""
    total = 0.0
    for y in Y:
        s = 0.0
        for p, (mu, B, D) in zip(pi, comps):
            s += p * math.exp(dense_log_density(y, mu, B, D))
        total += math.log(s)
    return total


def naive_responsibilities(Y, pi, comps):
    Z = np.zeros((len(Y), len(pi)))
    for i, y in enumerate(Y):
        dens = [p * math.exp(dense_log_density(y, mu, B, D)) for p, (mu, B, D) in zip(pi, comps)]
        Z[i] = np.array(dens) / sum(dens)
    return Z


def posterior_factor_moments(Y, w, mu, B_old, D_old):
    """Per-unit E(u|y_i) and the weighted sum of E(u u'|y_i), from a dense inverse."""
    Sigma = naive_covariance(B_old, D_old)
    inv, _ = gauss_jordan(Sigma)
    Gamma = np.asarray(B_old).T @ inv
    V = np.eye(Gamma.shape[0]) - Gamma @ B_old
    Eu = np.array([Gamma @ (y - mu) for y in Y])
    M = sum(wi * (V + np.outer(e, e)) for wi, e in zip(w, Eu))
    return Eu, M


def h2(Y, w, mu, B, D, Eu, M):
    """Expected complete-data log-likelihood of one component, up to a constant.

    n_k/2 log|D^-1| - n_k/2 tr(D^-1 S) + sum_i w_i (y_i-mu)' D^-1 B E(u|y_i)
    - 1/2 tr(B' D^-1 B M).
    """
    n_k = float(np.sum(w))
    R = Y - mu
    S = (R * w[:, None]).T @ R / n_k
    Dinv = np.diag(1.0 / np.asarray(D, float))
    out = 0.5 * n_k * np.log(np.linalg.det(Dinv)) - 0.5 * n_k * np.trace(Dinv @ S)
    out += sum(wi * r @ Dinv @ B @ e for wi, r, e in zip(w, R, Eu))
    out -= 0.5 * np.trace(B.T @ Dinv @ B @ M)
    return float(out)


def all_memberships(J, L):
    for labels in itertools.product(range(L), repeat=J):
        B = np.zeros((J, L))
        B[np.arange(J), labels] = 1.0
        yield B


def adjusted_rand(a, b):
    """Adjusted Rand index from the contingency table."""
    a, b = np.asarray(a), np.asarray(b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    comb = lambda x: x * (x - 1) / 2.0
    sum_ij = comb(table).sum()
    sum_a = comb(table.sum(axis=1)).sum()
    sum_b = comb(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / comb(len(a))
    top = 0.5 * (sum_a + sum_b)
    if top == expected:
        return 1.0
    return float((sum_ij - expected) / (top - expected))


def same_partition(a, b):
    """True when two labelings induce the same partition."""
    a, b = np.asarray(a), np.asarray(b)
    return all((a[i] == a[j]) == (b[i] == b[j]) for i in range(len(a)) for j in range(i + 1, len(a)))
