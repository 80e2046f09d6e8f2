"""Two-cycle AECM fitting.

Cycle one treats the component labels as missing and updates the mixing
proportions and means.  Cycle two adds the block factors to the missing data
and conditionally maximizes the expected complete-data log-likelihood (H2)
over the membership matrices, then the error variances.  Both cycles start with
a fresh E-step, so the observed-data log-likelihood never decreases.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from .errors import EmptyComponentError, FitFailureError, InvalidParameterError, NumericalError
from .model import (
    LOG_2PI,
    VARIANCE_FLOOR,
    ComponentParams,
    DataMatrix,
    Dimensions,
    MixtureParams,
    ModelVariant,
    canonical_columns,
    column_cluster_assignment,
    component_log_densities,
    membership_matrix,
    parameter_count,
)

logger = logging.getLogger(__name__)

INIT_METHODS = ("distance-based-partition", "random-partition")
EMPTY_COMPONENT_FRACTION = 1e-6


@dataclass(frozen=True)
class FitConfig:
    max_cycles: int = 500
    tol: float = 1e-8
    n_restarts: int = 10
    seed: int = 0
    variance_floor: float = VARIANCE_FLOOR
    init_method: str = "distance-based-partition"

    def __post_init__(self):
        if self.max_cycles < 1:
            raise InvalidParameterError("max_cycles must be >= 1")
        if not self.tol > 0:
            raise InvalidParameterError("tol must be positive")
        if self.n_restarts < 1:
            raise InvalidParameterError("n_restarts must be >= 1")
        if self.seed < 0:
            raise InvalidParameterError("seed must be non-negative")
        if not self.variance_floor > 0:
            raise InvalidParameterError("variance_floor must be positive")
        if self.init_method not in INIT_METHODS:
            raise InvalidParameterError(f"init_method must be one of {INIT_METHODS}")


@dataclass(frozen=True)
class Responsibilities:
    z_hat: np.ndarray

    def __post_init__(self):
        z = np.array(self.z_hat, dtype=float, copy=True)
        z.setflags(write=False)
        object.__setattr__(self, "z_hat", z)

    @property
    def n_k(self) -> np.ndarray:
        return self.z_hat.sum(axis=0)

    def hard_labels(self) -> np.ndarray:
        # argmax returns the first maximum, i.e. the smallest index on ties
        return self.z_hat.argmax(axis=1)


@dataclass(frozen=True)
class ConditionalMoments:
    """Sufficient statistics of one component for the second cycle.

    ``Euu`` is the responsibility-weighted sum over units of E(u u' | y_i),
    ``var`` the posterior covariance I - Gamma B shared by all units, and
    ``cross`` the J x L matrix sum_i w_ik (y_i - mu_k) E(u | y_i)'.
    """

    Eu: np.ndarray
    Euu: np.ndarray
    Gamma: np.ndarray
    S: np.ndarray
    cross: np.ndarray
    n_k: float
    var: np.ndarray


@dataclass(frozen=True)
class FitResult:
    params: MixtureParams
    responsibilities: Responsibilities
    loglik_trace: tuple
    converged: bool
    n_cycles_used: int
    row_assignment: np.ndarray
    column_assignments: tuple
    effective_L: tuple
    warnings: tuple = ()
    loglik: float = float("nan")
    n_obs: int = 0
    restart: int = 0
    n_attempts: int = 0

    @property
    def variant(self) -> ModelVariant:
        return self.params.variant

    @property
    def dims(self) -> Dimensions:
        return self.params.dims

    @property
    def n_par(self) -> int:
        return parameter_count(self.params.variant, self.params.K, self.params.J)


def _Y(data) -> np.ndarray:
    return data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=float)


def _z(responsibilities) -> np.ndarray:
    if isinstance(responsibilities, Responsibilities):
        return responsibilities.z_hat
    return np.asarray(responsibilities, dtype=float)


def _posterior(logp: np.ndarray):
    lse = logsumexp(logp, axis=1)
    Z = np.exp(logp - lse[:, None])
    # renormalize so rows sum to one to machine precision
    Z /= Z.sum(axis=1, keepdims=True)
    return Z, float(lse.sum())


def e_step(data, params: MixtureParams) -> Responsibilities:
    """Posterior component probabilities, normalized in log space."""
    Z, _ = _posterior(component_log_densities(_Y(data), params))
    return Responsibilities(Z)


def _check_mass(n_k: np.ndarray, n: int) -> None:
    small = np.flatnonzero(n_k < EMPTY_COMPONENT_FRACTION * n)
    if small.size:
        raise EmptyComponentError(f"component {small[0]} has total responsibility {n_k[small[0]]:.3g}")


def cm_step_first(data, responsibilities):
    """Mixing proportions n_k/n and responsibility-weighted means.

    Returns ``(pi, mu)`` with ``mu`` of shape K x J.
    """
    Y = _Y(data)
    Z = _z(responsibilities)
    n_k = Z.sum(axis=0)
    _check_mass(n_k, Y.shape[0])
    pi = n_k / Y.shape[0]
    pi = pi / pi.sum()
    mu = (Z.T @ Y) / n_k[:, None]
    return pi, mu


def factor_regression(B: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Gamma = B' (B B' + D)^-1, an L x J matrix.

    With C = B' D^-1 B = diag(c) this is (I + C)^-1 B' D^-1.
    """
    inv_d = 1.0 / D
    c = inv_d @ B
    return (B * inv_d[:, None]).T / (1.0 + c)[:, None]


def conditional_moments(data, responsibilities, params: MixtureParams, k: int) -> ConditionalMoments:
    """E-step quantities of component ``k`` for the second cycle."""
    Y = _Y(data)
    w = _z(responsibilities)[:, k]
    comp = params.components[k]
    n_k = float(w.sum())
    _check_mass(np.array([n_k]), Y.shape[0])
    R = Y - comp.mu
    Gamma = factor_regression(comp.B, comp.D)
    Eu = R @ Gamma.T
    Rw = R * w[:, None]
    S = (Rw.T @ R) / n_k
    cross = Rw.T @ Eu
    var = np.eye(comp.L) - Gamma @ comp.B
    Euu = n_k * var + Eu.T @ (Eu * w[:, None])
    return ConditionalMoments(Eu, Euu, Gamma, S, cross, n_k, var)


def row_scores(moments: ConditionalMoments, D: np.ndarray) -> np.ndarray:
    """J x L matrix: the part of H2 that depends on putting variable j in cluster l.

    Entry (j, l) is [cross_jl - Euu_ll / 2] / D_j.  The remaining H2 terms
    involving B are zero because B' D^-1 B is diagonal for row-stochastic B.
    """
    return (moments.cross - 0.5 * np.diag(moments.Euu)[None, :]) / D[:, None]


def update_B(moments, D) -> np.ndarray:
    """Membership matrix maximizing H2 row by row.

    ``moments`` and ``D`` may be sequences, in which case the row scores are
    summed over components (one membership shared by all of them).
    """
    if isinstance(moments, ConditionalMoments):
        moments, D = [moments], [D]
    total = sum(row_scores(m, np.asarray(d, dtype=float)) for m, d in zip(moments, D))
    return membership_matrix(total.argmax(axis=1), total.shape[1])


def residual_variances(moments: ConditionalMoments, B: np.ndarray) -> np.ndarray:
    """Per-variable expected squared residual E[(y_j - mu_j - u_l(j))^2] under the new B.

    This is the exact H2 maximizer over D given B:
    S_jj - 2 (S Gamma')_{j,l} + (I - Gamma B_old + Gamma S Gamma')_{ll}.
    """
    n_k = moments.n_k
    theta = np.diag(moments.Euu) / n_k
    cross = moments.cross / n_k
    return np.diag(moments.S) - 2.0 * np.einsum("jl,jl->j", B, cross) + B @ theta


def regression_D(S: np.ndarray, B: np.ndarray, Gamma: np.ndarray) -> np.ndarray:
    """diag(S - B Gamma S), the factor-analysis form of the variance update."""
    return np.diag(S) - np.einsum("jl,lj->j", B, Gamma @ S)


def update_D(moments, B, floor: float = VARIANCE_FLOOR, weights=None):
    """Error variances maximizing H2 given the membership matrix ``B``.

    With sequences of moments and memberships the per-component maximizers are
    pooled by ``n_k`` (one D shared by all components).  Returns the clamped
    vector and the number of entries raised to ``floor``.
    """
    if isinstance(moments, ConditionalMoments):
        raw = residual_variances(moments, np.asarray(B, dtype=float))
    else:
        n_k = np.array([m.n_k for m in moments]) if weights is None else np.asarray(weights)
        raw = sum(n * residual_variances(m, np.asarray(b, dtype=float)) for n, m, b in zip(n_k, moments, B))
        raw = raw / n_k.sum()
    clamped = int(np.count_nonzero(raw < floor))
    return np.maximum(raw, floor), clamped


def update_u(data, responsibilities, component: ComponentParams, k: int) -> np.ndarray:
    """Posterior block factor Gamma_k sum_i w_ik (y_i - mu_k) / n_k."""
    Y = _Y(data)
    w = _z(responsibilities)[:, k]
    n_k = float(w.sum())
    _check_mass(np.array([n_k]), Y.shape[0])
    resid = w @ (Y - component.mu) / n_k
    return factor_regression(component.B, component.D) @ resid


# ----------------------------------------------------------------------------
# initialization


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(restart)])


def _random_membership(J: int, L: int, rng: np.random.Generator) -> np.ndarray:
    # surjective draw: every cluster starts non-empty
    labels = rng.permutation(np.arange(J) % L)
    return membership_matrix(labels, L)


def _partition_labels(Y: np.ndarray, K: int, method: str, rng: np.random.Generator) -> np.ndarray:
    n = Y.shape[0]
    if K == 1:
        return np.zeros(n, dtype=int)
    if method == "distance-based-partition":
        sd = Y.std(axis=0, ddof=1) if n > 1 else np.ones(Y.shape[1])
        X = (Y - Y.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        _, labels = kmeans2(X, K, iter=20, minit="++", seed=rng)
        if np.bincount(labels, minlength=K).min() > 0:
            return labels
    return rng.permutation(np.arange(n) % K)


def initial_params(data, variant, dims: Dimensions, method: str, rng: np.random.Generator) -> MixtureParams:
    """Hard partition means, uniform proportions, random memberships, unit variances."""
    Y = _Y(data)
    variant = ModelVariant.parse(variant)
    J = Y.shape[1]
    labels = _partition_labels(Y, dims.K, method, rng)
    shared_B = _random_membership(J, dims.L[0], rng) if variant.shared_membership else None
    comps = []
    for k in range(dims.K):
        members = Y[labels == k]
        mu = members.mean(axis=0) if len(members) else Y.mean(axis=0)
        B = shared_B if shared_B is not None else _random_membership(J, dims.L[k], rng)
        comps.append(ComponentParams(mu, B, np.ones(J)))
    return MixtureParams(np.full(dims.K, 1.0 / dims.K), comps, variant, dims)


def split_component(params: MixtureParams, dims: Dimensions) -> MixtureParams:
    """K+1 component parameters with the same likelihood: the heaviest component is duplicated.

    The duplicate must match the membership size the new cell asks for.
    """
    order = np.argsort(-params.pi, kind="stable")
    for k in order:
        comps = list(params.components) + [params.components[k]]
        Ls = sorted(c.L for c in comps)
        if Ls == sorted(dims.L):
            break
    else:
        raise InvalidParameterError(f"cannot split {params.dims} into {dims}")
    pi = np.append(params.pi, params.pi[k] / 2.0)
    pi[k] /= 2.0
    # reorder so that L matches dims position by position
    remaining = list(range(len(comps)))
    ordered = []
    for L in dims.L:
        idx = next(i for i in remaining if comps[i].L == L)
        remaining.remove(idx)
        ordered.append(idx)
    return MixtureParams(pi[ordered], [comps[i] for i in ordered], params.variant, dims)


# ----------------------------------------------------------------------------
# one AECM run


def second_cycle(data, responsibilities, params: MixtureParams, floor: float = VARIANCE_FLOOR, notes=None):
    """B, D and u updates of the second cycle, from the per-component steps."""
    Y = _Y(data)
    Z = _z(responsibilities)
    notes = set() if notes is None else notes
    variant = params.variant
    K = params.K
    moments = [conditional_moments(Y, Z, params, k) for k in range(K)]
    old_D = [c.D for c in params.components]
    if variant.shared_membership:
        new_B = [update_B(moments, old_D)] * K
    else:
        new_B = [update_B(moments[k], old_D[k]) for k in range(K)]
    if variant.shared_errors:
        D_shared, clamped = update_D(moments, new_B, floor)
        new_D = [D_shared] * K
        if clamped:
            notes.add("shared error variances clamped at the variance floor")
    else:
        new_D = []
        for k in range(K):
            D, clamped = update_D(moments[k], new_B[k], floor)
            new_D.append(D)
            if clamped:
                notes.add(f"component {k}: error variances clamped at the variance floor")
    comps = []
    for k, old in enumerate(params.components):
        comp = ComponentParams(old.mu, new_B[k], new_D[k])
        comps.append(replace(comp, u_hat=update_u(Y, Z, comp, k)))
    return MixtureParams(params.pi, comps, variant, params.dims)


class _Arrays:
    """Parameters as stacked arrays; memberships padded to the largest L.

    Padded clusters carry no variables, so they add nothing to densities;
    ``valid`` masks them out of the membership update.
    """

    def __init__(self, params: MixtureParams):
        K, J = params.K, params.J
        self.Lmax = max(params.dims.L)
        self.valid = np.zeros((K, self.Lmax), dtype=bool)
        self.B = np.zeros((K, J, self.Lmax))
        for k, c in enumerate(params.components):
            self.B[k, :, : c.L] = c.B
            self.valid[k, : c.L] = True
        self.pi = np.array(params.pi)
        self.mu = np.array([c.mu for c in params.components])
        self.D = np.array([c.D for c in params.components])
        self.u = np.zeros((K, self.Lmax))
        self.variant = params.variant
        self.dims = params.dims

    def to_params(self) -> MixtureParams:
        comps = []
        for k, L in enumerate(self.dims.L):
            comps.append(ComponentParams(self.mu[k], self.B[k, :, :L], self.D[k], self.u[k, :L]))
        pi = self.pi / self.pi.sum()
        return MixtureParams(pi, comps, self.variant, self.dims)


def _log_joint(Y: np.ndarray, st: _Arrays) -> np.ndarray:
    inv_d = 1.0 / st.D
    c = (inv_d[:, :, None] * st.B).sum(axis=1)
    R = Y[None] - st.mu[:, None, :]
    A = R * inv_d[:, None, :]
    G = A @ st.B
    quad = (R * A).sum(axis=2) - ((G * G) @ (1.0 / (1.0 + c))[:, :, None])[:, :, 0]
    logdet = np.log(st.D).sum(axis=1) + np.log1p(c).sum(axis=1)
    with np.errstate(divide="ignore"):
        log_pi = np.log(st.pi)
    return (log_pi[:, None] - 0.5 * (Y.shape[1] * LOG_2PI + logdet[:, None] + quad)).T


def _fast_posterior(logp: np.ndarray):
    m = logp.max(axis=1, keepdims=True)
    P = np.exp(logp - m)
    s = P.sum(axis=1, keepdims=True)
    return P / s, float((m + np.log(s)).sum())


def _fast_cycle(Y: np.ndarray, Z: np.ndarray, st: _Arrays, floor: float, notes: set) -> None:
    n = Y.shape[0]
    K = st.pi.size
    # first cycle
    n_k = Z.sum(axis=0)
    _check_mass(n_k, n)
    st.pi = n_k / n
    st.mu = (Z.T @ Y) / n_k[:, None]
    # second cycle
    Z, _ = _fast_posterior(_log_joint(Y, st))
    n_k = Z.sum(axis=0)
    _check_mass(n_k, n)
    W = Z.T[:, :, None]
    inv_d = 1.0 / st.D
    c = (inv_d[:, :, None] * st.B).sum(axis=1)
    Gamma_t = st.B * (inv_d[:, :, None] / (1.0 + c)[:, None, :])  # K x J x L
    R = Y[None] - st.mu[:, None, :]
    Eu = R @ Gamma_t
    Rw = R * W
    s_diag = (Rw * R).sum(axis=1) / n_k[:, None]
    cross = Rw.transpose(0, 2, 1) @ Eu
    euu = n_k[:, None] / (1.0 + c) + (W * Eu * Eu).sum(axis=1)
    scores = (cross - 0.5 * euu[:, None, :]) / st.D[:, :, None]
    scores = np.where(st.valid[:, None, :], scores, -np.inf)
    if st.variant.shared_membership:
        labels = np.broadcast_to(scores.sum(axis=0).argmax(axis=1), (K, Y.shape[1]))
    else:
        labels = scores.argmax(axis=2)
    B = np.zeros_like(st.B)
    np.put_along_axis(B, labels[:, :, None], 1.0, axis=2)
    # exact maximizer of H2 over D given the new memberships
    raw = (
        s_diag
        - 2.0 * np.take_along_axis(cross, labels[:, :, None], axis=2)[:, :, 0] / n_k[:, None]
        + np.take_along_axis(euu, labels, axis=1) / n_k[:, None]
    )
    if st.variant.shared_errors:
        raw = np.broadcast_to((n_k @ raw) / n_k.sum(), raw.shape)
    if np.any(raw < floor):
        notes.add("error variances clamped at the variance floor")
    st.B = B
    st.D = np.maximum(raw, floor)
    # block factors under the updated B and D
    inv_d = 1.0 / st.D
    c = (inv_d[:, :, None] * B).sum(axis=1)
    resid = (Z.T @ Y - n_k[:, None] * st.mu) / n_k[:, None]
    st.u = ((resid * inv_d)[:, :, None] * B).sum(axis=1) / (1.0 + c)


def run_aecm(data, start: MixtureParams, config: FitConfig):
    """Iterate AECM cycles from ``start``.

    Returns ``(params, Z, trace, converged, notes)`` where ``Z`` are the
    responsibilities under the returned parameters.
    """
    Y = _Y(data)
    st = _Arrays(start)
    Z, ll_prev = _fast_posterior(_log_joint(Y, st))
    trace = []
    notes: set = set()
    converged = False
    for _ in range(config.max_cycles):
        _fast_cycle(Y, Z, st, config.variance_floor, notes)
        Z, ll = _fast_posterior(_log_joint(Y, st))
        if not np.isfinite(ll):
            raise NumericalError("log-likelihood became non-finite")
        trace.append(ll)
        if abs(ll - ll_prev) / (abs(ll_prev) + 1.0) < config.tol:
            converged = True
            break
        ll_prev = ll
    params = st.to_params()
    for k, c in enumerate(params.components):
        empty = int(np.count_nonzero(c.B.sum(axis=0) == 0))
        if empty:
            notes.add(f"component {k}: {empty} empty column cluster(s)")
    return params, Z, trace, converged, notes


# ----------------------------------------------------------------------------
# canonical labelling and the restart driver


def canonicalize(params: MixtureParams, Z: np.ndarray):
    """Sort components by descending pi (ties: earliest assigned unit) and
    renumber column clusters by first appearance."""
    K = params.K
    hard = Z.argmax(axis=1)
    first = np.array([np.flatnonzero(hard == k)[0] if np.any(hard == k) else Z.shape[0] for k in range(K)])
    order = sorted(range(K), key=lambda k: (-params.pi[k], first[k], k))
    comps = []
    for k in order:
        c = params.components[k]
        perm = canonical_columns(c.B)
        comps.append(ComponentParams(c.mu, c.B[:, perm], c.D, c.u_hat[perm]))
    dims = Dimensions(K, tuple(c.L for c in comps))
    new = MixtureParams(params.pi[order], comps, params.variant, dims)
    return new, Z[:, order]


def _finish(params, Z, trace, converged, notes, n, restart, attempts) -> FitResult:
    params, Z = canonicalize(params, Z)
    resp = Responsibilities(Z)
    col = tuple(column_cluster_assignment(c.B) for c in params.components)
    eff = tuple(int(np.count_nonzero(c.B.sum(axis=0))) for c in params.components)
    warnings = sorted(notes)
    if not converged:
        warnings.append(f"did not converge within {len(trace)} cycles")
    return FitResult(
        params=params,
        responsibilities=resp,
        loglik_trace=tuple(trace),
        converged=converged,
        n_cycles_used=len(trace),
        row_assignment=resp.hard_labels(),
        column_assignments=col,
        effective_L=eff,
        warnings=tuple(warnings),
        loglik=trace[-1],
        n_obs=n,
        restart=restart,
        n_attempts=attempts,
    )


def fit(data, variant, dims, config: FitConfig | None = None, extra_starts: Sequence[MixtureParams] = ()) -> FitResult:
    """Fit one (variant, K, L) cell with restarts and keep the best run.

    Restart 0 uses ``config.init_method``; later restarts use random hard
    partitions.  ``extra_starts`` are additional fully specified starting
    points (e.g. a split of a smaller model) tried after the restarts.

    Runs operate on the rows sorted lexicographically, so the result does not
    depend on the order in which units are supplied.
    """
    config = config or FitConfig()
    variant = ModelVariant.parse(variant)
    if not isinstance(dims, Dimensions):
        dims = Dimensions(*dims)
    Y = _Y(data)
    n, J = Y.shape
    dims.check(J, variant)
    if n < dims.K:
        raise InvalidParameterError(f"need at least K={dims.K} units, got {n}")
    order = np.lexsort(Y.T[::-1])
    Y = Y[order]

    best = None
    failures = 0
    attempt = 0
    successes = 0
    cap = 3 * config.n_restarts
    while successes < config.n_restarts and attempt < cap:
        rng = restart_rng(config.seed, attempt)
        method = config.init_method if attempt == 0 else "random-partition"
        try:
            start = initial_params(Y, variant, dims, method, rng)
            out = run_aecm(Y, start, config)
        except EmptyComponentError as exc:
            logger.debug("restart %d abandoned: %s", attempt, exc)
            failures += 1
            attempt += 1
            continue
        successes += 1
        if best is None or out[2][-1] > best[0][2][-1]:
            best = (out, attempt)
        attempt += 1
    for start in extra_starts:
        try:
            out = run_aecm(Y, start, config)
        except EmptyComponentError:
            failures += 1
            continue
        if best is None or out[2][-1] > best[0][2][-1]:
            best = (out, attempt)
        attempt += 1
    if best is None:
        L = "/".join(str(x) for x in dims.L)
        raise FitFailureError(
            f"all {attempt} restarts hit an empty component for variant={variant.value} K={dims.K} L={L}"
        )
    (params, Z_sorted, trace, converged, notes), restart = best
    Z = np.empty_like(Z_sorted)
    Z[order] = Z_sorted
    if failures:
        notes = set(notes) | {f"{failures} restart(s) abandoned after an empty component"}
    return _finish(params, Z, trace, converged, notes, n, restart, attempt)
