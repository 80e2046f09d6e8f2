"""Mixture model with binary block loadings.

Each component k has density N_J(mu_k, B_k B_k' + D_k) where B_k is a J x L_k
binary matrix with exactly one 1 per row (the column-cluster membership of each
variable) and D_k is diagonal.  Because B_k' D_k^-1 B_k is diagonal, inverse and
determinant of the covariance reduce to O(J) work per observation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError, InvalidParameterError, NumericalError

LOG_2PI = np.log(2.0 * np.pi)
VARIANCE_FLOOR = 1e-6


class ModelVariant(str, enum.Enum):
    """Equality constraints across components.

    First letter refers to the membership matrix B, second to the error
    variances D; ``C`` means shared by all components, ``U`` means free.
    """

    CC = "CC"
    CU = "CU"
    UC = "UC"
    UU = "UU"

    @property
    def shared_membership(self) -> bool:
        return self.value[0] == "C"

    @property
    def shared_errors(self) -> bool:
        return self.value[1] == "C"

    @classmethod
    def parse(cls, value) -> "ModelVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InvalidParameterError(f"unknown model variant {value!r}") from None


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DataMatrix:
    """Units in rows, indicators in columns."""

    values: np.ndarray
    row_ids: tuple = ()
    column_ids: tuple = ()
    standardized: bool = False
    # per-column centring/scaling constants when ``standardized``
    means: np.ndarray | None = None
    sds: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InvalidInputError(f"data must be a non-empty 2-D array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise InvalidInputError(f"non-finite value at row {i}, column {j}")
        n, J = values.shape
        row_ids = tuple(self.row_ids) if len(self.row_ids) else tuple(str(i + 1) for i in range(n))
        column_ids = (
            tuple(self.column_ids) if len(self.column_ids) else tuple(f"V{j + 1}" for j in range(J))
        )
        if len(row_ids) != n or len(column_ids) != J:
            raise InvalidInputError("identifier count does not match data shape")
        if self.standardized and n > 1:
            if np.abs(values.mean(axis=0)).max() >= 1e-10 or np.abs(values.std(axis=0, ddof=1) - 1).max() >= 1e-10:
                raise InvalidInputError("data flagged as standardized but columns are not z-scores")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "column_ids", column_ids)
        if self.means is not None:
            object.__setattr__(self, "means", _frozen(self.means))
        if self.sds is not None:
            object.__setattr__(self, "sds", _frozen(self.sds))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def J(self) -> int:
        return self.values.shape[1]

    def take_rows(self, index) -> "DataMatrix":
        index = np.asarray(index)
        return DataMatrix(
            self.values[index],
            tuple(self.row_ids[i] for i in index),
            self.column_ids,
            self.standardized,
            self.means,
            self.sds,
        )


@dataclass(frozen=True)
class Dimensions:
    K: int
    L: tuple

    def __post_init__(self):
        L = (int(self.L),) * int(self.K) if np.isscalar(self.L) else tuple(int(x) for x in self.L)
        if int(self.K) < 1:
            raise InvalidParameterError(f"K must be >= 1, got {self.K}")
        if len(L) != self.K:
            raise InvalidParameterError(f"need one L per component, got {len(L)} for K={self.K}")
        if min(L) < 1:
            raise InvalidParameterError(f"every L_k must be >= 1, got {L}")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "L", L)

    def check(self, J: int, variant: ModelVariant | None = None) -> None:
        if max(self.L) > J:
            raise InvalidParameterError(f"L_k may not exceed J={J}, got {self.L}")
        if variant is not None and ModelVariant.parse(variant).shared_membership:
            if len(set(self.L)) > 1:
                raise InvalidParameterError(
                    f"variant {ModelVariant.parse(variant).value} shares B, so all L_k must be equal"
                )


def check_membership(B: np.ndarray) -> np.ndarray:
    """Return B as a float array after checking it is binary row-stochastic."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        raise InvalidParameterError(f"membership matrix must be 2-D, got shape {B.shape}")
    if not np.all((B == 0.0) | (B == 1.0)):
        raise InvalidParameterError("membership matrix must be binary")
    bad = np.flatnonzero(B.sum(axis=1) != 1.0)
    if bad.size:
        raise InvalidParameterError(
            f"row {bad[0]} of membership matrix has {int(B[bad[0]].sum())} ones, expected exactly 1"
        )
    return B


def _check_variances(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 1 or not np.all(np.isfinite(D)) or np.any(D <= 0.0):
        raise InvalidParameterError("error variances must be a vector of positive finite values")
    return D


def membership_matrix(assignment: Sequence[int], L: int | None = None) -> np.ndarray:
    """Binary J x L matrix from 0-based cluster labels."""
    assignment = np.asarray(assignment, dtype=int)
    if L is None:
        L = int(assignment.max()) + 1
    if assignment.min() < 0 or assignment.max() >= L:
        raise InvalidParameterError(f"labels must lie in 0..{L - 1}")
    B = np.zeros((assignment.size, L))
    B[np.arange(assignment.size), assignment] = 1.0
    return B


@dataclass(frozen=True)
class ComponentParams:
    mu: np.ndarray
    B: np.ndarray
    D: np.ndarray
    u_hat: np.ndarray | None = None

    def __post_init__(self):
        mu = _frozen(self.mu)
        B = check_membership(self.B)
        D = _check_variances(self.D)
        J = mu.size
        if B.shape[0] != J or D.size != J:
            raise InvalidParameterError(
                f"inconsistent component shapes: mu {mu.shape}, B {B.shape}, D {D.shape}"
            )
        u_hat = np.zeros(B.shape[1]) if self.u_hat is None else self.u_hat
        u_hat = _frozen(u_hat)
        if u_hat.shape != (B.shape[1],):
            raise InvalidParameterError(f"u_hat must have length {B.shape[1]}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "D", _frozen(D))
        object.__setattr__(self, "u_hat", u_hat)

    @property
    def L(self) -> int:
        return self.B.shape[1]

    def covariance(self) -> np.ndarray:
        return assemble_covariance(self.B, self.D)


@dataclass(frozen=True)
class MixtureParams:
    pi: np.ndarray
    components: tuple
    variant: ModelVariant = ModelVariant.UU
    dims: Dimensions | None = field(default=None)

    def __post_init__(self):
        pi = _frozen(self.pi)
        components = tuple(self.components)
        variant = ModelVariant.parse(self.variant)
        if pi.ndim != 1 or pi.size != len(components) or pi.size == 0:
            raise InvalidParameterError("pi must have one entry per component")
        if np.any(pi < 0.0) or np.any(pi > 1.0) or abs(pi.sum() - 1.0) > 1e-12:
            raise InvalidParameterError(f"mixing proportions must lie in [0,1] and sum to 1, got {pi}")
        J = components[0].mu.size
        if any(c.mu.size != J for c in components):
            raise InvalidParameterError("components disagree on J")
        dims = Dimensions(len(components), tuple(c.L for c in components))
        if self.dims is not None and self.dims != dims:
            raise InvalidParameterError(f"dims {self.dims} do not match components {dims}")
        dims.check(J, variant)
        first = components[0]
        if variant.shared_errors and any(not np.array_equal(c.D, first.D) for c in components):
            raise InvalidParameterError(f"variant {variant.value} requires one shared D")
        if variant.shared_membership and any(not np.array_equal(c.B, first.B) for c in components):
            raise InvalidParameterError(f"variant {variant.value} requires one shared B")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "variant", variant)
        object.__setattr__(self, "dims", dims)

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def J(self) -> int:
        return self.components[0].mu.size


def assemble_covariance(B, D) -> np.ndarray:
    """Covariance ``B B' + diag(D)``."""
    B = check_membership(B)
    D = _check_variances(D)
    if B.shape[0] != D.size:
        raise InvalidParameterError(f"B has {B.shape[0]} rows but D has {D.size} entries")
    return B @ B.T + np.diag(D)


def _block_terms(B: np.ndarray, D: np.ndarray):
    """Per-cluster precision weights ``c_l = sum_{j in l} 1/D_j``."""
    inv_d = 1.0 / D
    c = inv_d @ B
    return inv_d, c


def log_density_rows(Y: np.ndarray, mu: np.ndarray, B: np.ndarray, D: np.ndarray) -> np.ndarray:
    """log N_J(y_i; mu, BB' + D) for every row of ``Y``.

    Uses Woodbury: Sigma^-1 = D^-1 - D^-1 B (I + C)^-1 B' D^-1 with
    C = B' D^-1 B diagonal, and |Sigma| = |D| prod_l (1 + c_l).
    """
    inv_d, c = _block_terms(B, D)
    R = Y - mu
    A = R * inv_d
    G = A @ B
    quad = np.einsum("ij,ij->i", R, A) - (G * G) @ (1.0 / (1.0 + c))
    logdet = np.log(D).sum() + np.log1p(c).sum()
    out = -0.5 * (Y.shape[1] * LOG_2PI + logdet + quad)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite log-density; covariance is numerically singular")
    return out


def log_density(y, mu, B, D) -> float:
    """Log of the J-variate normal density with covariance ``B B' + diag(D)``."""
    B = check_membership(B)
    D = _check_variances(D)
    y = np.asarray(y, dtype=float).reshape(1, -1)
    mu = np.asarray(mu, dtype=float)
    if y.shape[1] != mu.size or B.shape[0] != mu.size or D.size != mu.size:
        raise InvalidParameterError("y, mu, B and D disagree on J")
    return float(log_density_rows(y, mu, B, D)[0])


def _values(data) -> np.ndarray:
    return data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=float)


def component_log_densities(data, params: MixtureParams) -> np.ndarray:
    """n x K matrix of log pi_k + log N_J(y_i; mu_k, Sigma_k)."""
    Y = _values(data)
    if Y.ndim != 2 or Y.shape[1] != params.J:
        raise InvalidInputError(f"data has {Y.shape[-1]} columns, parameters expect J={params.J}")
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.pi)
    out = np.empty((Y.shape[0], params.K))
    for k, comp in enumerate(params.components):
        out[:, k] = log_pi[k] + log_density_rows(Y, comp.mu, comp.B, comp.D)
    return out


def log_likelihood(data, params: MixtureParams) -> float:
    """Observed-data log-likelihood, summed over units."""
    return float(logsumexp(component_log_densities(data, params), axis=1).sum())


def parameter_count(variant, K: int, J: int) -> int:
    """Free parameters of a fitted model.

    Counts K-1 proportions, KJ means and the covariance parameters: J for
    each shared and KJ for each free membership/error matrix.
    """
    variant = ModelVariant.parse(variant)
    if K < 1 or J < 1:
        raise InvalidParameterError("K and J must be positive")
    n_b = J if variant.shared_membership else K * J
    n_d = J if variant.shared_errors else K * J
    return (K - 1) + K * J + n_b + n_d


def column_cluster_assignment(B) -> np.ndarray:
    """1-based column-cluster label of each variable, numbered by first appearance."""
    B = check_membership(B)
    raw = B.argmax(axis=1)
    order = {}
    for label in raw:
        order.setdefault(int(label), len(order) + 1)
    return np.array([order[int(label)] for label in raw], dtype=int)


def canonical_columns(B: np.ndarray) -> np.ndarray:
    """Column permutation putting clusters in order of first appearance, empty ones last."""
    B = check_membership(B)
    raw = B.argmax(axis=1)
    seen = list(dict.fromkeys(int(x) for x in raw))
    rest = [l for l in range(B.shape[1]) if l not in seen]
    return np.array(seen + rest, dtype=int)
