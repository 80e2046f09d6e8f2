"""Information criteria and the (variant, K, L) grid search."""

from __future__ import annotations

import functools
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aecm import FitConfig, FitResult, fit, split_component
from .errors import BlockmixError, InvalidParameterError, SelectionFailureError
from .model import DataMatrix, Dimensions, ModelVariant, parameter_count

logger = logging.getLogger(__name__)

CRITERIA = ("AIC", "BIC")
TIE_TOL = 1e-9


def aic(loglik: float, n_par: int) -> float:
    """Akaike information criterion, -2 log L + 2 #par."""
    if n_par < 1:
        raise InvalidParameterError("n_par must be >= 1")
    return -2.0 * loglik + 2.0 * n_par


def bic(loglik: float, n_par: int, n: int) -> float:
    """Bayesian information criterion, -2 log L + #par log n."""
    if n_par < 1:
        raise InvalidParameterError("n_par must be >= 1")
    if n < 2:
        raise InvalidParameterError("BIC needs n >= 2")
    return -2.0 * loglik + n_par * math.log(n)


@dataclass(frozen=True)
class GridSpec:
    variants: tuple = ("CC", "CU", "UC", "UU")
    K_range: tuple = (1, 10)
    L_range: tuple = (1, 6)
    L_mode: str = "shared-L"
    criterion: str = "BIC"
    # per-component L vectors are enumerated only up to this K
    per_component_max_K: int = 4
    max_cells: int = 500
    warm_start: bool = False

    def __post_init__(self):
        variants = tuple(ModelVariant.parse(v) for v in self.variants)
        if not variants:
            raise InvalidParameterError("at least one variant is required")
        object.__setattr__(self, "variants", tuple(dict.fromkeys(variants)))
        object.__setattr__(self, "criterion", str(self.criterion).upper())
        if self.criterion not in CRITERIA:
            raise InvalidParameterError(f"criterion must be one of {CRITERIA}")
        if self.L_mode not in ("shared-L", "per-component-L"):
            raise InvalidParameterError("L_mode must be 'shared-L' or 'per-component-L'")
        for name in ("K_range", "L_range"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise InvalidParameterError(f"{name} must satisfy 1 <= min <= max, got {(lo, hi)}")
            object.__setattr__(self, name, (int(lo), int(hi)))

    def cells(self, J: int, n: int | None = None) -> list:
        """Grid cells in evaluation order: variant, then K, then L vector."""
        out = []
        L_lo, L_hi = self.L_range[0], min(self.L_range[1], J)
        for variant in self.variants:
            for K in range(self.K_range[0], self.K_range[1] + 1):
                if n is not None and K > n:
                    continue
                per_comp = (
                    self.L_mode == "per-component-L"
                    and not variant.shared_membership
                    and 1 < K <= self.per_component_max_K
                )
                if per_comp:
                    Ls = itertools.combinations_with_replacement(range(L_hi, L_lo - 1, -1), K)
                else:
                    Ls = ((L,) * K for L in range(L_lo, L_hi + 1))
                for L in Ls:
                    out.append((variant, Dimensions(K, tuple(L))))
        if len(out) > self.max_cells:
            raise InvalidParameterError(
                f"grid has {len(out)} cells, above max_cells={self.max_cells}; narrow it or raise the cap"
            )
        return out


@dataclass(frozen=True)
class CellRecord:
    variant: ModelVariant
    K: int
    L: tuple
    loglik: float
    n_par: int
    aic: float
    bic: float
    converged: bool
    warnings: tuple = ()
    failed: bool = False
    effective_L: tuple = ()
    n_cycles: int = 0
    fit: FitResult | None = field(default=None, repr=False, compare=False)

    def criterion(self, name: str) -> float:
        return self.aic if name.upper() == "AIC" else self.bic

    @property
    def label(self) -> str:
        return f"{self.variant.value} K={self.K} L={'/'.join(map(str, self.L))}"


@dataclass(frozen=True)
class SelectionTable:
    records: tuple
    criterion: str = "BIC"
    n: int = 0
    J: int = 0

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def best(self) -> CellRecord:
        return self.records[0]


def _compare(criterion: str):
    def cmp(a: CellRecord, b: CellRecord) -> int:
        if a.failed != b.failed:
            return 1 if a.failed else -1
        if not a.failed:
            ca, cb = a.criterion(criterion), b.criterion(criterion)
            if abs(ca - cb) > TIE_TOL:
                return -1 if ca < cb else 1
        ka = (a.n_par, a.K, sum(a.L))
        kb = (b.n_par, b.K, sum(b.L))
        return (ka > kb) - (ka < kb)

    return functools.cmp_to_key(cmp)


def record_from_fit(result: FitResult, n: int) -> CellRecord:
    n_par = result.n_par
    return CellRecord(
        variant=result.variant,
        K=result.dims.K,
        L=result.dims.L,
        loglik=result.loglik,
        n_par=n_par,
        aic=aic(result.loglik, n_par),
        bic=bic(result.loglik, n_par, n),
        converged=result.converged,
        warnings=result.warnings,
        effective_L=result.effective_L,
        n_cycles=result.n_cycles_used,
        fit=result,
    )


def _failed_record(variant, dims: Dimensions, J: int, message: str) -> CellRecord:
    return CellRecord(
        variant=variant,
        K=dims.K,
        L=dims.L,
        loglik=float("nan"),
        n_par=parameter_count(variant, dims.K, J),
        aic=float("nan"),
        bic=float("nan"),
        converged=False,
        warnings=(message,),
        failed=True,
    )


def _fit_cell(Y, variant, dims, config, warm_from):
    starts = ()
    if warm_from is not None:
        try:
            starts = (split_component(warm_from.params, dims),)
        except InvalidParameterError:
            starts = ()
    try:
        return fit(Y, variant, dims, config, extra_starts=starts)
    except BlockmixError as exc:
        return exc


def grid_search(data, grid: GridSpec | None = None, config: FitConfig | None = None, threads: int = 1):
    """Fit every grid cell and rank them by the chosen criterion.

    Returns ``(best_fit, table)``.  Failed cells stay in the table, flagged
    and sorted last.  With ``grid.warm_start`` each cell additionally starts
    from a split of the best fit with one component fewer (same variant, a
    compatible L vector), so K levels are processed in order.
    """
    grid = grid or GridSpec()
    config = config or FitConfig()
    Y = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=float)
    n, J = Y.shape
    cells = grid.cells(J, n)
    if not cells:
        raise SelectionFailureError("grid is empty for this data")

    results: dict = {}

    def warm_source(variant, dims):
        if not grid.warm_start or dims.K < 2:
            return None
        best = None
        for (v, d), res in results.items():
            if v != variant or d.K != dims.K - 1 or isinstance(res, Exception):
                continue
            try:
                split_component(res.params, dims)
            except InvalidParameterError:
                continue
            if best is None or res.loglik > best.loglik:
                best = res
        return best

    # K levels in order so warm starts see the previous level
    levels = sorted({d.K for _, d in cells}) if grid.warm_start else [None]
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        for level in levels:
            batch = [c for c in cells if level is None or c[1].K == level]
            futures = [pool.submit(_fit_cell, Y, v, d, config, warm_source(v, d)) for v, d in batch]
            for (v, d), fut in zip(batch, futures):
                results[(v, d)] = fut.result()

    records = []
    for v, d in cells:
        res = results[(v, d)]
        if isinstance(res, Exception):
            logger.warning("cell %s K=%d L=%s failed: %s", v.value, d.K, d.L, res)
            records.append(_failed_record(v, d, J, f"{res.category}: {res}"))
        else:
            records.append(record_from_fit(res, n))
    records.sort(key=_compare(grid.criterion))
    table = SelectionTable(tuple(records), grid.criterion, n, J)
    if table.best.failed:
        raise SelectionFailureError(f"all {len(records)} grid cells failed")
    return table.best.fit, table
