"""CSV input, standardization and result files.

Every file is written to a temporary name in the target directory and then
renamed, so a failure never leaves a half-written output behind.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .aecm import FitResult, Responsibilities, canonicalize, e_step
from .errors import BlockmixError, InvalidInputError, ParseError
from .model import ComponentParams, DataMatrix, MixtureParams, ModelVariant, column_cluster_assignment, membership_matrix
from .selection import CellRecord, SelectionTable, aic, bic

RESULT_FORMAT = "blockmix-result"
RESULT_VERSION = 1


class OutputError(BlockmixError, OSError):
    category = "io-error"


# ----------------------------------------------------------------------------
# input


def load_csv(path) -> DataMatrix:
    """Read a units x indicators table.

    The first row holds column identifiers (its first cell is ignored), the
    first column holds row identifiers, everything else must be numeric.
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8-sig") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc.reason})") from None
    except OSError as exc:
        raise OutputError(f"{path}: {exc.strerror}") from None
    rows = [r for r in rows if r]
    if not rows:
        raise ParseError(f"{path}: file is empty")
    header, body = rows[0], rows[1:]
    if len(header) < 2:
        raise ParseError(f"{path}: header needs an id column and at least one indicator")
    if not body:
        raise ParseError(f"{path}: no data rows")
    column_ids = tuple(h.strip() for h in header[1:])
    _check_unique(column_ids, "column", path)
    values = np.empty((len(body), len(column_ids)))
    row_ids = []
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != len(header):
            raise ParseError(f"{path}: line {line} has {len(row)} fields, expected {len(header)}")
        row_ids.append(row[0].strip())
        for j, cell in enumerate(row[1:]):
            text = cell.strip()
            try:
                value = float(text)
            except ValueError:
                value = math.nan
            if not text or not math.isfinite(value):
                raise ParseError(
                    f"{path}: non-numeric cell {cell!r} at (row {line}, column {j + 2} '{column_ids[j]}')"
                )
            values[i, j] = value
    _check_unique(row_ids, "row", path)
    return DataMatrix(values, tuple(row_ids), column_ids)


def _check_unique(ids, kind, path):
    seen = set()
    for pos, x in enumerate(ids):
        if x in seen:
            raise ParseError(f"{path}: duplicate {kind} id {x!r} at {kind} {pos + 1}")
        seen.add(x)


def save_csv(data: DataMatrix, path, corner: str = "id") -> Path:
    rows = [[corner, *data.column_ids]]
    for rid, row in zip(data.row_ids, data.values):
        rows.append([rid, *(format(v, ".17g") for v in row)])
    return write_csv(path, rows)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def standardize(data: DataMatrix) -> DataMatrix:
    """Column z-scores using the sample standard deviation (n - 1)."""
    Y = data.values
    if data.n < 2:
        raise InvalidInputError("standardization needs at least two rows")
    means = Y.mean(axis=0)
    sds = Y.std(axis=0, ddof=1)
    flat = np.flatnonzero(~(sds > 0))
    if flat.size:
        raise InvalidInputError(f"column '{data.column_ids[flat[0]]}' is constant; cannot standardize")
    return DataMatrix((Y - means) / sds, data.row_ids, data.column_ids, True, means, sds)


def apply_standardization(data: DataMatrix, means, sds, standardized: bool = False) -> DataMatrix:
    """Apply stored centring and scaling constants.

    Pass ``standardized=True`` only when the constants were computed from this
    same data; the flag is then re-checked by :class:`DataMatrix`.
    """
    means, sds = np.asarray(means, float), np.asarray(sds, float)
    Z = (data.values - means) / sds
    return DataMatrix(Z, data.row_ids, data.column_ids, standardized, means, sds)


# ----------------------------------------------------------------------------
# atomic writers


def _atomic_write(path, write) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, rows) -> Path:
    return _atomic_write(path, lambda fh: csv.writer(fh, lineterminator="\n").writerows(rows))


def write_json(path, obj) -> Path:
    def write(fh):
        json.dump(obj, fh, indent=2, allow_nan=False)
        fh.write("\n")

    return _atomic_write(path, write)


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


# ----------------------------------------------------------------------------
# result document


def ordered_layout(fit: FitResult, data: DataMatrix) -> dict:
    """Row and column orderings for a block heatmap.

    Rows are grouped by hard cluster, keeping file order within a cluster.
    Columns follow the column clusters of the reference component (the one
    with the largest mixing proportion, i.e. component 1 after
    canonicalization); each component's own ordering is listed too.
    """
    K = fit.params.K
    rows = sorted(range(data.n), key=lambda i: (int(fit.row_assignment[i]), i))
    row_sizes = np.bincount(fit.row_assignment, minlength=K)
    row_bounds = [0, *np.cumsum(row_sizes).tolist()]

    def column_part(k):
        labels = fit.column_assignments[k]
        order = sorted(range(data.J), key=lambda j: (int(labels[j]), j))
        sizes = np.bincount(labels, minlength=fit.params.components[k].L + 1)[1:]
        sizes = sizes[sizes > 0]
        return order, [0, *np.cumsum(sizes).tolist()]

    ref = int(np.argmax(fit.params.pi))
    col_order, col_bounds = column_part(ref)
    per_comp = []
    for k in range(K):
        order, bounds = column_part(k)
        per_comp.append(
            {"component": k + 1, "column_order": [data.column_ids[j] for j in order], "column_boundaries": bounds}
        )
    return {
        "reference_component": ref + 1,
        "row_order": [data.row_ids[i] for i in rows],
        "row_boundaries": [int(b) for b in row_bounds],
        "column_order": [data.column_ids[j] for j in col_order],
        "column_boundaries": [int(b) for b in col_bounds],
        "components": per_comp,
        "_row_index": rows,
        "_col_index": col_order,
    }


def table_rows(table: SelectionTable) -> list:
    out = []
    for rank, r in enumerate(table.records, start=1):
        out.append(
            {
                "rank": rank,
                "variant": r.variant.value,
                "K": r.K,
                "L": list(r.L),
                "effective_L": list(r.effective_L),
                "loglik": _num(r.loglik),
                "n_par": r.n_par,
                "AIC": _num(r.aic),
                "BIC": _num(r.bic),
                "converged": r.converged,
                "failed": r.failed,
                "n_cycles": r.n_cycles,
                "warnings": list(r.warnings),
            }
        )
    return out


def result_document(fit: FitResult, table: SelectionTable, data: DataMatrix, settings: dict | None = None) -> dict:
    """Structured summary of a fit; field names are documented in docs/result_format.md."""
    params = fit.params
    cols = data.column_ids
    n_par = fit.n_par
    components = []
    for k, comp in enumerate(params.components):
        labels = fit.column_assignments[k]
        components.append(
            {
                "component": k + 1,
                "pi": float(params.pi[k]),
                "size": int(np.count_nonzero(fit.row_assignment == k)),
                "L": comp.L,
                "effective_L": fit.effective_L[k],
                "mu": dict(zip(cols, map(float, comp.mu))),
                "D": dict(zip(cols, map(float, comp.D))),
                "column_clusters": dict(zip(cols, map(int, labels))),
                "u_hat": [float(x) for x in comp.u_hat],
            }
        )
    std = None
    if data.means is not None:
        std = {"means": dict(zip(cols, map(float, data.means))), "sds": dict(zip(cols, map(float, data.sds)))}
    return {
        "format": RESULT_FORMAT,
        "version": RESULT_VERSION,
        "data": {
            "n": data.n,
            "J": data.J,
            "row_ids": list(data.row_ids),
            "column_ids": list(cols),
            "standardized": bool(data.standardized),
            "standardization": std,
        },
        "selected": {
            "variant": params.variant.value,
            "K": params.K,
            "L": list(params.dims.L),
            "effective_L": list(fit.effective_L),
            "loglik": float(fit.loglik),
            "n_par": n_par,
            "AIC": aic(fit.loglik, n_par),
            "BIC": bic(fit.loglik, n_par, data.n) if data.n >= 2 else None,
            "criterion": table.criterion,
            "converged": bool(fit.converged),
            "n_cycles": fit.n_cycles_used,
            "restart": fit.restart,
            "warnings": list(fit.warnings),
        },
        "pi": [float(p) for p in params.pi],
        "components": components,
        "row_clusters": {rid: int(lab) + 1 for rid, lab in zip(data.row_ids, fit.row_assignment)},
        "loglik_trace": [float(x) for x in fit.loglik_trace],
        "selection_table": table_rows(table),
        "settings": settings or {},
    }


def emit_results(fit: FitResult, table: SelectionTable, data: DataMatrix, out_dir, settings: dict | None = None) -> dict:
    """Write the result document and CSV exports into ``out_dir``.

    Returns a mapping from output kind to path.
    """
    out_dir = Path(out_dir)
    K = fit.params.K
    paths = {}
    doc = result_document(fit, table, data, settings)
    z = fit.responsibilities.z_hat
    resp_rows = [["id", *(f"z{k + 1}" for k in range(K)), "cluster"]]
    for i, rid in enumerate(data.row_ids):
        resp_rows.append([rid, *(repr(float(v)) for v in z[i]), int(fit.row_assignment[i]) + 1])
    layout = ordered_layout(fit, data)
    ri, ci = layout.pop("_row_index"), layout.pop("_col_index")
    ordered = [["id", *layout["column_order"]]]
    for i in ri:
        ordered.append([data.row_ids[i], *(format(v, ".17g") for v in data.values[i, ci])])
    col_files = []
    for k, comp in enumerate(fit.params.components):
        labels = fit.column_assignments[k]
        rows = [["column", "cluster", "u_hat"]]
        for j, cid in enumerate(data.column_ids):
            rows.append([cid, int(labels[j]), repr(float(comp.u_hat[labels[j] - 1]))])
        col_files.append((out_dir / f"column_clusters_{k + 1}.csv", rows))

    # render everything before touching disk
    paths["result"] = write_json(out_dir / "result.json", doc)
    paths["responsibilities"] = write_csv(out_dir / "responsibilities.csv", resp_rows)
    paths["column_clusters"] = [write_csv(p, rows) for p, rows in col_files]
    paths["ordered_matrix"] = write_csv(out_dir / "ordered_matrix.csv", ordered)
    paths["ordered_layout"] = write_json(out_dir / "ordered_layout.json", layout)
    return paths


def load_result(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if doc.get("format") != RESULT_FORMAT:
        raise ParseError(f"{path}: not a {RESULT_FORMAT} document")
    return doc


def params_from_document(doc: dict) -> MixtureParams:
    cols = doc["data"]["column_ids"]
    comps = []
    for c in doc["components"]:
        labels = np.array([c["column_clusters"][cid] for cid in cols]) - 1
        comps.append(
            ComponentParams(
                np.array([c["mu"][cid] for cid in cols]),
                membership_matrix(labels, c["L"]),
                np.array([c["D"][cid] for cid in cols]),
                np.array(c["u_hat"]),
            )
        )
    return MixtureParams(np.array(doc["pi"]), comps, ModelVariant.parse(doc["selected"]["variant"]))


def table_from_document(doc: dict) -> SelectionTable:
    records = []
    for r in doc["selection_table"]:
        nan = float("nan")
        records.append(
            CellRecord(
                variant=ModelVariant.parse(r["variant"]),
                K=r["K"],
                L=tuple(r["L"]),
                loglik=nan if r["loglik"] is None else r["loglik"],
                n_par=r["n_par"],
                aic=nan if r["AIC"] is None else r["AIC"],
                bic=nan if r["BIC"] is None else r["BIC"],
                converged=r["converged"],
                warnings=tuple(r["warnings"]),
                failed=r["failed"],
                effective_L=tuple(r["effective_L"]),
                n_cycles=r["n_cycles"],
            )
        )
    return SelectionTable(tuple(records), doc["selected"]["criterion"], doc["data"]["n"], doc["data"]["J"])


def fit_from_document(doc: dict, data: DataMatrix) -> FitResult:
    """Rebuild a FitResult from a saved document and the data it was fitted to."""
    if list(data.column_ids) != doc["data"]["column_ids"]:
        raise InvalidInputError("data columns do not match the saved fit")
    params = params_from_document(doc)
    params, Z = canonicalize(params, e_step(data, params).z_hat)
    resp = Responsibilities(Z)
    sel = doc["selected"]
    return FitResult(
        params=params,
        responsibilities=resp,
        loglik_trace=tuple(doc["loglik_trace"]),
        converged=sel["converged"],
        n_cycles_used=sel["n_cycles"],
        row_assignment=resp.hard_labels(),
        column_assignments=tuple(column_cluster_assignment(c.B) for c in params.components),
        effective_L=tuple(sel["effective_L"]),
        warnings=tuple(sel["warnings"]),
        loglik=sel["loglik"],
        n_obs=data.n,
        restart=sel.get("restart", 0),
    )
