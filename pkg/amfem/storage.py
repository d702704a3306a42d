# --------------------------------------------------
# storage.py
# --------------------------------------------------
# File persistence for runs. Every output of the CLI
# goes through here:
#
#   ✔ Mesh JSON (load + save, validated by MeshFile)
#   ✔ history.csv (ConvergenceHistory, %.17g floats)
#   ✔ report / manifest JSON (sorted keys, flat maps)
#   ✔ metrics.prom (Prometheus text)
#   ✔ indicator and harmonic-basis CSV exports
#   ✔ sparse matrices as coordinate text (row col value)
#
# Floats are written with 17 significant digits so a
# re-run of the same config reproduces files byte for
# byte.
# --------------------------------------------------

import csv
import json
import math
from pathlib import Path
from typing import Any, Dict

import numpy as np
import scipy.sparse as sp
from pydantic import ValidationError

from .adapt import HISTORY_COLUMNS, ConvergenceHistory
from .errors import ConfigError, ConvergenceDataError
from .estimator import ErrorIndicators
from .hodge import SubspaceBasis
from .mesh import Mesh, build_mesh
from .schemas import MeshFile

_INT_COLUMNS = {"k", "cells", "dofs_sigma", "dofs_u", "marked"}


def fmt(value: float) -> str:
    return "%.17g" % value


def ensure_dir(path) -> Path:
    """Create the output directory; unwritable locations are a config error."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        marker = out / ".write_test"
        marker.write_text("")
        marker.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    return out


# --------------------------------------------------
# Mesh JSON
# --------------------------------------------------


def load_mesh(path) -> Mesh:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read mesh file {path}: {exc}") from exc
    try:
        data = MeshFile.model_validate_json(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid mesh file {path}: {exc.errors()[0]['msg']}") from exc
    return build_mesh(data.vertices, data.triangles, data.refinement_edge)


def save_mesh(mesh: Mesh, path) -> None:
    data = MeshFile(
        vertices=mesh.vertices.tolist(),
        triangles=mesh.triangles.tolist(),
        refinement_edge=mesh.refinement_edge.tolist(),
    )
    Path(path).write_text(data.model_dump_json())


# --------------------------------------------------
# History CSV
# --------------------------------------------------


def write_history(history: ConvergenceHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for record in history:
            row = []
            for name in HISTORY_COLUMNS:
                value = getattr(record, name)
                row.append(str(value) if name in _INT_COLUMNS else fmt(value))
            writer.writerow(row)


def read_history(path) -> ConvergenceHistory:
    """
    Parse a history CSV; unreadable, empty or malformed files name the file.
    Hand-written files may carry a subset of the columns (missing ones get
    the ConvergenceHistory.from_columns defaults).
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            header = reader.fieldnames or []
    except OSError as exc:
        raise ConvergenceDataError(f"{path}: cannot read history ({exc})") from exc
    if not rows:
        raise ConvergenceDataError(f"{path}: history file is empty")

    present = [name for name in HISTORY_COLUMNS if name in header]
    if not present:
        raise ConvergenceDataError(f"{path}: no known history columns in header {header}")

    try:
        columns = {
            name: [int(row[name]) if name in _INT_COLUMNS else float(row[name]) for row in rows]
            for name in present
        }
        return ConvergenceHistory.from_columns(**columns)
    except (TypeError, ValueError, ConvergenceDataError) as exc:
        raise ConvergenceDataError(f"{path}: malformed history ({exc})") from exc


# --------------------------------------------------
# JSON reports and plain text
# --------------------------------------------------


def _json_value(value: Any) -> Any:
    if isinstance(value, (np.generic,)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def write_json(data: Dict[str, Any], path) -> None:
    clean = {key: _json_value(value) for key, value in data.items()}
    Path(path).write_text(json.dumps(clean, indent=2, sort_keys=True) + "\n")


def write_text(text: str, path) -> None:
    Path(path).write_text(text)


# --------------------------------------------------
# CSV exports
# --------------------------------------------------


def write_indicators(ind: ErrorIndicators, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["element", "jump", "corot", "residual", "eta_sq", "osc_sq"])
        eta_sq = ind.eta_sq
        for t in range(ind.mesh.num_triangles):
            writer.writerow([t, fmt(ind.jump[t]), fmt(ind.corot[t]), fmt(ind.residual[t]),
                             fmt(eta_sq[t]), fmt(ind.osc_sq[t])])


def write_harmonic_basis(basis: SubspaceBasis, mesh: Mesh, path) -> None:
    """One row per edge: edge id, its two vertices, then one column per basis vector."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["edge", "v0", "v1"] + [f"h{j}" for j in range(basis.dim)])
        for e, (a, b) in enumerate(mesh.edges.tolist()):
            writer.writerow([e, a, b] + [fmt(v) for v in basis.vectors[e]])


def export_coo(matrix, path) -> None:
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
            fh.write(f"{r} {c} {fmt(v)}\n")


def read_coo(path, shape) -> sp.coo_matrix:
    table = np.loadtxt(path, ndmin=2)
    return sp.coo_matrix((table[:, 2], (table[:, 0].astype(int), table[:, 1].astype(int))), shape=shape)
