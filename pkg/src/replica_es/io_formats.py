"""Flat-file formats for solver output: CSV tables, JSON mirrors, manifests.

CSV is the primary format: fixed headers, comma separator, ``.`` decimal,
scientific notation with 17 significant digits so every stored float
parses back to the identical double.  JSON
files mirror the same tables as a ``{"columns": ..., "rows": ...}``
object.  Figure runs additionally write a manifest JSON naming every
output file with its SHA-256 content hash, the generating parameters and
tolerances, and the code version; manifests carry no timestamps, so a
repeated run on identical inputs is byte-identical.
"""

import csv
import hashlib
import io
import json

from . import __version__
from .errors import DomainError
from .geometry import branch_labels

__all__ = [
    "SOLVE_COLUMNS",
    "CURVE_COLUMNS",
    "MC_COLUMNS",
    "MC_COMPARE_COLUMNS",
    "solve_record",
    "curve_records",
    "mc_record",
    "render_table",
    "parse_table",
    "table_status",
    "build_manifest",
    "render_manifest",
    "sha256_hex",
]

SOLVE_COLUMNS = (
    "alpha",
    "r",
    "eta",
    "q0",
    "rel_error",
    "delta",
    "epsilon",
    "free_energy",
    "es_in",
    "residual_norm",
)

CURVE_COLUMNS = (
    "alpha",
    "r",
    "eta",
    "q0",
    "delta",
    "epsilon",
    "es_in",
    "branch_label",
    "residual_norm",
    "turning",
)

MC_COLUMNS = (
    "n_assets",
    "n_obs",
    "alpha",
    "r",
    "eta",
    "n_samples",
    "seed",
    "q0_hat",
    "q0_se",
    "delta_hat",
    "delta_se",
    "eps_hat",
    "eps_se",
    "es_in_hat",
    "es_in_se",
    "feasible_fraction",
    "n_feasible",
)

MC_COMPARE_COLUMNS = MC_COLUMNS + (
    "q0_replica",
    "q0_z",
    "delta_replica",
    "delta_z",
    "eps_replica",
    "eps_z",
    "es_in_replica",
    "es_in_z",
)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        raise DomainError(f"boolean {value!r} has no table representation")
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".16e")


def solve_record(sol):
    """One table row for a converged reduced solution."""
    return {
        "alpha": sol.params.alpha,
        "r": sol.params.r,
        "eta": sol.params.eta,
        "q0": sol.q0,
        "rel_error": sol.rel_error,
        "delta": sol.delta,
        "epsilon": sol.epsilon,
        "free_energy": sol.free_energy,
        "es_in": sol.es_in_sample,
        "residual_norm": sol.residual_norm,
    }


def curve_records(curve):
    """Table rows for a traced curve, in continuation order.

    Contour and fold rows carry the full solved observables, taken from
    each point's own solved parameters, so re-solving any row reproduces
    the stored values.  Phase-boundary rows locate the divergence: they
    carry only (alpha, r, eta) with the observable columns empty, since
    every observable is infinite on the boundary itself.
    """
    labels = branch_labels(curve)
    turning = set(curve.turning_points)
    rows = []
    for i, ((c1, c2), sol) in enumerate(curve.points):
        if curve.spec.kind == "phase_boundary":
            rows.append(
                {
                    "alpha": c1,
                    "r": c2,
                    "eta": 0.0,
                    "q0": None,
                    "delta": None,
                    "epsilon": None,
                    "es_in": None,
                    "branch_label": labels[i],
                    "residual_norm": None,
                    "turning": 0,
                }
            )
            continue
        rows.append(
            {
                "alpha": sol.params.alpha,
                "r": sol.params.r,
                "eta": sol.params.eta,
                "q0": sol.q0,
                "delta": sol.delta,
                "epsilon": sol.epsilon,
                "es_in": sol.es_in_sample,
                "branch_label": labels[i],
                "residual_norm": sol.residual_norm,
                "turning": 1 if i in turning else 0,
            }
        )
    return rows


def mc_record(summary, replica=None):
    """One wide row for a Monte Carlo summary.

    With a ReducedSolution in ``replica`` the row adds the predicted
    values and the z-scores (estimate minus prediction over standard
    error).  An infeasible summary (no bounded replication) leaves every
    estimate column empty.
    """
    cfg = summary.config
    row = {
        "n_assets": cfg.n_assets,
        "n_obs": cfg.n_obs,
        "alpha": cfg.alpha,
        "r": cfg.n_assets / cfg.n_obs,
        "eta": cfg.eta,
        "n_samples": cfg.n_samples,
        "seed": cfg.seed,
        "feasible_fraction": summary.feasible_fraction,
        "n_feasible": summary.n_feasible,
    }
    pairs = {
        "q0": summary.q0_hat,
        "delta": summary.delta_hat,
        "eps": summary.eps_hat,
        "es_in": summary.es_in_hat,
    }
    for name, est in pairs.items():
        row[f"{name}_hat"] = None if est is None else est.value
        row[f"{name}_se"] = None if est is None else est.se
    if replica is None:
        return row
    preds = {
        "q0": replica.q0,
        "delta": replica.delta,
        "eps": replica.epsilon,
        "es_in": replica.es_in_sample,
    }
    for name, pred in preds.items():
        est = pairs[name]
        row[f"{name}_replica"] = pred
        row[f"{name}_z"] = None if est is None else (est.value - pred) / est.se
    return row


def render_table(columns, rows, fmt, status=None):
    """Serialize rows to CSV or JSON text.

    Every row must supply exactly the given columns.  CSV uses ``\\n``
    line endings; JSON keeps numbers as native values (parsed back they
    match to full float precision).  A status string, when given, is
    written as a leading ``# status:`` comment line (CSV) or a top-level
    ``"status"`` key (JSON); tables emitted for a failed run carry the
    failure there with zero rows.
    """
    for row in rows:
        missing = set(columns) - set(row)
        extra = set(row) - set(columns)
        if missing or extra:
            raise DomainError(
                f"row keys do not match columns (missing {sorted(missing)}, "
                f"extra {sorted(extra)})"
            )
    if fmt == "csv":
        buf = io.StringIO()
        if status is not None:
            buf.write(f"# status: {status}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        payload = {
            "columns": list(columns),
            "rows": [{c: row[c] for c in columns} for row in rows],
        }
        if status is not None:
            payload["status"] = status
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"
    raise DomainError(f"unknown format {fmt!r} (expected 'csv' or 'json')")


def table_status(text):
    """The status string of a rendered table, or None when absent."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return json.loads(text).get("status")
    for line in text.splitlines():
        if line.startswith("# status: "):
            return line[len("# status: "):]
        if not line.startswith("#"):
            break
    return None


def _parse_cell(text):
    if text == "":
        return None
    try:
        f = float(text)
    except ValueError:
        return text
    if f.is_integer() and "e" not in text and "E" not in text and "." not in text:
        return int(text)
    return f


def parse_table(text):
    """Parse a rendered table (either format) back to (columns, rows).

    Numeric cells come back as float (or int when written as int), empty
    cells as None; anything else stays a string.
    """
    stripped = text.lstrip()
    if stripped.startswith("{"):
        payload = json.loads(text)
        return tuple(payload["columns"]), [dict(r) for r in payload["rows"]]
    body = "\n".join(ln for ln in text.splitlines() if not ln.startswith("#"))
    reader = csv.reader(io.StringIO(body))
    header = tuple(next(reader))
    rows = [
        {c: _parse_cell(cell) for c, cell in zip(header, line)}
        for line in reader
        if line
    ]
    return header, rows


def sha256_hex(data):
    """Hex SHA-256 of bytes or text (text is hashed as UTF-8)."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def build_manifest(name, parameters, files, tolerances, non_paper_choices=(),
                   failures=None):
    """Assemble the manifest object for a multi-file run.

    files maps file name -> (content text, status string); every emitted
    file appears with its content hash and row count.  failures maps
    file name -> reason for runs that produced no file.  No timestamps:
    identical inputs give byte-identical manifests.
    """
    entries = {}
    for fname, (content, status) in files.items():
        data_lines = [
            ln for ln in content.splitlines() if ln and not ln.startswith("#")
        ]
        entries[fname] = {
            "sha256": sha256_hex(content),
            "bytes": len(content.encode("utf-8")),
            "rows": max(len(data_lines) - 1, 0),
            "status": status,
        }
    manifest = {
        "name": name,
        "code_version": __version__,
        "parameters": parameters,
        "tolerances": tolerances,
        "non_paper_choices": list(non_paper_choices),
        "files": entries,
    }
    if failures:
        manifest["failures"] = dict(failures)
    return manifest


def render_manifest(manifest):
    return json.dumps(manifest, sort_keys=True, indent=2) + "\n"
