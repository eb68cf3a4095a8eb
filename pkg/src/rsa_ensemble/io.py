"""CSV and model-file reading and writing for the command line."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from rsa_ensemble.errors import InvalidInputError

SCHEMA_VERSION = 1


@dataclass
class Table:
    header: list
    columns: dict  # name -> list of raw strings

    @property
    def n_rows(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def numeric(self, names) -> np.ndarray:
        """Float matrix for ``names``; parse failures name the 1-based data row."""
        out = np.empty((self.n_rows, len(names)))
        for j, name in enumerate(names):
            if name not in self.columns:
                raise InvalidInputError(f"missing column {name!r}; header is {self.header}")
            for i, raw in enumerate(self.columns[name]):
                try:
                    v = float(raw)
                except ValueError:
                    raise InvalidInputError(
                        f"row {i + 1}, column {name!r}: cannot parse {raw!r} as a number"
                    ) from None
                if not np.isfinite(v):
                    raise InvalidInputError(f"row {i + 1}, column {name!r}: non-finite value {raw!r}")
                out[i, j] = v
        return out


def read_table(path) -> Table:
    """Read a header-first CSV with strict header and row-length checks."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from None
    except UnicodeDecodeError as exc:
        raise InvalidInputError(f"{path} is not valid UTF-8: {exc}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InvalidInputError(f"{path}: empty file, a header row is required")
    header = [h.strip() for h in rows[0]]
    for j, h in enumerate(header):
        if not h:
            raise InvalidInputError(f"{path}: header column {j + 1} is empty")
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise InvalidInputError(f"{path}: duplicate header names {dupes}")
    cols = {h: [] for h in header}
    for i, row in enumerate(rows[1:], start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise InvalidInputError(
                f"{path}: row {i} has {len(row)} fields, header has {len(header)}"
            )
        for h, v in zip(header, row):
            cols[h].append(v.strip())
    return Table(header, cols)


def fmt(x) -> str:
    """Shortest round-trip decimal representation of a float."""
    return repr(float(x))


def write_csv(path, header, rows, comments=()) -> None:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def model_to_dict(model, columns, y_column) -> dict:
    cfg = model.config
    probs = list(cfg.probs) if isinstance(cfg.probs, tuple) else cfg.probs
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "rsa_model",
        "y_column": y_column,
        "columns": list(columns),
        "config": {
            "p": probs,
            "M": cfg.M,
            "L": cfg.L,
            "first_round": cfg.first_round,
            "sigma2_mode": cfg.sigma2_mode,
            "sigma2": cfg.sigma2,
            "seed": cfg.seed,
        },
        "sigma2": float(model.sigma2),
        "effective_dim": float(model.effective_dim),
        "outer_weights": [float(v) for v in model.outer_weights.w],
        "groups": [
            {
                "weights": [float(v) for v in g.weights.w],
                "effective_dim": float(g.effective_dim),
                "masks": [c.mask.indices.tolist() for c in g.candidates],
            }
            for g in model.groups
        ],
        "beta_agg": [float(v) for v in model.beta_agg],
    }


@dataclass(frozen=True)
class LoadedModel:
    """Prediction-side view of a saved model."""

    columns: list
    y_column: str
    beta_agg: np.ndarray
    raw: dict


def load_model(path) -> LoadedModel:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read model file {path}: {exc}") from None
    if not isinstance(raw, dict) or raw.get("kind") != "rsa_model":
        raise InvalidInputError(f"{path} is not an rsa_model file")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise InvalidInputError(f"{path}: unsupported schema_version {raw.get('schema_version')!r}")
    beta = np.asarray(raw["beta_agg"], dtype=float)
    if len(raw["columns"]) != beta.shape[0]:
        raise InvalidInputError(f"{path}: columns and beta_agg lengths differ")
    return LoadedModel(list(raw["columns"]), raw["y_column"], beta, raw)
