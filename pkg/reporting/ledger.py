import csv
import hashlib
import json
import logging
import math
import os
import threading

import numpy as np

logger = logging.getLogger("RunLedger")

LEDGER_VERSION = 1
LEDGER_FIELDS = [
    "ledger_version", "run_id", "dataset", "variant", "num_factors", "hidden", "num_layers", "dis_weight",
    "beta", "lr", "seed", "train_ratio", "test_accuracy", "test_macro_f1", "test_micro_f1",
    "factor_auc", "factor_ari", "wall_seconds",
]


class LedgerError(ValueError):
    """Raised when an existing ledger has a different header."""


def run_id(config):
    """Stable 12-character id: md5 of the sorted-key JSON of a resolved configuration."""
    encoded = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str).encode("utf-8")
    return hashlib.md5(encoded).hexdigest()[:12]


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    if isinstance(value, (np.integer,)):
        return int(value)
    if value is None:
        return ""
    return value


class RunLedger:
    """
    Append-only CSV of completed runs, one row per run.

    Appends from several threads are serialised by a lock; the header is
    written once and checked on every later append.
    """

    def __init__(self, path):
        """
        Initialize the ledger.

        Args:
            path (str): CSV file (created on first append)
        """
        self.path = path
        self.lock = threading.Lock()
        logger.info(f"Run ledger at {path}")

    def _check_header(self):
        with open(self.path, newline="") as f:
            header = next(csv.reader(f), None)
        if header != LEDGER_FIELDS:
            raise LedgerError(f"{self.path}: ledger header does not match version {LEDGER_VERSION}")

    def append(self, row):
        """
        Append one run.

        Args:
            row (dict): Values for LEDGER_FIELDS (missing fields are left blank)
        """
        record = {name: _cell(row.get(name)) for name in LEDGER_FIELDS}
        record["ledger_version"] = LEDGER_VERSION
        with self.lock:
            exists = os.path.exists(self.path) and os.path.getsize(self.path) > 0
            if exists:
                self._check_header()
            directory = os.path.dirname(self.path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(self.path, "a", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=LEDGER_FIELDS)
                if not exists:
                    writer.writeheader()
                writer.writerow(record)
        logger.info(f"Ledger row appended for run {record['run_id']}")

    def rows(self):
        """All rows as dicts of strings (empty list when the ledger does not exist)."""
        if not os.path.exists(self.path):
            return []
        self._check_header()
        with open(self.path, newline="") as f:
            return list(csv.DictReader(f))


def _prepare(path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_rows_csv(path, rows, fields=None):
    """
    Write a list of dicts as CSV in the given order.

    Args:
        path (str): Output file
        rows (list): Row dicts
        fields (list): Column order (default: keys of the first row)
    """
    fields = fields or (list(rows[0].keys()) if rows else [])
    _prepare(path)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k)) for k in fields})
    logger.info(f"Wrote {len(rows)} rows to {path}")


def write_matrix_csv(path, matrix, row_label="row", col_prefix="col"):
    """Square or rectangular matrix with an index column and numbered headers."""
    matrix = np.asarray(matrix, dtype=np.float64)
    fields = [row_label] + [f"{col_prefix}_{j}" for j in range(matrix.shape[1])]
    rows = [dict(zip(fields, [i] + [float(x) for x in matrix[i]])) for i in range(matrix.shape[0])]
    write_rows_csv(path, rows, fields)


def write_alpha_csv(path, alpha, empty=None):
    """
    Relevance matrix export: one row per hyperedge in index order.

    Columns: hyperedge, empty (1 for hyperedges without members), factor_0 … factor_{K-1}.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    empty = np.zeros(alpha.shape[0], dtype=bool) if empty is None else np.asarray(empty, dtype=bool)
    fields = ["hyperedge", "empty"] + [f"factor_{k}" for k in range(alpha.shape[1])]
    rows = [dict(zip(fields, [i, int(empty[i])] + [float(x) for x in alpha[i]])) for i in range(alpha.shape[0])]
    write_rows_csv(path, rows, fields)


def read_alpha_csv(path):
    """
    Read a relevance matrix written by write_alpha_csv.

    A file without the 'empty' column is accepted; every hyperedge then counts as non-empty.

    Returns:
        tuple: (M×K float array, M boolean empty flags)
    """
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        fields = reader.fieldnames or []
        factor_cols = [c for c in fields if c.startswith("factor_")]
        if not factor_cols:
            raise ValueError(f"{path}: no factor_<k> columns")
        factor_cols.sort(key=lambda c: int(c.split("_", 1)[1]))
        values, empty = [], []
        for row in reader:
            values.append([float(row[c]) for c in factor_cols])
            empty.append(bool(int(row["empty"])) if "empty" in row and row["empty"] != "" else False)
    alpha = np.array(values, dtype=np.float64).reshape(len(values), len(factor_cols))
    return alpha, np.array(empty, dtype=bool)


def read_int_column(path, column):
    """One integer column of a CSV file, in row order."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if column not in (reader.fieldnames or []):
            raise ValueError(f"{path}: missing column {column!r}")
        return np.array([int(row[column]) for row in reader], dtype=np.int64)


def read_clusters(path):
    """
    Hyperedge clusters from a CSV with columns hyperedge, cluster.

    Returns:
        list: Hyperedge index lists, ordered by cluster id
    """
    edges = read_int_column(path, "hyperedge")
    labels = read_int_column(path, "cluster")
    return [sorted(edges[labels == c].tolist()) for c in np.unique(labels)]
