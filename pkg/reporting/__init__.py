# Reporting module for the run ledger and CSV analysis artifacts
from .ledger import (
    LEDGER_VERSION, LEDGER_FIELDS, LedgerError, RunLedger, run_id, write_rows_csv, write_matrix_csv,
    write_alpha_csv, read_alpha_csv, read_int_column, read_clusters
)

__all__ = ['LEDGER_VERSION', 'LEDGER_FIELDS', 'LedgerError', 'RunLedger', 'run_id', 'write_rows_csv',
           'write_matrix_csv', 'write_alpha_csv', 'read_alpha_csv', 'read_int_column', 'read_clusters']
