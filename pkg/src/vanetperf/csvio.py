"""Reader for the CSV files this package writes."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, List


@dataclass(frozen=True)
class Table:
    header: List[str]
    rows: List[List[str]]

    def column(self, name: str, numeric: bool = True) -> list:
        k = self.header.index(name)
        vals = [row[k] for row in self.rows]
        return [float(v) for v in vals] if numeric else vals

    def records(self) -> List[Dict[str, str]]:
        return [dict(zip(self.header, row)) for row in self.rows]


def read_csv(path, expect_header=None) -> Table:
    """Read a CSV; if ``expect_header`` is given the header must match it exactly."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = [row for row in reader]
    if expect_header is not None and header != list(expect_header):
        raise ValueError(f"{path}: header {header} does not match {list(expect_header)}")
    for k, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{k}: expected {len(header)} fields, got {len(row)}")
    return Table(header, rows)
