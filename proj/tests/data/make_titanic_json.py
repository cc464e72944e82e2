#!/usr/bin/env python3
"""Converts data/titanic.csv into JSON records for the ingest cross-format test.

Cells that read back as the same text after int/float conversion become JSON
numbers, empty cells become null, everything else stays a string.
"""
import csv
import json
import pathlib
import sys

root = pathlib.Path(__file__).resolve().parents[2]
src = root / "data" / "titanic.csv"
dst = pathlib.Path(__file__).resolve().parent / "titanic.json"


def convert(cell):
    if cell == "":
        return None
    for kind in (int, float):
        try:
            v = kind(cell)
        except ValueError:
            continue
        if repr(v) == cell or str(v) == cell:
            return v
    return cell


with open(src, newline="", encoding="utf-8") as f:
    records = [{k: convert(v) for k, v in row.items()} for row in csv.DictReader(f)]

dst.write_text(json.dumps(records, ensure_ascii=False, indent=0) + "\n", encoding="utf-8")
print(f"wrote {len(records)} records to {dst}", file=sys.stderr)
