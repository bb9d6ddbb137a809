"""Collects one result line per acceptance criterion for the terminal summary."""
from __future__ import annotations

LINES: list[str] = []


def record(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)


def order(line: str) -> int:
    return int(line.split(":")[0].split()[1])
