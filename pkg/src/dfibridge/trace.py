"""Event trace: newline-delimited flat JSON records with a stable key order."""
from __future__ import annotations

import json
from typing import Iterable, Iterator

KEY_ORDER = ("sys_cycle", "phy_cycle", "module", "kind")


class Trace:
    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.records: list[dict] = []

    def emit(self, sys_cycle: int, phy_cycle: int, module: str, kind: str, **payload) -> None:
        if not self.enabled:
            return
        rec = {"sys_cycle": sys_cycle, "phy_cycle": phy_cycle, "module": module, "kind": kind}
        rec.update(payload)
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[dict]:
        return iter(self.records)

    def dumps(self) -> str:
        return "".join(dumps_record(r) + "\n" for r in self.records)


NULL_TRACE = Trace(enabled=False)


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"))


def loads(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def iter_file(path) -> Iterable[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)
