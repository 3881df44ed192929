"""Append-only on-disk store for experiment artifacts.

Layout: one directory per scenario (named by the hash of its canonical
config JSON), one JSON-lines file per record kind inside it::

    <root>/<hash>/trials.jsonl        placement, observations, truth
    <root>/<hash>/predictions.jsonl   per-algorithm verdicts
    <root>/<hash>/reports.jsonl       pooled reports

Appending never rewrites existing lines, so a store can accumulate
reruns; the hash key guarantees records from different configs never
mix.  Records are plain dicts — the caller decides the schema, the store
only promises ordered, line-delimited JSON.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping


def scenario_hash(config: Mapping) -> str:
    """16-hex-digit key derived from the canonical config JSON.  Equal
    configs always collide; differing ones practically never do."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class CorrelationStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, key: str, kind: str) -> Path:
        return self.root / key / f"{kind}.jsonl"

    def append(self, key: str, kind: str, record: Mapping) -> None:
        path = self.path(key, kind)
        path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps(record, sort_keys=True, separators=(",", ":"))
        with path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def read(self, key: str, kind: str) -> list[dict]:
        """All records of one kind, oldest first; empty list when none."""
        path = self.path(key, kind)
        if not path.exists():
            return []
        return [
            json.loads(line)
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]

    def keys(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def kinds(self, key: str) -> list[str]:
        d = self.root / key
        if not d.is_dir():
            return []
        return sorted(p.stem for p in d.glob("*.jsonl"))
