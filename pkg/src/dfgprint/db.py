"""On-disk fingerprint database: one fingerprint file per entry plus ``index.json``."""

from __future__ import annotations

import json
import re
import zlib
from pathlib import Path

from dfgprint.traceio import FingerprintRecord, FormatError, dumps_fingerprint, loads_fingerprint

INDEX = "index.json"
INDEX_VERSION = 1
_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class DbError(ValueError):
    pass


class FingerprintDb:
    def __init__(self, root):
        self.root = Path(root)
        self.index_path = self.root / INDEX
        if self.index_path.exists():
            try:
                data = json.loads(self.index_path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise DbError(f"{self.index_path}: corrupt index ({exc})") from None
            if data.get("version") != INDEX_VERSION:
                raise DbError(f"{self.index_path}: unsupported index version {data.get('version')!r}")
            self.entries: dict[str, dict] = data["entries"]
        else:
            self.entries = {}

    @classmethod
    def create(cls, root) -> "FingerprintDb":
        db = cls(root)
        db.root.mkdir(parents=True, exist_ok=True)
        if not db.index_path.exists():
            db._save()
        return db

    def _save(self) -> None:
        data = {"version": INDEX_VERSION, "entries": dict(sorted(self.entries.items()))}
        tmp = self.index_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(self.index_path)

    def names(self) -> list[str]:
        return sorted(self.entries)

    def add(self, rec: FingerprintRecord, threshold: float | None = None, replace: bool = False) -> None:
        if not _NAME.match(rec.name):
            raise DbError(f"invalid fingerprint name {rec.name!r} (use letters, digits, . _ -)")
        if rec.name in self.entries and not replace:
            raise DbError(f"fingerprint {rec.name!r} already in database; remove it first")
        if threshold is not None and not 0 <= threshold <= 1:
            raise DbError("threshold must be in [0, 1]")
        self.root.mkdir(parents=True, exist_ok=True)
        text = dumps_fingerprint(rec)
        fname = f"{rec.name}.fp"
        (self.root / fname).write_text(text, encoding="utf-8")
        self.entries[rec.name] = {
            "path": fname,
            "checksum": f"{zlib.crc32(text.encode('utf-8')) & 0xFFFFFFFF:08x}",
            "params": rec.params,
            "threshold": threshold,
            "vertices": len(rec.graph),
            "edges": rec.graph.num_edges,
        }
        self._save()

    def remove(self, name: str) -> None:
        entry = self.entries.pop(name, None)
        if entry is None:
            raise DbError(f"no fingerprint named {name!r}")
        (self.root / entry["path"]).unlink(missing_ok=True)
        self._save()

    def load(self, name: str) -> FingerprintRecord:
        try:
            entry = self.entries[name]
        except KeyError:
            raise DbError(f"no fingerprint named {name!r}") from None
        path = self.root / entry["path"]
        if not path.exists():
            raise DbError(f"index lists {name!r} but {path} is missing")
        text = path.read_text(encoding="utf-8")
        crc = f"{zlib.crc32(text.encode('utf-8')) & 0xFFFFFFFF:08x}"
        if crc != entry["checksum"]:
            raise DbError(f"{path} does not match its index checksum; re-add it")
        rec = loads_fingerprint(text)
        if rec.name != name:
            raise DbError(f"{path} holds {rec.name!r}, index says {name!r}")
        return rec

    def threshold(self, name: str) -> float | None:
        return self.entries[name].get("threshold")

    def check(self) -> list[str]:
        """Inconsistencies between the index and the directory."""
        problems = []
        listed = {e["path"] for e in self.entries.values()}
        for name in self.names():
            try:
                self.load(name)
            except (DbError, FormatError) as exc:
                problems.append(str(exc))
        for p in sorted(self.root.glob("*.fp")):
            if p.name not in listed:
                problems.append(f"{p} is not in the index")
        return problems
