"""Dataset manifests: JSON lines, one utterance per line.

Each record is ``{"id", "wav", "phones", "landmarks", "gaps"}`` where ``wav``
and ``landmarks`` are paths relative to the manifest's directory (absolute
paths are accepted too) and ``gaps`` is ``[[start_ms, dur_ms], ...]``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .corruption import GapPlan


@dataclass
class Record:
    id: str
    wav: Path
    phones: list
    landmarks: Path | None = None
    gaps: GapPlan = field(default_factory=GapPlan)

    def to_json(self, base: Path) -> str:
        def rel(p):
            if p is None:
                return None
            return Path(os.path.relpath(Path(p).resolve(), base.resolve())).as_posix()

        return json.dumps({"id": self.id, "wav": rel(self.wav), "phones": list(self.phones),
                           "landmarks": rel(self.landmarks), "gaps": self.gaps.to_list()})


def read_manifest(path) -> list[Record]:
    path = Path(path)
    base = path.parent
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = Record(
                    id=str(obj["id"]),
                    wav=base / obj["wav"],
                    phones=[int(p) for p in obj.get("phones", [])],
                    landmarks=base / obj["landmarks"] if obj.get("landmarks") else None,
                    gaps=GapPlan.from_list(obj.get("gaps", [])),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad manifest record ({exc})") from exc
            out.append(rec)
    return out


def write_manifest(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json(path.parent) + "\n")
