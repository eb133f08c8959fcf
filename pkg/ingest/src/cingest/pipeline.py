"""Walk a labeled source tree and assemble a dataset file plus a report.

Labels come from the immediate subdirectories of the input root: either an
explicit name -> integer table or, by default, the subdirectory names in
sorted order numbered 0..k-1. Files are visited in sorted path order, so
output is byte-stable for identical inputs. Files that fail to parse are
skipped and recorded, never fatal (unless nothing parses at all).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from cingest.convert import IngestError, ingest_source, record_to_line

log = logging.getLogger(__name__)


@dataclass
class IngestManifest:
    root: Path
    out_path: Path
    labels: dict[str, int] | None = None  # subdirectory name -> label
    strip_preprocessor: bool = True
    pattern: str = "*.c"

    def resolved_labels(self) -> dict[str, int]:
        if self.labels is not None:
            values = sorted(self.labels.values())
            if values != list(range(len(values))):
                raise IngestError(f"labels must be dense from 0, got {values}")
            return dict(self.labels)
        subdirs = sorted(p.name for p in Path(self.root).iterdir() if p.is_dir())
        if not subdirs:
            raise IngestError(f"no label subdirectories under {self.root}")
        return {name: i for i, name in enumerate(subdirs)}


@dataclass
class IngestReport:
    per_label: dict[int, int] = field(default_factory=dict)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.per_label.values())

    def lines(self) -> list[str]:
        out = [f"ingested {self.total} files across {len(self.per_label)} labels"]
        for label in sorted(self.per_label):
            out.append(f"  label {label}: {self.per_label[label]} files")
        if self.skipped:
            out.append(f"skipped {len(self.skipped)} files:")
            out.extend(f"  {path}: {reason}" for path, reason in self.skipped)
        return out

    def to_doc(self) -> dict:
        return {
            "total": self.total,
            "per_label": {str(k): v for k, v in sorted(self.per_label.items())},
            "skipped": [{"path": p, "reason": r} for p, r in self.skipped],
        }


def ingest_file(path, strip: bool = True) -> str:
    """One C file -> one interchange document line."""
    source = Path(path).read_text(encoding="utf-8", errors="replace")
    return record_to_line(ingest_source(source, strip=strip))


def ingest_corpus(manifest: IngestManifest) -> IngestReport:
    """Write one dataset line per successfully parsed file; return the report."""
    labels = manifest.resolved_labels()
    report = IngestReport(per_label={label: 0 for label in sorted(labels.values())})
    lines: list[str] = []
    for name in sorted(labels):
        label = labels[name]
        label_dir = Path(manifest.root) / name
        for path in sorted(label_dir.rglob(manifest.pattern)):
            try:
                source = path.read_text(encoding="utf-8", errors="replace")
                record = ingest_source(source, strip=manifest.strip_preprocessor)
            except IngestError as exc:
                log.info("skipping %s: %s", path, exc)
                report.skipped.append((str(path), str(exc)))
                continue
            lines.append(json.dumps({"label": label, "ast": record},
                                    separators=(",", ":"), ensure_ascii=False))
            report.per_label[label] += 1
    if report.total == 0:
        raise IngestError("no file parsed successfully; nothing to write")
    with open(manifest.out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
    return report
