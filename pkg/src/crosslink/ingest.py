"""File loaders and writers for sessions, sightings, embeddings, registry and OUI data.

File formats (all UTF-8):

* sessions   -- JSONL ``{"id", "start_ms", "end_ms", "location"}``
* sightings  -- CSV ``timestamp_ms,mac,rss_dbm``
* embeddings -- JSONL ``{"sample_id", "session_id", "vector", "true_label"?}``
* registry   -- CSV ``mac,owner``
* OUI        -- CSV ``prefix,vendor`` with a 6-hex-digit prefix
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, ParseError
from .model import BiometricSample, Dataset, MacAddress, Session, Sighting, parse_mac

log = logging.getLogger(__name__)

PathLike = str | os.PathLike

SIGHTINGS_HEADER = ["timestamp_ms", "mac", "rss_dbm"]
REGISTRY_HEADER = ["mac", "owner"]
OUI_HEADER = ["prefix", "vendor"]


@dataclass(frozen=True)
class OuiDatabase:
    entries: Mapping[tuple[int, int, int], str] = field(default_factory=dict)

    def vendor(self, mac: MacAddress) -> str | None:
        return self.entries.get(mac.oui)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class SessionizedSightings:
    """Per-session maximum RSS of every MAC seen inside that session's window."""

    session_ids: list[str]
    per_session: dict[str, dict[MacAddress, int]]
    total: int = 0
    assigned: int = 0
    dropped: int = 0
    overlap_warnings: int = 0

    def macs(self) -> set[MacAddress]:
        out: set[MacAddress] = set()
        for seen in self.per_session.values():
            out.update(seen)
        return out


def _open_check(path: PathLike) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return p


def _reject(msg: str, *, line: int, path: Path, strict: bool, skipped: list | None) -> None:
    if strict:
        raise ParseError(msg, line=line, path=str(path))
    log.warning("%s:%d: skipping row: %s", path, line, msg)
    if skipped is not None:
        skipped.append((line, msg))


def _jsonl_rows(path: Path, strict: bool, skipped: list | None) -> Iterable[tuple[int, dict]]:
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                _reject(f"invalid JSON: {exc.msg}", line=lineno, path=path, strict=strict, skipped=skipped)
                continue
            if not isinstance(obj, dict):
                _reject("expected a JSON object", line=lineno, path=path, strict=strict, skipped=skipped)
                continue
            yield lineno, obj


def _csv_rows(path: Path, header: list[str]) -> Iterable[tuple[int, list[str]]]:
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return
        if [h.strip() for h in first] != header:
            raise ParseError(f"expected header {','.join(header)!r}, got {','.join(first)!r}", line=1, path=str(path))
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            yield reader.line_num, row


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def load_sessions(path: PathLike, *, strict: bool = True, skipped: list | None = None) -> list[Session]:
    """Load the session manifest sorted by start time (ties by id)."""
    p = _open_check(path)
    sessions: list[Session] = []
    seen: dict[str, int] = {}
    for lineno, obj in _jsonl_rows(p, strict, skipped):
        sid, start, end = obj.get("id"), obj.get("start_ms"), obj.get("end_ms")
        location = obj.get("location", "")
        if not isinstance(sid, str) or not sid:
            _reject("missing or non-string 'id'", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        if not (_is_int(start) and _is_int(end)):
            _reject(f"session {sid!r}: start_ms/end_ms must be integers", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        if start >= end:
            _reject(f"session {sid!r}: start_ms {start} >= end_ms {end}", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        if not isinstance(location, str):
            _reject(f"session {sid!r}: location must be a string", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        if sid in seen:
            _reject(f"duplicate session id {sid!r} (first on line {seen[sid]})", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        seen[sid] = lineno
        sessions.append(Session(sid, start, end, location))
    sessions.sort(key=lambda s: (s.start, s.id))
    return sessions


def load_sightings(path: PathLike, *, strict: bool = True, skipped: list | None = None) -> list[Sighting]:
    p = _open_check(path)
    out: list[Sighting] = []
    for lineno, row in _csv_rows(p, SIGHTINGS_HEADER):
        if len(row) != 3:
            _reject(f"expected 3 fields, got {len(row)}", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        ts_text, mac_text, rss_text = (c.strip() for c in row)
        try:
            ts = int(ts_text)
        except ValueError:
            _reject(f"bad timestamp {ts_text!r}", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        try:
            mac = parse_mac(mac_text)
        except ParseError as exc:
            _reject(str(exc), line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        try:
            rss = int(rss_text)
        except ValueError:
            _reject(f"non-integer rss {rss_text!r}", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        if not -120 <= rss <= 0:
            _reject(f"rss {rss} dBm outside [-120, 0]", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        out.append(Sighting(mac, ts, rss))
    return out


def load_embeddings(path: PathLike, *, strict: bool = True, skipped: list | None = None) -> list[BiometricSample]:
    """Load embeddings and L2-normalize each vector."""
    p = _open_check(path)
    out: list[BiometricSample] = []
    dim: int | None = None
    ids: set[str] = set()
    for lineno, obj in _jsonl_rows(p, strict, skipped):
        sample_id, session_id, vector = obj.get("sample_id"), obj.get("session_id"), obj.get("vector")
        label = obj.get("true_label")
        if not isinstance(sample_id, str) or not isinstance(session_id, str):
            _reject("sample_id and session_id must be strings", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        if sample_id in ids:
            _reject(f"duplicate sample_id {sample_id!r}", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        if label is not None and not isinstance(label, str):
            _reject("true_label must be a string when present", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        if not isinstance(vector, list) or not vector or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in vector
        ):
            _reject(f"sample {sample_id!r}: vector must be a non-empty list of numbers", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        vec = np.asarray(vector, dtype=np.float64)
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            # a dimension mismatch is never recoverable by skipping silently
            raise ParseError(f"sample {sample_id!r}: dimension {vec.size} != {dim}", line=lineno, path=str(p))
        norm = float(np.linalg.norm(vec))
        if not np.isfinite(norm) or norm == 0.0:
            _reject(f"sample {sample_id!r}: zero or non-finite vector cannot be normalized", line=lineno, path=p, strict=strict, skipped=skipped)
            continue
        ids.add(sample_id)
        out.append(BiometricSample(sample_id, session_id, vec / norm, label))
    return out


def load_registry(path: PathLike) -> dict[MacAddress, str]:
    p = _open_check(path)
    reg: dict[MacAddress, str] = {}
    for lineno, row in _csv_rows(p, REGISTRY_HEADER):
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno, path=str(p))
        try:
            mac = parse_mac(row[0])
        except ParseError as exc:
            raise ParseError(str(exc), line=lineno, path=str(p)) from None
        owner = row[1].strip()
        if not owner:
            raise ParseError("empty owner", line=lineno, path=str(p))
        if mac in reg:
            raise ParseError(f"duplicate registry MAC {mac}", line=lineno, path=str(p))
        reg[mac] = owner
    return reg


def load_oui(path: PathLike) -> OuiDatabase:
    p = _open_check(path)
    entries: dict[tuple[int, int, int], str] = {}
    for lineno, row in _csv_rows(p, OUI_HEADER):
        if len(row) < 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno, path=str(p))
        prefix = row[0].strip()
        vendor = ",".join(row[1:]).strip()
        if len(prefix) != 6:
            raise ParseError(f"OUI prefix {prefix!r} must be 6 hex digits", line=lineno, path=str(p))
        try:
            raw = bytes.fromhex(prefix)
        except ValueError:
            raise ParseError(f"malformed hex prefix {prefix!r}", line=lineno, path=str(p)) from None
        key = (raw[0], raw[1], raw[2])
        if key in entries:
            raise ParseError(f"duplicate OUI prefix {prefix!r}", line=lineno, path=str(p))
        entries[key] = vendor
    return OuiDatabase(entries)


def bundled_oui_path() -> Path:
    return Path(__file__).with_name("data") / "oui_sample.csv"


def load_dataset(
    sessions_path: PathLike,
    embeddings_path: PathLike,
    sightings_path: PathLike | None = None,
    registry_path: PathLike | None = None,
    *,
    strict: bool = True,
) -> Dataset:
    sessions = load_sessions(sessions_path, strict=strict)
    samples = load_embeddings(embeddings_path, strict=strict)
    sightings = load_sightings(sightings_path, strict=strict) if sightings_path else []
    registry = load_registry(registry_path) if registry_path else None
    return Dataset(sessions, samples, sightings, registry)


def sessionize(sightings: Sequence[Sighting], sessions: Sequence[Session]) -> SessionizedSightings:
    """Bind sightings to sessions on half-open ``[start, end)`` windows.

    Overlapping windows resolve to the earliest-starting session and bump
    ``overlap_warnings``. Sightings outside every window are dropped.
    """
    if not sessions:
        raise ContractError("sessionize needs at least one session")
    ordered = sorted(sessions, key=lambda s: (s.start, s.id))
    per_session: dict[str, dict[MacAddress, int]] = {s.id: {} for s in sessions}
    n = len(sightings)
    if n == 0:
        return SessionizedSightings([s.id for s in sessions], per_session, 0, 0, 0, 0)

    ts = np.fromiter((s.timestamp for s in sightings), dtype=np.int64, count=n)
    owner = np.full(n, -1, dtype=np.int64)
    hits = np.zeros(n, dtype=np.int64)
    for k, sess in enumerate(ordered):
        inside = (ts >= sess.start) & (ts < sess.end)
        hits += inside
        owner[inside & (owner < 0)] = k

    for i in np.flatnonzero(owner >= 0):
        sighting = sightings[i]
        seen = per_session[ordered[owner[i]].id]
        prev = seen.get(sighting.mac)
        if prev is None or sighting.rss > prev:
            seen[sighting.mac] = sighting.rss

    assigned = int(np.count_nonzero(owner >= 0))
    overlaps = int(np.count_nonzero(hits > 1))
    if overlaps:
        log.warning("%d sightings fall in overlapping session windows", overlaps)
    return SessionizedSightings(
        [s.id for s in sessions], per_session, n, assigned, n - assigned, overlaps
    )


# -- writers ---------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "), ensure_ascii=False)


def write_sessions(path: PathLike, sessions: Sequence[Session]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in sessions:
            fh.write(_dump({"id": s.id, "start_ms": s.start, "end_ms": s.end, "location": s.location}) + "\n")


def write_sightings(path: PathLike, sightings: Sequence[Sighting]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIGHTINGS_HEADER)
        for s in sightings:
            w.writerow([s.timestamp, str(s.mac), s.rss])


def write_embeddings(path: PathLike, samples: Sequence[BiometricSample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            obj = {"sample_id": s.sample_id, "session_id": s.session_id, "vector": [float(x) for x in s.embedding]}
            if s.true_label is not None:
                obj["true_label"] = s.true_label
            fh.write(_dump(obj) + "\n")


def write_registry(path: PathLike, registry: Mapping[MacAddress, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REGISTRY_HEADER)
        for mac in sorted(registry):
            w.writerow([str(mac), registry[mac]])


def write_oui(path: PathLike, db: OuiDatabase) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OUI_HEADER)
        for key in sorted(db.entries):
            w.writerow(["".join(f"{b:02X}" for b in key), db.entries[key]])


def load_truth(path: PathLike) -> tuple[dict[str, str], dict[MacAddress, str]]:
    """Read a truth manifest: ``{"sample_id", "subject"}`` and ``{"mac", "subject"}`` lines.

    Returns ``(sample labels, mac owners)``.
    """
    p = _open_check(path)
    labels: dict[str, str] = {}
    owners: dict[MacAddress, str] = {}
    for lineno, obj in _jsonl_rows(p, True, None):
        subject = obj.get("subject")
        if not isinstance(subject, str) or not subject:
            raise ParseError("missing 'subject'", line=lineno, path=str(p))
        if "sample_id" in obj:
            labels[str(obj["sample_id"])] = subject
        elif "mac" in obj:
            try:
                owners[parse_mac(obj["mac"])] = subject
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno, path=str(p)) from None
        else:
            raise ParseError("expected 'sample_id' or 'mac'", line=lineno, path=str(p))
    return labels, owners
