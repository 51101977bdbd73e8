"""Reduce sniffed MAC addresses to candidate victim devices.

Three stages run in order: locally-administered (randomized) addresses,
infrastructure vendors looked up by OUI, and an RSS geo-fence. The report
also carries each stage's removal count measured independently over the
full input set, so overlapping categories can be tabulated either way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .ingest import OuiDatabase, SessionizedSightings, sessionize
from .model import Dataset, MacAddress, is_locally_administered

DEFAULT_VENDOR_BLACKLIST = ("tp-link", "cisco", "3com", "juniper", "linksys", "d-link", "netgear")
FACE_RSS_THRESHOLD = -55
VOICE_RSS_THRESHOLD = -45


@dataclass(frozen=True)
class FilterConfig:
    rss_threshold: int = FACE_RSS_THRESHOLD
    vendor_blacklist: tuple[str, ...] = DEFAULT_VENDOR_BLACKLIST
    drop_randomized: bool = True

    def __post_init__(self) -> None:
        if isinstance(self.rss_threshold, bool) or not isinstance(self.rss_threshold, (int, np.integer)):
            raise ConfigError(f"rss_threshold must be an integer dBm value, got {self.rss_threshold!r}")
        if not -120 <= self.rss_threshold <= 0:
            raise ConfigError(f"rss_threshold {self.rss_threshold} outside [-120, 0]")
        object.__setattr__(self, "vendor_blacklist", tuple(v.lower() for v in self.vendor_blacklist))


@dataclass
class FilterReport:
    input_distinct: int
    removed_randomized: int
    removed_vendor: int
    removed_rss: int
    survivors: list[MacAddress]
    # removal counts when each stage sees the full input set
    independent: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "input_distinct": self.input_distinct,
            "removed_randomized": self.removed_randomized,
            "removed_vendor": self.removed_vendor,
            "removed_rss": self.removed_rss,
            "independent": dict(sorted(self.independent.items())),
            "survivor_count": len(self.survivors),
            "survivors": [str(m) for m in self.survivors],
        }


def filter_randomized(macs: Iterable[MacAddress]) -> tuple[set[MacAddress], set[MacAddress]]:
    kept, removed = set(), set()
    for m in macs:
        (removed if is_locally_administered(m) else kept).add(m)
    return kept, removed


def vendor_is_blacklisted(vendor: str | None, blacklist: Sequence[str]) -> bool:
    if vendor is None:
        return False
    v = vendor.lower()
    return any(b.lower() in v for b in blacklist)


def filter_vendors(
    macs: Iterable[MacAddress], oui_db: OuiDatabase, blacklist: Sequence[str] = DEFAULT_VENDOR_BLACKLIST
) -> tuple[set[MacAddress], set[MacAddress]]:
    """Drop MACs whose OUI vendor matches a blacklist substring. Unknown OUIs stay."""
    kept, removed = set(), set()
    for m in macs:
        (removed if vendor_is_blacklisted(oui_db.vendor(m), blacklist) else kept).add(m)
    return kept, removed


def max_rss_by_mac(sessionized: SessionizedSightings) -> dict[MacAddress, int]:
    best: dict[MacAddress, int] = {}
    for seen in sessionized.per_session.values():
        for mac, rss in seen.items():
            if mac not in best or rss > best[mac]:
                best[mac] = rss
    return best


def filter_rss(
    sessionized: SessionizedSightings, threshold: int, macs: Iterable[MacAddress] | None = None
) -> tuple[set[MacAddress], set[MacAddress]]:
    """Keep a MAC iff some session's max RSS reaches ``threshold``.

    ``macs`` restricts the judged set; by default every sessionized MAC is judged.
    MACs never seen inside a session are removed.
    """
    best = max_rss_by_mac(sessionized)
    pool = set(best) if macs is None else set(macs)
    kept = {m for m in pool if m in best and best[m] >= threshold}
    return kept, pool - kept


def run_filter(dataset: Dataset, oui_db: OuiDatabase, config: FilterConfig | None = None,
               sessionized: SessionizedSightings | None = None) -> FilterReport:
    config = config or FilterConfig()
    if not dataset.sessions:
        raise ContractError("filtering needs at least one session")
    if sessionized is None:
        sessionized = sessionize(dataset.sightings, dataset.sessions)
    distinct = {s.mac for s in dataset.sightings}

    _, indep_random = filter_randomized(distinct)
    _, indep_vendor = filter_vendors(distinct, oui_db, config.vendor_blacklist)
    _, indep_rss = filter_rss(sessionized, config.rss_threshold, distinct)

    pool = distinct
    removed_random: set[MacAddress] = set()
    if config.drop_randomized:
        pool, removed_random = filter_randomized(pool)
    pool, removed_vendor = filter_vendors(pool, oui_db, config.vendor_blacklist)
    pool, removed_rss = filter_rss(sessionized, config.rss_threshold, pool)

    return FilterReport(
        input_distinct=len(distinct),
        removed_randomized=len(removed_random),
        removed_vendor=len(removed_vendor),
        removed_rss=len(removed_rss),
        survivors=sorted(pool),
        independent={
            "randomized": len(indep_random) if config.drop_randomized else 0,
            "vendor": len(indep_vendor),
            "rss": len(indep_rss),
        },
    )


def device_context_vectors(
    survivors: Sequence[MacAddress], sessionized: SessionizedSightings, threshold: int
) -> dict[MacAddress, np.ndarray]:
    """Attendance bits per device: bit j set iff max RSS in session j >= threshold."""
    g = len(sessionized.session_ids)
    out: dict[MacAddress, np.ndarray] = {}
    for mac in survivors:
        bits = np.zeros(g, dtype=bool)
        for j, sid in enumerate(sessionized.session_ids):
            rss = sessionized.per_session[sid].get(mac)
            if rss is not None and rss >= threshold:
                bits[j] = True
        out[mac] = bits
    return out


def device_matrix(vectors: dict[MacAddress, np.ndarray], macs: Sequence[MacAddress]) -> np.ndarray:
    if not macs:
        return np.zeros((0, 0), dtype=bool)
    return np.vstack([vectors[m] for m in macs])
