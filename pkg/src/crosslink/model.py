"""Core domain types, MAC parsing and context-vector similarity."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractError, ParseError

_HEX_OCTET = re.compile(r"[0-9a-fA-F]{2}")

# A context vector is a 1-D boolean numpy array, one entry per session in
# manifest order.
ContextVector = np.ndarray


@dataclass(frozen=True, order=True)
class MacAddress:
    octets: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.octets) != 6:
            raise ContractError(f"MAC address needs 6 octets, got {len(self.octets)}")
        for o in self.octets:
            if not 0 <= o <= 0xFF:
                raise ContractError(f"octet out of range: {o}")

    def __str__(self) -> str:
        return ":".join(f"{o:02x}" for o in self.octets)

    @property
    def text(self) -> str:
        return str(self)

    @classmethod
    def parse(cls, text: str) -> MacAddress:
        return parse_mac(text)

    @property
    def is_locally_administered(self) -> bool:
        return is_locally_administered(self)

    @property
    def oui(self) -> tuple[int, int, int]:
        return oui_of(self)


def parse_mac(text: str) -> MacAddress:
    """Parse ``aa:bb:cc:dd:ee:ff`` (either case) into a :class:`MacAddress`."""
    if not isinstance(text, str):
        raise ParseError(f"MAC address must be a string, got {type(text).__name__}")
    stripped = text.strip()
    if not stripped:
        raise ParseError("empty MAC address")
    for sep in "-.":
        if sep in stripped:
            raise ParseError(f"wrong separator {sep!r} in MAC address {text!r}")
    tokens = stripped.split(":")
    if len(tokens) != 6:
        raise ParseError(f"MAC address {text!r} has {len(tokens)} octets, expected 6")
    for tok in tokens:
        if not _HEX_OCTET.fullmatch(tok):
            raise ParseError(f"bad octet {tok!r} in MAC address {text!r}")
    return MacAddress(tuple(int(t, 16) for t in tokens))


def format_mac(mac: MacAddress) -> str:
    return str(mac)


def is_locally_administered(mac: MacAddress) -> bool:
    # IEEE 802: the LA bit is mask 0x02 of the first transmitted octet.
    return (mac.octets[0] & 0x02) != 0


def oui_of(mac: MacAddress) -> tuple[int, int, int]:
    o = mac.octets
    return (o[0], o[1], o[2])


@dataclass(frozen=True)
class Session:
    id: str
    start: int
    end: int
    location: str = ""

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise ContractError(f"session {self.id!r}: start {self.start} >= end {self.end}")

    def contains(self, timestamp: int) -> bool:
        return self.start <= timestamp < self.end


@dataclass(frozen=True)
class Sighting:
    mac: MacAddress
    timestamp: int
    rss: int

    def __post_init__(self) -> None:
        if not -120 <= self.rss <= 0:
            raise ContractError(f"rss {self.rss} dBm outside [-120, 0]")


@dataclass(frozen=True, eq=False)
class BiometricSample:
    sample_id: str
    session_id: str
    embedding: np.ndarray
    true_label: str | None = None


@dataclass
class Dataset:
    sessions: Sequence[Session]
    samples: Sequence[BiometricSample]
    sightings: Sequence[Sighting] = ()
    registry: Mapping[MacAddress, str] | None = None
    _session_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._session_index = {}
        for i, s in enumerate(self.sessions):
            if s.id in self._session_index:
                raise ContractError(f"duplicate session id {s.id!r}")
            self._session_index[s.id] = i
        for sample in self.samples:
            if sample.session_id not in self._session_index:
                raise ContractError(
                    f"sample {sample.sample_id!r} references unknown session {sample.session_id!r}"
                )
        dims = {len(s.embedding) for s in self.samples}
        if len(dims) > 1:
            raise ContractError(f"samples have mixed embedding dimensions {sorted(dims)}")

    @property
    def session_index(self) -> dict[str, int]:
        return dict(self._session_index)

    @property
    def n_sessions(self) -> int:
        return len(self.sessions)

    def embedding_matrix(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, 0))
        return np.vstack([s.embedding for s in self.samples])

    def sample_session_indices(self) -> np.ndarray:
        return np.array([self._session_index[s.session_id] for s in self.samples], dtype=np.int64)


def session_index_map(sessions: Sequence[Session]) -> dict[str, int]:
    return {s.id: i for i, s in enumerate(sessions)}


def _as_bits(v) -> np.ndarray:
    return np.asarray(v).astype(bool).ravel()


def context_dice(a, b) -> float:
    """Dice coefficient of two binary attendance vectors; 0 when both are empty."""
    a, b = _as_bits(a), _as_bits(b)
    if a.shape != b.shape:
        raise ContractError(f"context vector length mismatch: {a.size} vs {b.size}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 0.0
    return 2.0 * int(np.count_nonzero(a & b)) / total


def context_euclidean_similarity(a, b) -> float:
    """``1 / (1 + ||a - b||)`` with bits read as 0/1 reals."""
    a, b = _as_bits(a), _as_bits(b)
    if a.shape != b.shape:
        raise ContractError(f"context vector length mismatch: {a.size} vs {b.size}")
    return 1.0 / (1.0 + math.sqrt(int(np.count_nonzero(a ^ b))))


def bits_to_str(v) -> str:
    return "".join("1" if x else "0" for x in _as_bits(v))


def bits_from_str(text: str) -> np.ndarray:
    if set(text) - {"0", "1"}:
        raise ParseError(f"context bits must be 0/1, got {text!r}")
    return np.array([c == "1" for c in text], dtype=bool)
