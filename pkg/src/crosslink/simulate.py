"""Seeded synthetic datasets with planted ground truth.

Subjects are Gaussian clusters on the unit sphere. Each session draws its
attendees independently, attendees leave embeddings, and victims' phones are
sighted by the sniffer together with several kinds of nuisance MACs.

Every random draw comes from a sub-stream keyed on what it describes (subject,
session, channel), so growing one knob leaves the other draws untouched.
"""

from __future__ import annotations

import dataclasses
import json
import os
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .device_filter import DEFAULT_VENDOR_BLACKLIST, vendor_is_blacklisted
from .errors import ConfigError
from .ingest import (
    bundled_oui_path,
    load_oui,
    write_embeddings,
    write_registry,
    write_sessions,
    write_sightings,
)
from .model import BiometricSample, MacAddress, Session, Sighting

BASE_TIME_MS = 1_700_000_000_000
SESSION_STRIDE_MS = 3_600_000
SESSION_LENGTH_MS = 1_800_000
ATTENDANCE_RETRIES = 10

# stream tags
_SUBJECT, _ATTEND, _SAMPLES, _DEVICE_MAC, _SIGHT, _RANDOMIZED, _INFRA, _DISTANT = range(8)
_VICTIM, _OOS = 0, 1

SWEEP_PARAMETERS = ("oos_subjects", "sessions", "rss_threshold", "omega")


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    victims: int = 50
    oos_subjects: int = 20
    sessions: int = 100
    embed_dim: int = 64
    embed_noise_sigma: float = 0.35
    samples_per_attendee_mean: float = 5.0
    victim_attend_prob_range: tuple[float, float] = (0.2, 0.8)
    oos_attend_prob_range: tuple[float, float] = (0.05, 0.3)
    device_miss_prob: float = 0.1
    phantom_prob: float = 0.05
    randomized_macs_per_session: int = 20
    infra_macs: int = 5
    distant_macs: int = 10
    rss_inside_range: tuple[int, int] = (-54, -30)
    rss_outside_range: tuple[int, int] = (-90, -60)

    def __post_init__(self) -> None:
        for name in ("victim_attend_prob_range", "oos_attend_prob_range", "rss_inside_range", "rss_outside_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        def need(ok: bool, msg: str) -> None:
            if not ok:
                raise ConfigError(msg)

        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer")
        need(self.victims >= 1, "victims must be >= 1")
        need(self.sessions >= 1, "sessions must be >= 1")
        need(self.oos_subjects >= 0, "oos_subjects must be >= 0")
        need(self.embed_dim >= 1, "embed_dim must be >= 1")
        need(self.embed_noise_sigma >= 0, "embed_noise_sigma must be >= 0")
        need(self.samples_per_attendee_mean >= 1, "samples_per_attendee_mean must be >= 1")
        for name in ("device_miss_prob", "phantom_prob"):
            need(0.0 <= getattr(self, name) <= 1.0, f"{name} must lie in [0, 1]")
        for name in ("victim_attend_prob_range", "oos_attend_prob_range"):
            r = getattr(self, name)
            need(len(r) == 2 and 0.0 <= r[0] <= r[1] <= 1.0, f"{name} must be an ordered pair in [0, 1]")
        for name in ("rss_inside_range", "rss_outside_range"):
            r = getattr(self, name)
            need(len(r) == 2 and -120 <= r[0] <= r[1] <= 0, f"{name} must be an ordered pair in [-120, 0]")
        for name in ("randomized_macs_per_session", "infra_macs", "distant_macs"):
            need(getattr(self, name) >= 0, f"{name} must be >= 0")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> SimConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown simulation settings: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class SimResult:
    sessions: list[Session]
    samples: list[BiometricSample]
    sightings: list[Sighting]
    registry: dict[MacAddress, str]
    attendance: np.ndarray  # subjects x sessions, victims first
    subjects: list[str]
    randomized: set[MacAddress]
    infra: set[MacAddress]
    distant: set[MacAddress]


def _rng(config: SimConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, *key])


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


class _MacPool:
    """Hands out distinct MACs; redraws on collision."""

    def __init__(self):
        self.used: set[MacAddress] = set()

    def draw(self, rng: np.random.Generator, ouis: Sequence[tuple[int, int, int]] | None) -> MacAddress:
        while True:
            tail = tuple(int(b) for b in rng.integers(0, 256, 3))
            if ouis is None:
                first = (int(rng.integers(0, 256)) | 0x02) & 0xFE
                head = (first, *(int(b) for b in rng.integers(0, 256, 2)))
            else:
                head = ouis[int(rng.integers(len(ouis)))]
            mac = MacAddress(head + tail)
            if mac not in self.used:
                self.used.add(mac)
                return mac


def subject_names(config: SimConfig) -> list[str]:
    width = max(3, len(str(max(config.victims, config.oos_subjects))))
    return [f"victim-{i:0{width}d}" for i in range(config.victims)] + [
        f"oos-{i:0{width}d}" for i in range(config.oos_subjects)
    ]


def simulate(config: SimConfig) -> SimResult:
    """Build the dataset in memory."""
    p, q, g = config.victims, config.oos_subjects, config.sessions
    keys = [(_VICTIM, i) for i in range(p)] + [(_OOS, i) for i in range(q)]
    names = subject_names(config)

    means = np.empty((p + q, config.embed_dim))
    rates = np.empty(p + q)
    for s, (kind, idx) in enumerate(keys):
        rng = _rng(config, _SUBJECT, kind, idx)
        means[s] = _unit(rng.standard_normal(config.embed_dim))
        lo, hi = config.victim_attend_prob_range if kind == _VICTIM else config.oos_attend_prob_range
        rates[s] = rng.uniform(lo, hi)

    sessions = [
        Session(
            f"S{j:04d}",
            BASE_TIME_MS + j * SESSION_STRIDE_MS,
            BASE_TIME_MS + j * SESSION_STRIDE_MS + SESSION_LENGTH_MS,
            "site-a",
        )
        for j in range(g)
    ]

    attendance = np.zeros((p + q, g), dtype=bool)
    for j in range(g):
        for attempt in range(ATTENDANCE_RETRIES + 1):
            row = np.array(
                [_rng(config, _ATTEND, j, attempt, kind, idx).random() < rates[s] for s, (kind, idx) in enumerate(keys)],
                dtype=bool,
            )
            if row.any():
                break
        attendance[:, j] = row

    samples: list[BiometricSample] = []
    for j, sess in enumerate(sessions):
        for s in np.flatnonzero(attendance[:, j]):
            kind, idx = keys[s]
            rng = _rng(config, _SAMPLES, j, kind, idx)
            count = 1 + int(rng.poisson(config.samples_per_attendee_mean - 1.0))
            noise = rng.standard_normal((count, config.embed_dim))
            vecs = _unit(means[s][None, :] + config.embed_noise_sigma * noise)
            for n in range(count):
                samples.append(BiometricSample(f"{sess.id}-{names[s]}-{n:02d}", sess.id, vecs[n], names[s]))

    oui_db = load_oui(bundled_oui_path())
    device_ouis, infra_ouis = [], []
    for key in sorted(oui_db.entries):
        bad = vendor_is_blacklisted(oui_db.entries[key], DEFAULT_VENDOR_BLACKLIST)
        if key[0] & 0x03 == 0:
            (infra_ouis if bad else device_ouis).append(key)

    pool = _MacPool()
    registry: dict[MacAddress, str] = {}
    victim_macs = []
    for i in range(p):
        mac = pool.draw(_rng(config, _DEVICE_MAC, i), device_ouis)
        victim_macs.append(mac)
        registry[mac] = names[i]
    infra = [pool.draw(_rng(config, _INFRA, i), infra_ouis) for i in range(config.infra_macs)]
    distant = [pool.draw(_rng(config, _DISTANT, i), device_ouis) for i in range(config.distant_macs)]
    randomized: set[MacAddress] = set()

    in_lo, in_hi = config.rss_inside_range
    out_lo, out_hi = config.rss_outside_range
    sightings: list[Sighting] = []

    def sight(rng, mac, sess, lo, hi):
        for _ in range(1 + int(rng.integers(0, 3))):
            t = int(rng.integers(sess.start, sess.end))
            sightings.append(Sighting(mac, t, int(rng.integers(lo, hi + 1))))

    for j, sess in enumerate(sessions):
        for i, mac in enumerate(victim_macs):
            rng = _rng(config, _SIGHT, j, i)
            u = rng.random()
            if attendance[i, j]:
                if u >= config.device_miss_prob:
                    sight(rng, mac, sess, in_lo, in_hi)
            elif u < config.phantom_prob:
                sight(rng, mac, sess, in_lo, in_hi)
        rng = _rng(config, _RANDOMIZED, j)
        for _ in range(config.randomized_macs_per_session):
            mac = pool.draw(rng, None)
            randomized.add(mac)
            sight(rng, mac, sess, in_lo, in_hi)
        for i, mac in enumerate(infra):
            sight(_rng(config, _INFRA, i, j), mac, sess, in_lo, in_hi)
        for i, mac in enumerate(distant):
            sight(_rng(config, _DISTANT, i, j), mac, sess, out_lo, out_hi)

    sightings.sort(key=lambda s: (s.timestamp, s.mac, s.rss))
    return SimResult(
        sessions, samples, sightings, registry, attendance, names, randomized, set(infra), set(distant)
    )


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_result(result: SimResult, config: SimConfig, out_dir: str | os.PathLike) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_sessions(out / "sessions.jsonl", result.sessions)
    write_sightings(out / "sightings.csv", result.sightings)
    # labels live only in the truth manifest
    write_embeddings(
        out / "embeddings.jsonl",
        [BiometricSample(s.sample_id, s.session_id, s.embedding) for s in result.samples],
    )
    write_registry(out / "registry.csv", result.registry)
    shutil.copyfile(bundled_oui_path(), out / "oui.csv")
    with open(out / "truth.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for s in result.samples:
            fh.write(json.dumps({"sample_id": s.sample_id, "subject": s.true_label}) + "\n")
        for mac in sorted(result.registry):
            fh.write(json.dumps({"mac": str(mac), "subject": result.registry[mac]}) + "\n")
    _write_json(out / "config.json", config.to_dict())
    return out


def generate(config: SimConfig, out_dir: str | os.PathLike) -> Path:
    """Simulate and write the five input files plus ``truth.jsonl`` and ``config.json``."""
    return write_result(simulate(config), config, out_dir)


def sweep(base: SimConfig, parameter: str, values: Sequence, out_dir: str | os.PathLike) -> list[Path]:
    """One dataset per value; item ``i`` uses seed ``base.seed + i``.

    ``rss_threshold`` and ``omega`` act at evaluation time, so those sweeps
    write the same base scenario once per value (with its own seed) and the
    value is applied by the caller.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")
    out = Path(out_dir)
    dirs = []
    for i, value in enumerate(values):
        changes = {"seed": base.seed + i}
        if parameter in ("oos_subjects", "sessions"):
            changes[parameter] = int(value)
        cfg = dataclasses.replace(base, **changes)
        dirs.append(generate(cfg, out / f"{parameter}-{i:03d}"))
    return dirs
