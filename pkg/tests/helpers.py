"""Shared builders for tests."""

from __future__ import annotations

import numpy as np

from crosslink.ingest import OuiDatabase
from crosslink.linkage_tree import LinkageTree, build_tree_arrays
from crosslink.model import Dataset, MacAddress, Session, Sighting

BLACKLISTED_OUIS = {(0x00, 0x00, 0x0C): "Cisco Systems, Inc", (0x00, 0x09, 0x5B): "NETGEAR", (0x50, 0xC7, 0xBF): "TP-LINK TECHNOLOGIES CO.,LTD."}
CLEAN_OUIS = {(0x00, 0x03, 0x93): "Apple, Inc.", (0x00, 0x00, 0xF0): "Samsung Electronics Co.,Ltd"}
UNKNOWN_OUI = (0x00, 0x12, 0x34)


def two_leaf_tree() -> LinkageTree:
    """Leaves 0 and 1 under root 2."""
    return build_tree_arrays(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1], 2)


def random_tree(rng: np.random.Generator, n: int, g: int = 4, dim: int = 4) -> LinkageTree:
    x = rng.standard_normal((n, dim))
    return build_tree_arrays(x, rng.integers(0, g, n), g)


def synthetic_macs(m: int) -> list[MacAddress]:
    return [MacAddress((0, 0x11, 0x22, 0, j // 256, j % 256)) for j in range(m)]


def crafted_corpus(rng: np.random.Generator, n_sessions: int = 5, counts=(250, 250, 250, 250)):
    """Sightings for planted MAC categories: randomized, vendor, low-rss, clean.

    Randomized MACs carry blacklisted or clean OUIs at random and strong RSS,
    vendor MACs carry strong RSS, low-rss MACs carry clean OUIs, clean MACs
    use clean or unknown OUIs and reach -40 dBm in some session.
    """
    sessions = [Session(f"s{j}", j * 1000, j * 1000 + 500) for j in range(n_sessions)]
    oui = OuiDatabase({**BLACKLISTED_OUIS, **CLEAN_OUIS})
    cats: dict[str, set[MacAddress]] = {"randomized": set(), "vendor": set(), "rss": set(), "clean": set()}
    used: set[MacAddress] = set()
    sightings: list[Sighting] = []

    def fresh(head):
        while True:
            mac = MacAddress(tuple(head) + tuple(int(b) for b in rng.integers(0, 256, 3)))
            if mac not in used:
                used.add(mac)
                return mac

    def seen(mac, rss_values):
        for j, rss in enumerate(rss_values):
            if rss is not None:
                sightings.append(Sighting(mac, sessions[j].start + int(rng.integers(0, 500)), int(rss)))

    n_rand, n_vendor, n_rss, n_clean = counts
    for _ in range(n_rand):
        head = [int(rng.integers(0, 256)) | 0x02, int(rng.integers(0, 256)), int(rng.integers(0, 256))]
        mac = fresh(head)
        cats["randomized"].add(mac)
        seen(mac, [-35] * n_sessions)
    black = sorted(BLACKLISTED_OUIS)
    for _ in range(n_vendor):
        mac = fresh(black[int(rng.integers(len(black)))])
        cats["vendor"].add(mac)
        seen(mac, [-30] * n_sessions)
    clean = sorted(CLEAN_OUIS)
    for _ in range(n_rss):
        mac = fresh(clean[int(rng.integers(len(clean)))])
        cats["rss"].add(mac)
        seen(mac, [int(rng.integers(-90, -70)) for _ in range(n_sessions)])
    for _ in range(n_clean):
        head = clean[int(rng.integers(len(clean)))] if rng.random() < 0.8 else UNKNOWN_OUI
        mac = fresh(head)
        cats["clean"].add(mac)
        vals = [None if rng.random() < 0.5 else int(rng.integers(-90, -70)) for _ in range(n_sessions)]
        vals[int(rng.integers(n_sessions))] = -40
        seen(mac, vals)
    order = rng.permutation(len(sightings))
    dataset = Dataset(sessions, [], [sightings[i] for i in order])
    return dataset, oui, cats
