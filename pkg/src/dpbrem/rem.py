"""Radio Environment Map storage: exhaustive exploration results per drop.

File format (text, one entry per line)::

    remv1,<state_dim>
    drop_id,mask,reward,cell_edge_bps,mean_bps,all_connected,s_0,...,s_{D-1}

Floats are written with ``repr`` so a save/load round trip is exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import encode_drop
from .netsim import argmax_pattern, build_links, evaluate_pattern, reward

SCHEMA = "remv1"


class RemFormatError(ValueError):
    pass


class DuplicateEntryError(KeyError):
    pass


@dataclass(frozen=True)
class RemEntry:
    drop_id: int
    state: tuple
    pattern: int
    reward: float
    cell_edge_bps: float
    mean_bps: float
    all_connected: bool

    def __post_init__(self):
        if not self.all_connected and self.reward != 0.0:
            raise ValueError("disconnecting patterns must carry zero reward")
        if self.pattern < 0:
            raise ValueError("negative pattern mask")

    @property
    def key(self) -> tuple:
        return (self.drop_id, self.pattern)


class RemStore:
    """In-memory REM with (drop_id, pattern) uniqueness."""

    def __init__(self, entries=()):
        self.entries: list[RemEntry] = []
        self._index: dict[tuple, int] = {}
        for e in entries:
            self.record(e)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other):
        return isinstance(other, RemStore) and self.entries == other.entries

    def record(self, entry: RemEntry) -> None:
        if entry.key in self._index:
            raise DuplicateEntryError(
                f"drop {entry.drop_id} pattern {entry.pattern} already recorded; "
                "clear the store before re-exploring")
        if self.entries and len(entry.state) != len(self.entries[0].state):
            raise ValueError("state dimension differs from existing entries")
        self._index[entry.key] = len(self.entries)
        self.entries.append(entry)

    def get(self, drop_id: int, pattern: int) -> RemEntry:
        return self.entries[self._index[(drop_id, pattern)]]

    def drop_ids(self) -> list[int]:
        return sorted({e.drop_id for e in self.entries})

    def for_drop(self, drop_id: int) -> list[RemEntry]:
        return sorted((e for e in self.entries if e.drop_id == drop_id), key=lambda e: e.pattern)

    @property
    def state_dim(self) -> int:
        return len(self.entries[0].state) if self.entries else 0

    @property
    def n_patterns(self) -> int:
        # K = N + 1 clusters, three features each
        return 1 << (self.state_dim // 3 - 1)

    def states(self) -> np.ndarray:
        return np.array([e.state for e in self.entries])

    def actions(self) -> np.ndarray:
        return np.array([e.pattern for e in self.entries], dtype=int)

    def rewards(self) -> np.ndarray:
        return np.array([e.reward for e in self.entries])


def explore_all(deployment, drop, horizon: int = 100, reward_scale_bps: float = 1e8,
                links=None, **sim_kwargs) -> list[RemEntry]:
    """Evaluate every muting pattern on one drop."""
    if links is None:
        links = build_links(deployment, drop)
    state = tuple(float(v) for v in encode_drop(deployment, drop))
    out = []
    for mask in range(deployment.n_patterns):
        res = evaluate_pattern(deployment, drop, mask, horizon, links, **sim_kwargs)
        out.append(RemEntry(
            drop_id=drop.drop_id, state=state, pattern=mask,
            reward=reward(res, reward_scale_bps),
            cell_edge_bps=res.cell_edge_tput, mean_bps=res.mean_tput,
            all_connected=res.all_connected,
        ))
    return out


def best_pattern(store: RemStore, drop_id: int) -> int:
    entries = store.for_drop(drop_id)
    n = store.n_patterns
    if [e.pattern for e in entries] != list(range(n)):
        raise ValueError(f"drop {drop_id} has {len(entries)} of {n} patterns explored")
    return argmax_pattern([e.reward for e in entries])


def _format_entry(e: RemEntry) -> str:
    fields = [str(e.drop_id), str(e.pattern), repr(e.reward), repr(e.cell_edge_bps),
              repr(e.mean_bps), "1" if e.all_connected else "0"]
    fields += [repr(v) for v in e.state]
    return ",".join(fields)


def save(store: RemStore, path) -> None:
    lines = [f"{SCHEMA},{store.state_dim}"]
    lines += [_format_entry(e) for e in store.entries]
    Path(path).write_text("\n".join(lines) + "\n")


def load(path) -> RemStore:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise RemFormatError("line 1: empty file, expected header")
    head = lines[0].split(",")
    if len(head) != 2 or head[0] != SCHEMA or not head[1].isdigit():
        raise RemFormatError(f"line 1: bad header {lines[0]!r}, expected '{SCHEMA},<state_dim>'")
    dim = int(head[1])
    store = RemStore()
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 6 + dim:
            raise RemFormatError(f"line {lineno}: expected {6 + dim} fields, got {len(parts)}")
        try:
            if parts[5] not in ("0", "1"):
                raise ValueError(f"bad connectivity flag {parts[5]!r}")
            entry = RemEntry(
                drop_id=int(parts[0]), pattern=int(parts[1]), reward=float(parts[2]),
                cell_edge_bps=float(parts[3]), mean_bps=float(parts[4]),
                all_connected=parts[5] == "1",
                state=tuple(float(v) for v in parts[6:]),
            )
            store.record(entry)
        except (ValueError, KeyError) as exc:
            raise RemFormatError(f"line {lineno}: {exc}") from exc
    return store
