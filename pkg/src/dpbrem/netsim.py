"""Single HetNet cell: deployment, UE drops, association, PF MU-MIMO scheduling.

Muting patterns are plain ints: bit ``i - 1`` set means pico BS ``i`` is
active. The macro BS (id 0) is outside the mask and always transmits.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .radio import (
    BaseStation,
    gen_channel,
    rss,
    rzf_precode,
    thermal_noise_w,
)

MACRO_ID = 0


class CoverageError(RuntimeError):
    """Raised when a drop cannot satisfy the coverage threshold."""


@dataclass(frozen=True)
class Deployment:
    stations: tuple
    bandwidth_hz: float = 3.0e8
    carrier_hz: float = 3.5e9
    noise_figure_db: float = 9.0
    arena_half_width: float = 350.0
    corr_rho: float = 0.5
    shadow_sigma_db: float = 6.0
    min_rss_dbm: float = -100.0

    def __post_init__(self):
        if not self.stations or self.stations[0].kind != "macro" or self.stations[0].id != MACRO_ID:
            raise ValueError("deployment needs exactly one macro BS at id 0")
        if any(bs.kind != "pico" for bs in self.stations[1:]):
            raise ValueError("only BS 0 may be a macro")
        if self.n_pico < 1:
            raise ValueError("deployment needs at least one pico BS")
        for i, bs in enumerate(self.stations):
            if bs.id != i:
                raise ValueError("BS ids must be 0..N in order")

    @property
    def n_bs(self) -> int:
        return len(self.stations)

    @property
    def n_pico(self) -> int:
        return len(self.stations) - 1

    @property
    def n_patterns(self) -> int:
        return 1 << self.n_pico

    @property
    def all_active(self) -> int:
        return self.n_patterns - 1

    @property
    def noise_power_w(self) -> float:
        return thermal_noise_w(self.bandwidth_hz, self.noise_figure_db)

    @property
    def bs_positions(self) -> np.ndarray:
        return np.array([[bs.x, bs.y] for bs in self.stations])


@dataclass(frozen=True)
class UeDrop:
    drop_id: int
    seed: int
    positions: np.ndarray = field(compare=False)

    @property
    def n_ue(self) -> int:
        return len(self.positions)

    def __eq__(self, other):
        if not isinstance(other, UeDrop):
            return NotImplemented
        return (self.drop_id == other.drop_id and self.seed == other.seed
                and np.array_equal(self.positions, other.positions))


@dataclass(frozen=True)
class EvalResult:
    per_ue_throughput: tuple
    cell_edge_tput: float
    mean_tput: float
    all_connected: bool


@dataclass
class LinkTable:
    """Per-drop channel state, shared by every pattern evaluated on the drop."""

    rss_dbm: np.ndarray       # (n_bs, n_ue)
    channels: list            # per BS: (n_ue, M_b) complex, rows are h_{b,u}


def deploy(n_pico: int = 5, ring_radius: float = 200.0, macro_antennas: int = 128,
           pico_antennas: int = 16, macro_power_dbm: float = 46.0,
           pico_power_dbm: float = 30.0, **params) -> Deployment:
    """Macro at the origin, ``n_pico`` picos evenly spaced on a ring."""
    if n_pico < 1:
        raise ValueError(f"need at least one pico BS, got {n_pico}")
    stations = [BaseStation(MACRO_ID, 0.0, 0.0, macro_antennas, macro_power_dbm, "macro")]
    for k in range(n_pico):
        theta = math.radians(360.0 * k / n_pico)
        stations.append(BaseStation(k + 1, ring_radius * math.cos(theta),
                                    ring_radius * math.sin(theta),
                                    pico_antennas, pico_power_dbm, "pico"))
    return Deployment(stations=tuple(stations), **params)


def active_ids(deployment: Deployment, pattern: int) -> list[int]:
    if not 0 <= pattern < deployment.n_patterns:
        raise ValueError(f"pattern {pattern} outside [0, {deployment.n_patterns})")
    return [MACRO_ID] + [i for i in range(1, deployment.n_bs) if pattern >> (i - 1) & 1]


def n_active(pattern: int) -> int:
    return bin(pattern).count("1")


def rss_matrix(deployment: Deployment, positions: np.ndarray, seed: int) -> np.ndarray:
    out = np.empty((deployment.n_bs, len(positions)))
    for bs in deployment.stations:
        for u, pos in enumerate(positions):
            out[bs.id, u] = rss(bs, pos, u, seed, deployment.shadow_sigma_db)
    return out


def drop_ues(deployment: Deployment, n_ue: int, seed: int, drop_id: int = 0,
             max_attempts: int = 100) -> UeDrop:
    """Uniform UE drop over the arena, redrawn until every UE is covered."""
    if n_ue < 1:
        raise ValueError("need at least one UE")
    rng = np.random.default_rng(seed)
    hw = deployment.arena_half_width
    for _ in range(max_attempts):
        positions = rng.uniform(-hw, hw, size=(n_ue, 2))
        best = rss_matrix(deployment, positions, seed).max(axis=0)
        if np.all(best >= deployment.min_rss_dbm):
            return UeDrop(drop_id=drop_id, seed=seed, positions=positions)
    raise CoverageError(
        f"no covered drop after {max_attempts} attempts; check powers and "
        f"min_rss_dbm={deployment.min_rss_dbm}")


def build_links(deployment: Deployment, drop: UeDrop) -> LinkTable:
    channels = []
    for bs in deployment.stations:
        h = np.empty((drop.n_ue, bs.antennas), dtype=complex)
        for u, pos in enumerate(drop.positions):
            h[u] = gen_channel(bs, pos, u, drop.seed, deployment.corr_rho,
                               deployment.shadow_sigma_db)
        channels.append(h)
    return LinkTable(rss_dbm=rss_matrix(deployment, drop.positions, drop.seed),
                     channels=channels)


def associate(deployment: Deployment, drop: UeDrop, pattern: int,
              links: LinkTable | None = None) -> np.ndarray:
    """Serving BS id per UE (max RSS over active BSs, lowest id on ties); -1 if disconnected."""
    table = links.rss_dbm if links is not None else rss_matrix(deployment, drop.positions, drop.seed)
    masked = np.full_like(table, -np.inf)
    ids = active_ids(deployment, pattern)
    masked[ids] = table[ids]
    serving = np.argmax(masked, axis=0)
    best = masked[serving, np.arange(table.shape[1])]
    serving[best < deployment.min_rss_dbm] = -1
    return serving


@dataclass
class PfTrace:
    throughput: np.ndarray        # bits/s per UE
    slots_scheduled: np.ndarray   # per UE
    group_sizes: dict             # bs id -> list of per-slot group sizes


def _slot_rates(deployment, links, groups, noise, bandwidth):
    """Rates of every scheduled UE given the concurrent per-BS precode groups."""
    sched = np.concatenate([np.asarray(g.users) for g in groups])
    total = np.zeros(sched.size)
    signal = np.zeros(sched.size)
    intra = np.zeros(sched.size)
    offset = 0
    for g in groups:
        h = links.channels[g.bs_id][sched]
        rx = np.abs(h.conj() @ g.precoders) ** 2 * g.power_per_user
        s = g.n_users
        own = rx[offset:offset + s]
        signal[offset:offset + s] = np.diag(own)
        off_diag = own.copy()
        np.fill_diagonal(off_diag, 0.0)
        intra[offset:offset + s] = off_diag.sum(axis=1)
        other = np.ones(sched.size, dtype=bool)
        other[offset:offset + s] = False
        total[other] += rx[other].sum(axis=1)
        offset += s
    sinr = signal / (total + intra + noise)
    return sched, bandwidth * np.log2(1.0 + sinr)


def pf_schedule_trace(deployment: Deployment, association: np.ndarray, links: LinkTable,
                      horizon_slots: int = 100, max_group: int = 4,
                      pf_time_constant: float = 20.0, slot_s: float = 1e-3) -> PfTrace:
    if horizon_slots < 1:
        raise ValueError("horizon_slots must be >= 1")
    n_ue = association.size
    noise = deployment.noise_power_w
    bandwidth = deployment.bandwidth_hz
    served = {}
    for bs in deployment.stations:
        users = np.flatnonzero(association == bs.id)
        if users.size:
            served[bs.id] = users

    # scheduler's per-UE rate estimate: single-user, full power, interference-free
    estimate = np.zeros(n_ue)
    for b, users in served.items():
        bs = deployment.stations[b]
        gain = np.sum(np.abs(links.channels[b][users]) ** 2, axis=1)
        estimate[users] = bandwidth * np.log2(1.0 + bs.tx_power_w * gain / noise)

    avg = np.ones(n_ue)
    bits = np.zeros(n_ue)
    counts = np.zeros(n_ue, dtype=int)
    sizes = {b: [] for b in served}
    beta = 1.0 / pf_time_constant
    precoder_cache = {}
    rate_cache = {}
    for _ in range(horizon_slots):
        key = []
        for b, users in served.items():
            bs = deployment.stations[b]
            s = min(max_group, bs.antennas, users.size)
            order = np.argsort(-(estimate[users] / avg[users]), kind="stable")[:s]
            sel = tuple(int(u) for u in users[order])
            key.append((b, sel))
            sizes[b].append(s)
        key = tuple(key)
        rate = rate_cache.get(key)
        if rate is None:
            groups = []
            for b, sel in key:
                grp = precoder_cache.get((b, sel))
                if grp is None:
                    bs = deployment.stations[b]
                    grp = rzf_precode(links.channels[b][list(sel)].T, bs.tx_power_w,
                                      noise, users=sel, bs_id=b)
                    precoder_cache[(b, sel)] = grp
                groups.append(grp)
            rate = np.zeros(n_ue)
            if groups:
                sched, r = _slot_rates(deployment, links, groups, noise, bandwidth)
                rate[sched] = r
            rate_cache[key] = rate
        for _b, sel in key:
            counts[list(sel)] += 1
        bits += rate * slot_s
        avg = (1.0 - beta) * avg + beta * rate
    return PfTrace(throughput=bits / (horizon_slots * slot_s), slots_scheduled=counts,
                   group_sizes=sizes)


def schedule_pf(deployment: Deployment, drop: UeDrop, pattern: int, association: np.ndarray,
                horizon_slots: int = 100, links: LinkTable | None = None,
                **kwargs) -> np.ndarray:
    """Per-UE throughput (bits/s) under full-buffer PF MU-MIMO scheduling.

    Only BSs active in ``pattern`` may serve; disconnected UEs (-1) get 0.
    """
    allowed = set(active_ids(deployment, pattern))
    if any(int(b) not in allowed for b in association if b >= 0):
        raise ValueError("association uses a BS that is muted in this pattern")
    if links is None:
        links = build_links(deployment, drop)
    return pf_schedule_trace(deployment, association, links, horizon_slots, **kwargs).throughput


def cell_edge_throughput(rates) -> float:
    """Nearest-rank 10th percentile."""
    values = sorted(float(r) for r in rates)
    if not values:
        raise ValueError("cell-edge throughput of an empty rate list")
    return values[(len(values) + 9) // 10 - 1]


def evaluate_pattern(deployment: Deployment, drop: UeDrop, pattern: int,
                     horizon: int = 100, links: LinkTable | None = None,
                     **kwargs) -> EvalResult:
    if links is None:
        links = build_links(deployment, drop)
    association = associate(deployment, drop, pattern, links)
    tput = schedule_pf(deployment, drop, pattern, association, horizon, links, **kwargs)
    return EvalResult(
        per_ue_throughput=tuple(float(t) for t in tput),
        cell_edge_tput=cell_edge_throughput(tput),
        mean_tput=float(np.mean(tput)),
        all_connected=bool(np.all(association >= 0)),
    )


def reward(result: EvalResult, reward_scale_bps: float = 1e8) -> float:
    if not result.all_connected:
        return 0.0
    return result.cell_edge_tput / reward_scale_bps


def argmax_pattern(values) -> int:
    """Index of the largest value; ties go to more active BSs, then the lowest mask."""
    values = np.asarray(values, dtype=float)
    best = values.max()
    tied = np.flatnonzero(values == best)
    return int(min(tied, key=lambda m: (-n_active(int(m)), int(m))))


def save_drops(drops, path) -> None:
    """One JSON object per line: drop_id, seed, positions."""
    lines = [json.dumps({"drop_id": d.drop_id, "seed": d.seed,
                         "positions": d.positions.tolist()}) for d in drops]
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_drops(path) -> list[UeDrop]:
    drops = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                rec = json.loads(line)
                positions = np.array(rec["positions"], dtype=float).reshape(-1, 2)
                drops.append(UeDrop(int(rec["drop_id"]), int(rec["seed"]), positions))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: malformed drop record ({exc})") from exc
    return drops
