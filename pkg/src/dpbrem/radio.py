"""Radio abstractions: path loss, seeded channels, RSS, RZF precoding, SINR, rate.

Every stochastic quantity is drawn from a stream keyed by
``(drop_seed, bs_id, ue_id, tag)`` so links can be regenerated independently
and in any order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

# (reference loss at 1 m in dB, path-loss exponent)
PATHLOSS_PROFILES = {
    "macro": (34.0, 3.5),
    "pico": (38.0, 3.0),
}

REFERENCE_DISTANCE_M = 1.0

_SHADOW_TAG = 0
_FADING_TAG = 1


@dataclass(frozen=True)
class BaseStation:
    id: int
    x: float
    y: float
    antennas: int
    tx_power_dbm: float
    kind: str  # "macro" | "pico"

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def tx_power_w(self) -> float:
        return dbm_to_w(self.tx_power_dbm)


@dataclass(frozen=True)
class LinkBudget:
    tx_power_dbm: float
    pl_db: float
    shadow_db: float

    @property
    def rss_dbm(self) -> float:
        return self.tx_power_dbm - self.pl_db - self.shadow_db


@dataclass
class PrecodeGroup:
    """Users co-scheduled at one BS together with their precoding matrix.

    ``precoders`` is M x S with ``||W||_F^2 == S``; each user gets
    ``per_bs_power_w / S`` so the radiated total is ``per_bs_power_w``.
    """

    bs_id: int
    users: tuple
    precoders: np.ndarray
    per_bs_power_w: float

    @property
    def n_users(self) -> int:
        return self.precoders.shape[1]

    @property
    def power_per_user(self) -> float:
        return self.per_bs_power_w / self.n_users

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.precoders) ** 2)) * self.power_per_user


def _scalar_or_array(out: np.ndarray):
    return float(out) if out.ndim == 0 else out


def dbm_to_w(dbm):
    return _scalar_or_array(10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0))


def db_to_linear(db):
    return _scalar_or_array(10.0 ** (np.asarray(db, dtype=float) / 10.0))


def thermal_noise_w(bandwidth_hz: float, noise_figure_db: float) -> float:
    """Noise power for -174 dBm/Hz plus the receiver noise figure."""
    return dbm_to_w(-174.0 + 10.0 * np.log10(bandwidth_hz) + noise_figure_db)


def path_loss(bs: BaseStation, ue_pos) -> float:
    """Log-distance path loss in dB; distances below 1 m are clamped."""
    pl0, exponent = PATHLOSS_PROFILES[bs.kind]
    d = float(np.hypot(ue_pos[0] - bs.x, ue_pos[1] - bs.y))
    d = max(d, REFERENCE_DISTANCE_M)
    return pl0 + 10.0 * exponent * np.log10(d / REFERENCE_DISTANCE_M)


def _link_rng(drop_seed: int, bs_id: int, ue_id: int, tag: int) -> np.random.Generator:
    return np.random.default_rng([int(drop_seed), int(bs_id), int(ue_id), tag])


def shadowing_db(bs_id: int, ue_id: int, drop_seed: int, sigma_db: float = 6.0) -> float:
    if sigma_db == 0.0:
        return 0.0
    return float(_link_rng(drop_seed, bs_id, ue_id, _SHADOW_TAG).normal(0.0, sigma_db))


def link_budget(bs: BaseStation, ue_pos, ue_id: int, drop_seed: int,
                shadow_sigma_db: float = 6.0) -> LinkBudget:
    return LinkBudget(
        tx_power_dbm=bs.tx_power_dbm,
        pl_db=path_loss(bs, ue_pos),
        shadow_db=shadowing_db(bs.id, ue_id, drop_seed, shadow_sigma_db),
    )


def rss(bs: BaseStation, ue_pos, ue_id: int, drop_seed: int,
        shadow_sigma_db: float = 6.0) -> float:
    """Wideband received signal strength in dBm (no small-scale fading)."""
    return link_budget(bs, ue_pos, ue_id, drop_seed, shadow_sigma_db).rss_dbm


def exponential_correlation(m: int, rho: float) -> np.ndarray:
    """Antenna correlation ``R[i, j] = rho^|i - j|``."""
    idx = np.arange(m)
    return rho ** np.abs(np.subtract.outer(idx, idx)).astype(float)


@lru_cache(maxsize=64)
def _correlation_sqrt(m: int, rho: float) -> np.ndarray:
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"correlation coefficient must lie in [0, 1), got {rho}")
    factor = np.linalg.cholesky(exponential_correlation(m, rho))
    factor.setflags(write=False)
    return factor


def gen_channel(bs: BaseStation, ue_pos, ue_id: int, drop_seed: int,
                rho: float = 0.5, shadow_sigma_db: float = 6.0) -> np.ndarray:
    """Correlated Rayleigh channel vector of length ``bs.antennas``.

    Large-scale gain (path loss and shadowing) is folded into the amplitude,
    so ``E||h||^2 = M * 10^(-(PL + shadow)/10)``.
    """
    budget = link_budget(bs, ue_pos, ue_id, drop_seed, shadow_sigma_db)
    gain = db_to_linear(-(budget.pl_db + budget.shadow_db))
    rng = _link_rng(drop_seed, bs.id, ue_id, _FADING_TAG)
    g = rng.standard_normal((2, bs.antennas))
    g = (g[0] + 1j * g[1]) / np.sqrt(2.0)
    return np.sqrt(gain) * (_correlation_sqrt(bs.antennas, float(rho)) @ g)


def rzf_alpha(n_users: int, per_bs_power_w: float, noise_power_w: float) -> float:
    return n_users * noise_power_w / per_bs_power_w


def rzf_precode(channels: np.ndarray, per_bs_power_w: float, noise_power_w: float,
                users: Sequence[int] = (), bs_id: int = 0,
                alpha: float | None = None) -> PrecodeGroup:
    """Regularized zero-forcing precoder for the M x S channel matrix.

    Columns of ``channels`` are the users' channel vectors. The unnormalized
    precoder ``H (H^H H + alpha I)^-1`` is scaled by a single factor so that
    the total transmit power equals ``per_bs_power_w`` under an equal
    per-user power split.
    """
    h = np.asarray(channels, dtype=complex)
    if h.ndim == 1:
        h = h[:, None]
    m, s = h.shape
    if s < 1 or m < s:
        raise ValueError(f"need 1 <= S <= M, got M={m}, S={s}")
    if not (np.all(np.isfinite(h)) and np.isfinite(per_bs_power_w) and np.isfinite(noise_power_w)):
        raise ValueError("non-finite input to RZF precoder")
    if alpha is None:
        alpha = rzf_alpha(s, per_bs_power_w, noise_power_w)
    gram = h.conj().T @ h + alpha * np.eye(s)
    w = h @ np.linalg.inv(gram)
    w *= np.sqrt(s / np.sum(np.abs(w) ** 2))
    if not users:
        users = tuple(range(s))
    return PrecodeGroup(bs_id=bs_id, users=tuple(users), precoders=w,
                        per_bs_power_w=float(per_bs_power_w))


def compute_sinr(target_ue: int, serving_group: PrecodeGroup,
                 interfering_groups: Sequence[PrecodeGroup], noise_power_w: float,
                 channels: Mapping[int, np.ndarray]) -> float:
    """Downlink SINR of ``target_ue``.

    ``channels[b]`` is the target's channel vector from BS ``b``; it must
    cover the serving BS and every BS with a non-empty interfering group.
    """
    if target_ue not in serving_group.users:
        raise ValueError(f"UE {target_ue} is not in the serving group")
    col = serving_group.users.index(target_ue)
    h = channels[serving_group.bs_id]
    gains = np.abs(h.conj() @ serving_group.precoders) ** 2 * serving_group.power_per_user
    signal = gains[col]
    interference = float(np.sum(np.delete(gains, col)))
    for grp in interfering_groups:
        if grp is None or grp.n_users == 0:
            continue
        hb = channels[grp.bs_id]
        interference += float(np.sum(np.abs(hb.conj() @ grp.precoders) ** 2)) * grp.power_per_user
    return float(signal / (interference + noise_power_w))


def shannon_rate(sinr, bandwidth_hz: float):
    """Shannon capacity in bits/s; accepts scalars or arrays."""
    return _scalar_or_array(bandwidth_hz * np.log2(1.0 + np.asarray(sinr, dtype=float)))
