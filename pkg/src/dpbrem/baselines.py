"""Reference muting policies: no blanking, scalar-CSI heuristic, exhaustive search."""
from __future__ import annotations

import numpy as np

from .netsim import (
    argmax_pattern,
    associate,
    build_links,
    cell_edge_throughput,
    evaluate_pattern,
    reward,
)
from .radio import dbm_to_w


def no_dpb(deployment) -> int:
    return deployment.all_active


def ref_proxy_objective(deployment, drop, pattern: int, links=None) -> float:
    """Cell-edge estimate from wideband RSS alone.

    Each UE sees its serving BS's RSS against the summed RSS of every other
    active BS that has users, and shares the band equally with the users of
    its BS. No precoding and no scheduling are modelled. Patterns that
    disconnect a UE score 0.
    """
    if links is None:
        links = build_links(deployment, drop)
    serving = associate(deployment, drop, pattern, links)
    if np.any(serving < 0):
        return 0.0
    rx_w = dbm_to_w(links.rss_dbm)
    n_ue = serving.size
    loaded = np.bincount(serving, minlength=deployment.n_bs)
    transmitting = loaded > 0
    ues = np.arange(n_ue)
    signal = rx_w[serving, ues]
    others = np.repeat(transmitting[:, None], n_ue, axis=1)
    others[serving, ues] = False
    interference = np.where(others, rx_w, 0.0).sum(axis=0)
    sinr = signal / (deployment.noise_power_w + interference)
    rates = deployment.bandwidth_hz / loaded[serving] * np.log2(1.0 + sinr)
    return cell_edge_throughput(rates)


def ref_csi(deployment, drop, links=None) -> int:
    if links is None:
        links = build_links(deployment, drop)
    scores = [ref_proxy_objective(deployment, drop, m, links) for m in range(deployment.n_patterns)]
    return argmax_pattern(scores)


def exhaustive_search(deployment, drop, horizon: int = 100, reward_scale_bps: float = 1e8,
                      links=None, **sim_kwargs) -> int:
    """Best pattern by full simulation of all 2^N candidates."""
    if links is None:
        links = build_links(deployment, drop)
    rewards = [reward(evaluate_pattern(deployment, drop, m, horizon, links, **sim_kwargs),
                      reward_scale_bps)
               for m in range(deployment.n_patterns)]
    return argmax_pattern(rewards)
