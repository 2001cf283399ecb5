"""
Opportunistic resource allocation (ORA) and the ORA/IA group split.

For every sub-channel the best (macro, F1, F2) user triplet is found by
exhaustive search over the sum of the three per-user rates computed
*without* power control. The ``A`` sub-channels with the highest triplet
metric form the ORA group; their final rates are then recomputed *with*
power control. Remaining sub-channels and users not picked by ORA form the
IA group.
"""

from dataclasses import dataclass, field

import numpy as np

from .channel import CELLS, Cell, power_control, received_powers

_LN2 = np.log(2.0)


def log2_1p(x):
    """``log2(1 + x)``, accurate for tiny ``x``."""
    return np.log1p(x) / _LN2


@dataclass(frozen=True)
class TripletChoice:
    subchannel: int
    macro_user: int
    f1_user: int
    f2_user: int
    metric: float

    @property
    def users(self):
        return (self.macro_user, self.f1_user, self.f2_user)


@dataclass
class Allocation:
    trade_off_A: int
    ora_channels: list
    ia_channels: tuple
    ia_users: tuple            # per cell, sorted user indices
    ia_streams: int = 0        # J; zero when IA is not performed

    @property
    def ia_active(self):
        return self.ia_streams >= 1

    @property
    def ia_group_channels(self):
        """The J+1 sub-channels actually used for alignment."""
        return self.ia_channels[:self.ia_streams + 1] if self.ia_active else ()


@dataclass
class RateReport:
    ora_rates: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))  # (A, 3)
    ora_sum: float = 0.0
    ia_sum: float = 0.0

    @property
    def total(self):
        return self.ora_sum + self.ia_sum


def _interference_no_pc(realization, topology, params, cell):
    # Unpower-controlled interference at every user of `cell` on every channel.
    n_users = params.num_users(cell)
    total = np.zeros((n_users, params.num_subchannels))
    for tx in CELLS:
        if tx == cell or (tx.is_femto and cell.is_femto):
            continue
        total += (params.tx_power(tx) * topology.zeta[tx][cell][:, None]
                  * np.abs(realization.h[tx][cell]) ** 2)
    return total


def no_pc_rate_tables(realization, topology, params, sigma2):
    """Selection rates for every (cell, user, sub-channel), without power control."""
    tables = []
    for cell in CELLS:
        desired = (params.tx_power(cell) * topology.zeta[cell][cell][:, None]
                   * np.abs(realization.h[cell][cell]) ** 2)
        interf = _interference_no_pc(realization, topology, params, cell)
        tables.append(log2_1p(desired / (interf + sigma2)))
    return tables


def candidate_rate_no_pc(realization, topology, params, sigma2, cell, user, n):
    """Rate of one user on sub-channel ``n`` ignoring power control."""
    cell = Cell(cell)
    desired = (params.tx_power(cell) * topology.zeta[cell][cell][user]
               * abs(realization.h[cell][cell][user, n]) ** 2)
    interf = 0.0
    for tx in CELLS:
        if tx == cell or (tx.is_femto and cell.is_femto):
            continue
        interf += params.tx_power(tx) * topology.zeta[tx][cell][user] * abs(realization.h[tx][cell][user, n]) ** 2
    return float(log2_1p(desired / (interf + sigma2)))


def _best_triplet_from_tables(tables, n):
    cm, cf1, cf2 = (t[:, n] for t in tables)
    c_all = cm[:, None, None] + cf1[None, :, None] + cf2[None, None, :]
    # argmax returns the first maximum in C order, i.e. lexicographically lowest.
    flat = int(np.argmax(c_all))
    k, l1, l2 = np.unravel_index(flat, c_all.shape)
    return TripletChoice(n, int(k), int(l1), int(l2), float(c_all[k, l1, l2]))


def best_triplet(realization, topology, params, sigma2, n):
    """Exhaustive argmax of the triplet sum-rate on sub-channel ``n``."""
    return _best_triplet_from_tables(no_pc_rate_tables(realization, topology, params, sigma2), n)


def allocate(realization, topology, params, sigma2, A, tables=None):
    """Split sub-channels and users into the ORA and IA groups.

    The ``A`` sub-channels with the largest best-triplet metric go to ORA
    (ties broken by channel index). IA is carried out with
    ``J = K - A`` streams over the first ``J + 1`` leftover sub-channels;
    with ``A >= K`` there are too few sub-channels and IA is skipped.
    """
    N = params.num_subchannels
    if not 0 <= A <= N:
        raise ValueError("trade-off number A must lie in [0, %d], got %r" % (N, A))
    if tables is None:
        tables = no_pc_rate_tables(realization, topology, params, sigma2)
    triplets = [_best_triplet_from_tables(tables, n) for n in range(N)]
    ranked = sorted(range(N), key=lambda n: (-triplets[n].metric, n))
    ora = [triplets[n] for n in ranked[:A]]
    ia_channels = tuple(sorted(ranked[A:]))

    ia_users = []
    for cell in CELLS:
        taken = {t.users[cell] for t in ora}
        ia_users.append(tuple(u for u in range(params.num_users(cell)) if u not in taken))

    K = params.num_macro_users
    J = 0
    if A < K:
        J = min(K - A, len(ia_channels) - 1, *(len(u) for u in ia_users))
    return Allocation(trade_off_A=A, ora_channels=ora, ia_channels=ia_channels,
                      ia_users=tuple(ia_users), ia_streams=max(J, 0))


def ora_final_rates(allocation, realization, topology, params, sigma2):
    """Power-controlled rates of the users scheduled on the ORA sub-channels."""
    lam = power_control(topology, params)
    rates = np.zeros((len(allocation.ora_channels), 3))
    for i, t in enumerate(allocation.ora_channels):
        pw = received_powers(topology, realization, params, t.subchannel, *t.users, lam=lam)
        for rx in CELLS:
            rates[i, rx] = log2_1p(pw.desired[rx] / (pw.total_interference(rx) + sigma2))
    return RateReport(ora_rates=rates, ora_sum=float(rates.sum()))
