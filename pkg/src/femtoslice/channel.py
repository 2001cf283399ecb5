"""
Scenario sampling and the downlink channel model.

One macro base station sits at the origin; two femto base stations are
dropped inside the macro disc. Every link carries a reference-distance path
loss ``K * r**-alpha`` (with ``K = (c / (4 pi f d0))**2``), wall-crossing
links are further attenuated by the penetration gain ``delta``, and every
sub-channel sees independent unit-power Rayleigh fading.

Per-cell quantities are stored in lists indexed by :class:`Cell`, so
``topology.zeta[Cell.FEMTO1][Cell.MACRO]`` holds the path-loss gains from
the F1 base station to each macro user.
"""

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
MAX_PLACEMENT_ATTEMPTS = 10_000

# Sub-stream purposes for the counter-based RNG split.
STREAM_TOPOLOGY = 0
STREAM_FADING = 1


class Cell(IntEnum):
    MACRO = 0
    FEMTO1 = 1
    FEMTO2 = 2

    @property
    def is_femto(self):
        return self is not Cell.MACRO


CELLS = (Cell.MACRO, Cell.FEMTO1, Cell.FEMTO2)
FEMTO_CELLS = (Cell.FEMTO1, Cell.FEMTO2)


class TopologySamplingError(RuntimeError):
    """Rejection sampling of base-station or user positions gave up."""


@dataclass(frozen=True)
class SystemParams:
    """All scenario constants, in linear units.

    Defaults describe the reference two-femtocell setup: five users per
    cell, six sub-channels, unit transmit powers, ``alpha = 2``,
    ``delta = -10 dB``, ``d0 = 100 m`` outdoors and ``5 m`` indoors at
    2 GHz.
    """

    num_macro_users: int = 5
    num_femto_users: int = 5
    num_subchannels: int = 6
    tx_power_macro: float = 1.0
    tx_power_femto1: float = 1.0
    tx_power_femto2: float = 1.0
    pathloss_exponent: float = 2.0
    penetration_delta: float = 0.1
    d0_outdoor: float = 100.0
    d0_indoor: float = 5.0
    carrier_hz: float = 2e9
    macro_radius: float = 500.0
    femto_radius: float = 10.0
    min_bs_user_distance_outdoor: float = 100.0
    min_bs_user_distance_indoor: float = 5.0
    snr_db_grid: tuple = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0)
    trials: int = 1000
    master_seed: int = 2012
    ia_iterations: int = 5

    def __post_init__(self):
        object.__setattr__(self, "snr_db_grid", tuple(float(s) for s in self.snr_db_grid))
        self.validate()

    def validate(self):
        K, L, N = self.num_macro_users, self.num_femto_users, self.num_subchannels
        if K < 1 or L < 1:
            raise ValueError("each cell needs at least one user")
        if N < max(K, L) + 1:
            raise ValueError("num_subchannels must be >= max(K, L) + 1 (got N=%d, K=%d, L=%d)" % (N, K, L))
        positive = ("tx_power_macro", "tx_power_femto1", "tx_power_femto2", "d0_outdoor",
                    "d0_indoor", "carrier_hz", "macro_radius", "femto_radius",
                    "min_bs_user_distance_outdoor", "min_bs_user_distance_indoor")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError("%s must be positive" % name)
        if not 0 < self.penetration_delta <= 1:
            raise ValueError("penetration_delta must lie in (0, 1]")
        if not self.pathloss_exponent >= 1:
            raise ValueError("pathloss_exponent must be >= 1")
        if self.min_bs_user_distance_outdoor >= self.macro_radius:
            raise ValueError("min_bs_user_distance_outdoor must be below macro_radius")
        if self.min_bs_user_distance_indoor >= self.femto_radius:
            raise ValueError("min_bs_user_distance_indoor must be below femto_radius")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.ia_iterations < 0:
            raise ValueError("ia_iterations must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if not self.snr_db_grid:
            raise ValueError("snr_db_grid must not be empty")

    def num_users(self, cell):
        return self.num_macro_users if cell == Cell.MACRO else self.num_femto_users

    def tx_power(self, cell):
        return (self.tx_power_macro, self.tx_power_femto1, self.tx_power_femto2)[cell]

    def d0(self, tx_cell):
        """Reference distance of a link, chosen by the transmitter's environment."""
        return self.d0_outdoor if tx_cell == Cell.MACRO else self.d0_indoor


@dataclass
class Topology:
    bs_positions: np.ndarray                  # (3, 2)
    user_positions: list                      # per cell: (n_users, 2)
    distance: list                            # [tx][rx] -> (n_users(rx),)
    zeta: list                                # [tx][rx] -> (n_users(rx),), delta folded in
    k_factor: np.ndarray = field(default=None)  # per transmitting cell


@dataclass
class ChannelRealization:
    h: list                                   # [tx][rx] -> (n_users(rx), N) complex


def pathloss_K_factor(carrier_hz, d0):
    """Unit-less reference path loss ``(c / (4 pi f_c d0))**2``."""
    if not carrier_hz > 0 or not d0 > 0:
        raise ValueError("carrier frequency and reference distance must be positive")
    return (SPEED_OF_LIGHT / (4.0 * math.pi * carrier_hz * d0)) ** 2


def pathloss_gain(k_factor, r, alpha):
    """Path-loss gain ``K * r**-alpha``; works elementwise on arrays."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    g = k_factor * r ** (-float(alpha))
    return float(g) if g.ndim == 0 else g


def power_control(topology, params):
    """Per-user amplification ``lambda = r**alpha / K`` on the serving link."""
    return [topology.distance[c][c] ** params.pathloss_exponent / topology.k_factor[c] for c in CELLS]


def trial_rng(master_seed, trial, resample, purpose):
    """Independent generator for one (trial, resample, purpose) triple.

    Streams come from ``numpy.random.SeedSequence`` spawn keys, so every
    trial owns a disjoint stream regardless of how trials are scheduled.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial), int(resample), int(purpose)))
    return np.random.default_rng(ss)


def _uniform_in_annulus(rng, n, r_min, r_max):
    # Area-uniform radius: r^2 uniform on [r_min^2, r_max^2].
    r = np.sqrt(rng.uniform(r_min ** 2, r_max ** 2, size=n))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack((r * np.cos(theta), r * np.sin(theta)))


def _place_femto_bs(params, rng):
    # The femtocell must fit inside the macro disc and keep every femto user
    # at least d0_outdoor away from the macro BS.
    r_lo = params.d0_outdoor + params.femto_radius
    r_hi = params.macro_radius - params.femto_radius
    if r_hi <= r_lo:
        raise TopologySamplingError("macro disc too small to host a femtocell")
    min_sep = 2.0 * params.femto_radius
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        pos = _uniform_in_annulus(rng, 2, 0.0, params.macro_radius)
        radii = np.hypot(pos[:, 0], pos[:, 1])
        if np.all((radii >= r_lo) & (radii <= r_hi)) and np.hypot(*(pos[0] - pos[1])) >= min_sep:
            return pos
    raise TopologySamplingError("could not place femto base stations in %d attempts" % MAX_PLACEMENT_ATTEMPTS)


def sample_topology(params, rng):
    """Drop base stations and users, then fill distance and path-loss tables."""
    femto_bs = _place_femto_bs(params, rng)
    bs = np.vstack((np.zeros((1, 2)), femto_bs))
    users = [_uniform_in_annulus(rng, params.num_macro_users,
                                 params.min_bs_user_distance_outdoor, params.macro_radius)]
    for c in FEMTO_CELLS:
        local = _uniform_in_annulus(rng, params.num_femto_users,
                                    params.min_bs_user_distance_indoor, params.femto_radius)
        users.append(bs[c] + local)

    k_factor = np.array([pathloss_K_factor(params.carrier_hz, params.d0(c)) for c in CELLS])
    distance = [[None] * 3 for _ in CELLS]
    zeta = [[None] * 3 for _ in CELLS]
    for tx in CELLS:
        for rx in CELLS:
            d = np.hypot(users[rx][:, 0] - bs[tx, 0], users[rx][:, 1] - bs[tx, 1])
            g = pathloss_gain(k_factor[tx], d, params.pathloss_exponent)
            if tx != rx:
                g = g * params.penetration_delta
            distance[tx][rx] = d
            zeta[tx][rx] = np.atleast_1d(g)
    return Topology(bs_positions=bs, user_positions=users, distance=distance, zeta=zeta, k_factor=k_factor)


def sample_fading(params, rng):
    """i.i.d. CN(0, 1) fading for every (tx, rx cell, user, sub-channel)."""
    N = params.num_subchannels
    h = [[None] * 3 for _ in CELLS]
    for tx in CELLS:
        for rx in CELLS:
            shape = (params.num_users(rx), N)
            h[tx][rx] = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    return ChannelRealization(h=h)


def snr_to_noise(snr_db, p_macro):
    """Noise power ``sigma^2 = P_M / 10**(snr_db / 10)``."""
    if not p_macro > 0:
        raise ValueError("macro transmit power must be positive")
    return p_macro / 10.0 ** (snr_db / 10.0)


@dataclass
class ReceivedPowers:
    desired: np.ndarray       # (3,) per receiving cell
    interference: np.ndarray  # (3 rx, 3 tx)

    def total_interference(self, rx):
        return float(self.interference[rx].sum())


def received_powers(topology, realization, params, n, k, l1, l2, lam=None):
    """Desired and interfering powers on sub-channel ``n`` under power control.

    ``k``, ``l1`` and ``l2`` are the users served on ``n`` by the macro, F1
    and F2 base stations. Each BS transmits with the amplification of its own
    served user, so a victim sees ``P * lambda * zeta * |h|^2`` from a foreign
    BS. Femto-to-femto interference is zero.
    """
    if lam is None:
        lam = power_control(topology, params)
    served = (k, l1, l2)
    desired = np.empty(3)
    interference = np.zeros((3, 3))
    for rx in CELLS:
        u = served[rx]
        desired[rx] = params.tx_power(rx) * abs(realization.h[rx][rx][u, n]) ** 2
        for tx in CELLS:
            if tx == rx or (tx.is_femto and rx.is_femto):
                continue
            interference[rx, tx] = (params.tx_power(tx) * lam[tx][served[tx]]
                                    * topology.zeta[tx][rx][u] * abs(realization.h[tx][rx][u, n]) ** 2)
    return ReceivedPowers(desired=desired, interference=interference)
