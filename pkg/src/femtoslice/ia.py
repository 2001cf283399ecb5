"""
Interference alignment over ``J + 1`` sub-channels carrying ``J`` streams.

Every base station maps its ``J`` streams through the same fixed tall
unitary precoder ``G``. Interference from a foreign cell therefore arrives
inside the ``J``-dimensional subspace spanned by ``H_cross G`` and a single
receive vector can suppress it. Each base station then zero-forces its own
users on the fed-back equivalent channels ``u^H H G``.

Two receive designs are supported:

``"zf"``
    Femto users null the macro interference exactly; macro users null
    the stronger of the two femto interferers.
``"mmse"``
    The MMSE-like initialisation, whitening the desired channel by the
    expected interference-plus-noise covariance. Iterating
    (:func:`iterate_vectors`) alternates receive-vector updates with
    zero-forcing transmit updates.

Channel matrices are diagonal across sub-channels (OFDMA), so they are kept
as vectors ``h`` and ``diag(h) @ G`` is formed as ``h[:, None] * G``.
"""

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numba
import numpy as np

from .channel import CELLS, FEMTO_CELLS, Cell, power_control
from .numerics import (PIVOT_TOL, SingularMatrixError, _gauss_jordan, _max_eig_kernel, hermitian,
                       invert, null_vector)
from .ora import log2_1p

IA_MODES = ("zf", "mmse")


@lru_cache(maxsize=None)
def _dft_columns(J):
    n = J + 1
    a = np.arange(n)[:, None]
    b = np.arange(J)[None, :]
    g = np.exp(-2j * np.pi * a * b / n) / np.sqrt(n)
    g.setflags(write=False)
    return g


def reference_precoder(J):
    """First ``J`` columns of the unitary ``(J+1)``-point DFT matrix.

    The same matrix is used by every base station, which is what makes the
    foreign interference subspace known to each receiver.
    """
    if J < 1:
        raise ValueError("reference precoder needs J >= 1, got %r" % (J,))
    return _dft_columns(int(J))


def _trace_lambda(lam_foreign):
    lam_foreign = np.asarray(lam_foreign)
    if lam_foreign.ndim == 2:
        return float(np.real(np.trace(lam_foreign @ lam_foreign.conj().T)))
    return float(np.sum(np.abs(lam_foreign) ** 2))


def expected_covariance(H_cross, G, lam_foreign, p_foreign, zeta_cross, sigma2, J):
    """Expected interference-plus-noise covariance at one receiver.

    The foreign beamformer is unknown, so its entries are modelled as
    i.i.d. with unit expected column norm, which turns
    ``E[V Lambda Lambda^H V^H]`` into ``trace(Lambda Lambda^H) / J * I``.

    Parameters
    ----------
    H_cross : ndarray, (J+1, J+1)
        Diagonal cross channel from the foreign base station.
    G : ndarray, (J+1, J)
        Reference precoder.
    lam_foreign : ndarray
        The foreign cell's power-control matrix ``Lambda`` (diagonal of
        ``sqrt(lambda)``), or a 1-D array of those diagonal entries.
    p_foreign, zeta_cross, sigma2 : float
    J : int
    """
    HG = np.asarray(H_cross) @ G
    coef = (J + 1) * p_foreign / J * zeta_cross * _trace_lambda(lam_foreign) / J
    return sigma2 * np.eye(G.shape[0]) + coef * (HG @ hermitian(HG))


def _covariance(sigma2, terms):
    # terms: sequence of (coef, HG) pairs, at least one.
    n = terms[0][1].shape[0]
    phi = sigma2 * np.eye(n, dtype=np.complex128)
    for coef, HG in terms:
        phi += coef * (HG @ HG.conj().T)
    return phi


@numba.njit(cache=True)
def _mmse_kernel(hg, phi_inv):
    # v0 = dominant eigenvector of hg^H phi_inv hg; u0 = phi_inv hg v0 / ||.||
    w = phi_inv @ hg
    v0, _ = _max_eig_kernel(hg.conj().T @ w)
    u0 = w @ v0
    return v0, u0 / np.sqrt(np.sum(np.abs(u0) ** 2))


@numba.njit(cache=True)
def _zf_kernel(H0, tol):
    J = H0.shape[0]
    H0h = np.ascontiguousarray(H0.conj().T)
    gram_inv, ok = _gauss_jordan(H0 @ H0h, tol)
    d = np.empty(J)
    V = np.zeros((J, J), dtype=np.complex128)
    if not ok:
        return V, d, False
    for l in range(J):
        dl = gram_inv[l, l].real
        if not dl > 0.0:
            return V, d, False
        d[l] = 1.0 / np.sqrt(dl)
    V = H0h @ gram_inv
    for i in range(J):
        for l in range(J):
            V[i, l] *= d[l]
    return V, d, True


def _zf(H0):
    V, d, ok = _zf_kernel(np.ascontiguousarray(H0, dtype=np.complex128), PIVOT_TOL)
    if not ok:
        raise SingularMatrixError("equivalent channel H0 H0^H is singular")
    return V, d


def mmse_init(H_direct, G, phi):
    """MMSE-like initial transmit and receive vectors for one user.

    ``v0`` is the dominant eigenvector of ``G^H H^H phi^{-1} H G`` and
    ``u0`` is ``phi^{-1} H G v0`` normalised to unit length.
    """
    hg = np.ascontiguousarray(np.asarray(H_direct, dtype=np.complex128) @ G)
    return _mmse_kernel(hg, invert(phi))


def receive_null_vector(H_cross, G):
    """Unit receive vector with ``u^H H_cross G = 0``."""
    return null_vector(np.asarray(H_cross) @ G)


def zf_transmit(H0):
    """Zero-forcing transmit matrix with unit-norm columns.

    ``V = H0^H (H0 H0^H)^{-1} D`` where ``D = diag(d_l)`` and
    ``d_l = 1 / sqrt([(H0 H0^H)^{-1}]_{ll})``, so that ``H0 V = D``.

    Returns
    -------
    V, D : ndarray
    """
    V, d = _zf(H0)
    return V, np.diag(d).astype(np.complex128)


def femto_user_rate(u, H_direct, G, v, lam, zeta, p_tx, sigma2, J):
    """Rate of an aligned user whose foreign interference is nulled."""
    gain = np.vdot(u, np.asarray(H_direct) @ G @ v) * np.sqrt(lam)
    return float(log2_1p((J + 1) * p_tx / (J * sigma2) * zeta * abs(gain) ** 2))


def macro_user_rate(u, H_direct, G, v, lam, zeta_serving, p_macro, phi_residual, J):
    """Rate of a macro user; the non-aligned femto's interference counts as noise.

    ``phi_residual`` is the expected covariance of that residual
    interference plus noise, seen through ``u`` as ``u^H phi_residual u``.
    """
    gain = np.vdot(u, np.asarray(H_direct) @ G @ v)
    noise = float(np.real(np.vdot(u, phi_residual @ u)))
    return float(log2_1p((J + 1) * p_macro / J * zeta_serving * lam * abs(gain) ** 2 / noise))


def stronger_interferer(topology, params, k):
    """Femto cell whose average interference at macro user ``k`` is larger."""
    p1 = params.tx_power_femto1 * topology.zeta[Cell.FEMTO1][Cell.MACRO][k]
    p2 = params.tx_power_femto2 * topology.zeta[Cell.FEMTO2][Cell.MACRO][k]
    return Cell.FEMTO2 if p2 > p1 else Cell.FEMTO1


@dataclass(frozen=True)
class IAGroup:
    channels: tuple        # J + 1 sub-channel indices
    users: tuple           # per cell, J user indices

    def __post_init__(self):
        J = len(self.channels) - 1
        if J < 1:
            raise ValueError("an IA group needs at least two sub-channels")
        for cell, users in zip(CELLS, self.users):
            if len(users) != J:
                raise ValueError("cell %s has %d users, expected %d" % (cell.name, len(users), J))
            if len(set(users)) != J:
                raise ValueError("duplicate users in cell %s" % cell.name)

    @property
    def J(self):
        return len(self.channels) - 1


@dataclass
class IASolution:
    group: IAGroup
    mode: str
    G: np.ndarray
    u: list                 # per cell: (J, J+1); row i is the i-th scheduled user's receive vector
    V: list                 # per cell: (J, J) ZF transmit matrix
    d: list                 # per cell: (J,) diagonal of D
    lam: list               # per cell: (J,) power-control factors
    rates: list             # per cell: (J,)
    aligned_interferer: tuple  # per macro stream
    trace: list = field(default_factory=list)

    @property
    def D(self):
        return [np.diag(x).astype(np.complex128) for x in self.d]

    @property
    def Lam(self):
        return [np.diag(np.sqrt(x)).astype(np.complex128) for x in self.lam]

    @property
    def sum_rate(self):
        return float(sum(r.sum() for r in self.rates))


class _Context:
    """Per-trial IA data restricted to the IA sub-channels, with caches.

    MMSE receive vectors depend on the user and, through the foreign power
    control trace, on which users the other cells schedule. They are cached
    on exactly that key so the subset search can re-use them.
    """

    def __init__(self, channels, realization, topology, params, sigma2, mode):
        if mode not in IA_MODES:
            raise ValueError("unknown IA mode %r" % (mode,))
        self.mode = mode
        self.channels = tuple(channels)
        self.J = J = len(self.channels) - 1
        self.G = reference_precoder(J)
        self.params = params
        self.sigma2 = sigma2
        self.topology = topology
        self.lam = power_control(topology, params)
        idx = list(self.channels)
        # hg[tx][rx] -> (n_users(rx), J+1, J), rows diag(h) G per user
        self.hg = [[np.ascontiguousarray(realization.h[tx][rx][:, idx][:, :, None] * self.G[None, :, :])
                    for rx in CELLS] for tx in CELLS]
        self.stronger = tuple(stronger_interferer(topology, params, k)
                              for k in range(params.num_macro_users))
        self._u_cache = {}
        self._phi_cache = {}
        self._res_cache = {}
        self._trace_cache = {}

    def _coef(self, tx, rx, user, tx_users):
        key = (tx, tx_users)
        trace = self._trace_cache.get(key)
        if trace is None:
            trace = self._trace_cache[key] = float(self.lam[tx][list(tx_users)].sum())
        J = self.J
        return (J + 1) * self.params.tx_power(tx) / J * self.topology.zeta[tx][rx][user] * trace / J

    def phi_inv(self, cell, user, users):
        """Inverse of the expected covariance used for the MMSE receive design.

        Macro users account for both femto interferers here.
        """
        key = (cell, user) + _foreign_key(cell, users)
        out = self._phi_cache.get(key)
        if out is None:
            sources = FEMTO_CELLS if cell == Cell.MACRO else (Cell.MACRO,)
            phi = _covariance(self.sigma2, [(self._coef(tx, cell, user, users[tx]), self.hg[tx][cell][user])
                                            for tx in sources])
            out = self._phi_cache[key] = invert(phi)
        return out

    def residual_phi(self, k, users):
        """Noise plus the non-aligned femto interference at macro user ``k``."""
        weak = Cell.FEMTO2 if self.stronger[k] == Cell.FEMTO1 else Cell.FEMTO1
        key = (k, users[weak])
        phi = self._res_cache.get(key)
        if phi is None:
            phi = self._res_cache[key] = _covariance(
                self.sigma2, [(self._coef(weak, Cell.MACRO, k, users[weak]), self.hg[weak][Cell.MACRO][k])])
        return phi

    def receive_vector(self, cell, user, users):
        key = (cell, user) if self.mode == "zf" else (cell, user) + _foreign_key(cell, users)
        u = self._u_cache.get(key)
        if u is None:
            if self.mode == "zf":
                tx = self.stronger[user] if cell == Cell.MACRO else Cell.MACRO
                u = null_vector(self.hg[tx][cell][user])
            else:
                _, u = _mmse_kernel(self.hg[cell][cell][user], self.phi_inv(cell, user, users))
            self._u_cache[key] = u
        return u

    def finish(self, users, u):
        """ZF transmit design and rates for fixed receive vectors.

        The rate of stream ``l`` uses ``|u_l^H H_l G v_l|^2``, which ZF makes
        equal to ``d_l^2``.
        """
        J = self.J
        V, d, lam, rates = [], [], [], []
        for cell in CELLS:
            idx = list(users[cell])
            H0 = np.einsum("li,lij->lj", u[cell].conj(), self.hg[cell][cell][idx])
            Vc, dc = _zf(H0)
            lam_c = self.lam[cell][idx]
            zeta = self.topology.zeta[cell][cell][idx]
            if cell == Cell.MACRO:
                res = np.array([self.residual_phi(k, users) for k in idx])
                noise = np.einsum("li,lij,lj->l", u[cell].conj(), res, u[cell]).real
            else:
                noise = self.sigma2
            rates.append(log2_1p((J + 1) * self.params.tx_power(cell) / J * zeta * lam_c * dc ** 2 / noise))
            V.append(Vc)
            d.append(dc)
            lam.append(lam_c)
        return V, d, lam, rates

    def solution(self, users, u, V, d, lam, rates, mode):
        group = IAGroup(self.channels, tuple(tuple(x) for x in users))
        return IASolution(group=group, mode=mode, G=self.G, u=u, V=V, d=d, lam=lam, rates=rates,
                          aligned_interferer=tuple(self.stronger[k] for k in users[Cell.MACRO]))

    def evaluate(self, users):
        u = [np.array([self.receive_vector(cell, k, users) for k in users[cell]]) for cell in CELLS]
        sol = self.solution(users, u, *self.finish(users, u), self.mode)
        sol.trace = [sol.sum_rate]
        return sol


def _foreign_key(cell, users):
    if cell == Cell.MACRO:
        return (tuple(users[Cell.FEMTO1]), tuple(users[Cell.FEMTO2]))
    return (tuple(users[Cell.MACRO]),)


def evaluate_ia_assignment(group, realization, topology, params, sigma2, mode="mmse"):
    """Receive vectors, ZF beamformers and per-user rates for one IA group."""
    ctx = _Context(group.channels, realization, topology, params, sigma2, mode)
    return ctx.evaluate(group.users)


def subset_search(allocation, realization, topology, params, sigma2, mode="mmse"):
    """Opportunistic choice of the J users per cell that maximise the IA sum-rate.

    Every combination of ``J`` leftover users in each cell is evaluated;
    the first best candidate in lexicographic (macro, F1, F2) order wins.

    Returns
    -------
    users : tuple
        Chosen user tuple per cell.
    solution : IASolution
    """
    J = allocation.ia_streams
    if J < 1:
        raise ValueError("IA needs J >= 1 streams")
    ctx = _Context(allocation.ia_group_channels, realization, topology, params, sigma2, mode)
    choices = [list(itertools.combinations(allocation.ia_users[c], J)) for c in CELLS]
    best = None
    for users in itertools.product(*choices):
        sol = ctx.evaluate(users)
        if best is None or sol.sum_rate > best.sum_rate:
            best = sol
    return best.group.users, best


@numba.njit(cache=True)
def _receive_update(phi_inv, hg, v):
    w = phi_inv @ (hg @ v)
    return w / np.sqrt(np.sum(np.abs(w) ** 2))


def iterate_vectors(solution, group, realization, topology, params, sigma2, iterations):
    """Alternate MMSE receive updates and ZF transmit updates.

    Each round sets ``u = phi^{-1} H G v / ||.||`` for every user, using the
    user's current ZF column ``v``, then recomputes the ZF beamformers and
    rates. The returned solution's ``trace`` lists the sum-rate before the
    first round and after each round.
    """
    if iterations <= 0:
        return solution
    ctx = _Context(group.channels, realization, topology, params, sigma2, "mmse")
    users = group.users
    phi_inv = [[ctx.phi_inv(cell, k, users) for k in users[cell]] for cell in CELLS]
    hg = [ctx.hg[cell][cell][list(users[cell])] for cell in CELLS]
    V = solution.V
    trace = list(solution.trace) if solution.trace else [solution.sum_rate]
    for _ in range(iterations):
        u = [np.array([_receive_update(phi_inv[cell][i], hg[cell][i], np.ascontiguousarray(V[cell][:, i]))
                       for i in range(group.J)]) for cell in CELLS]
        V, d, lam, rates = ctx.finish(users, u)
        trace.append(float(sum(r.sum() for r in rates)))
    result = ctx.solution(users, u, V, d, lam, rates, solution.mode)
    result.trace = trace
    return result
