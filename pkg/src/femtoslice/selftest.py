"""Fast invariant suites behind ``femtoslice selftest``."""

import itertools
import time

import numpy as np

from . import numerics
from .channel import CELLS, SystemParams, power_control, sample_fading, sample_topology, snr_to_noise
from .ia import IAGroup, evaluate_ia_assignment, receive_null_vector, reference_precoder, subset_search, zf_transmit
from .ora import Allocation, allocate, best_triplet, candidate_rate_no_pc

FAULTS = ("perturb-g",)


class SuiteFailure(Exception):
    pass


def _require(cond, msg="check failed"):
    if not cond:
        raise SuiteFailure(msg)


def _rand_c(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def suite_numerics(rng, fault=None):
    worst = 0.0
    for n in range(1, 7):
        for _ in range(50):
            a = _rand_c(rng, n, n) + n * np.eye(n)
            worst = max(worst, np.abs(a @ numerics.invert(a) - np.eye(n)).max())
    _require(worst < 1e-9, "invert residual %g" % worst)
    for J in range(1, 6):
        for _ in range(50):
            a = _rand_c(rng, J + 1, J)
            u = numerics.null_vector(a)
            _require(abs(np.linalg.norm(u) - 1) < 1e-12)
            _require(np.linalg.norm(u.conj() @ a) < 1e-9)
    for n in range(1, 6):
        b = _rand_c(rng, n, n)
        a = b.conj().T @ b
        v, lam = numerics.max_eigenvector(a)
        _require(abs(lam - np.linalg.eigvalsh(a)[-1]) < 1e-6 * max(1.0, lam))
    return "max invert residual %.2e" % worst


def suite_unitarity(rng, fault=None):
    worst = 0.0
    for J in range(1, 6):
        G = np.array(reference_precoder(J))
        if fault == "perturb-g":
            G = G + 1e-3 * _rand_c(rng, *G.shape)
        worst = max(worst, np.abs(G.conj().T @ G - np.eye(J)).max())
    _require(worst < 1e-10, "G^H G deviates from I by %g" % worst)
    return "max |G^H G - I| %.2e" % worst


def suite_alignment(rng, fault=None):
    worst = 0.0
    for J in range(1, 6):
        G = reference_precoder(J)
        for _ in range(200):
            H = np.diag(_rand_c(rng, J + 1))
            u = receive_null_vector(H, G)
            worst = max(worst, np.linalg.norm(u.conj() @ H @ G))
    _require(worst < 1e-8, "alignment residual %g" % worst)
    return "max |u^H H G| %.2e" % worst


def suite_zf(rng, fault=None):
    off, col = 0.0, 0.0
    for J in range(1, 6):
        for _ in range(200):
            H0 = _rand_c(rng, J, J)
            V, D = zf_transmit(H0)
            P = H0 @ V
            off = max(off, np.abs(P - np.diag(np.diag(P))).max())
            col = max(col, np.abs(np.linalg.norm(V, axis=0) - 1).max())
    _require(off < 1e-9 and col < 1e-9, "ZF off-diagonal %g, column norm error %g" % (off, col))
    return "max off-diagonal %.2e" % off


def suite_power_control(rng, fault=None):
    params = SystemParams()
    worst = 0.0
    for _ in range(50):
        topo = sample_topology(params, rng)
        lam = power_control(topo, params)
        for c in CELLS:
            worst = max(worst, np.abs(lam[c] * topo.zeta[c][c] - 1).max())
    _require(worst < 1e-12, "lambda * zeta deviates from 1 by %g" % worst)
    return "max |lambda zeta - 1| %.2e" % worst


def suite_oracles(rng, fault=None):
    params = SystemParams(num_macro_users=2, num_femto_users=2, num_subchannels=3)
    sigma2 = snr_to_noise(30.0, params.tx_power_macro)
    for _ in range(20):
        topo = sample_topology(params, rng)
        fad = sample_fading(params, rng)
        for n in range(3):
            t = best_triplet(fad, topo, params, sigma2, n)
            brute = max(
                (sum(candidate_rate_no_pc(fad, topo, params, sigma2, c, u, n) for c, u in zip(CELLS, trip)), trip)
                for trip in itertools.product(range(2), range(2), range(2)))
            _require(abs(brute[0] - t.metric) < 1e-12)
        metric = [best_triplet(fad, topo, params, sigma2, n).metric for n in range(3)]
        for A in range(4):
            alloc = allocate(fad, topo, params, sigma2, A)
            got = sum(metric[t.subchannel] for t in alloc.ora_channels)
            best = max(sum(metric[n] for n in s) for s in itertools.combinations(range(3), A))
            _require(abs(got - best) < 1e-12)
        # IA subset search versus plain enumeration: 2-choose-1 users per cell.
        alloc = Allocation(trade_off_A=1, ora_channels=[], ia_channels=(0, 1), ia_users=((0, 1),) * 3,
                           ia_streams=1)
        users, sol = subset_search(alloc, fad, topo, params, sigma2)
        brute = max((evaluate_ia_assignment(IAGroup((0, 1), ((m,), (f1,), (f2,))), fad, topo, params, sigma2)
                     .sum_rate, ((m,), (f1,), (f2,))) for m, f1, f2 in itertools.product(range(2), repeat=3))
        _require(abs(brute[0] - sol.sum_rate) < 1e-12 and brute[1] == users)
    return "20 instances"


SUITES = (
    ("numerics residuals", suite_numerics),
    ("reference precoder unitarity", suite_unitarity),
    ("alignment residuals", suite_alignment),
    ("zero-forcing diagonality", suite_zf),
    ("power-control identity", suite_power_control),
    ("small-instance brute-force oracles", suite_oracles),
)


def run_selftest(fault=None, seed=7, out=print):
    """Run every suite, print one line each, and return the failed names."""
    if fault is not None and fault not in FAULTS:
        raise ValueError("unknown fault %r" % (fault,))
    failed = []
    for name, fn in SUITES:
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        try:
            detail = fn(rng, fault=fault)
            ok = True
        except SuiteFailure as exc:
            detail, ok = str(exc), False
        out("%s  %-36s %6.2fs  %s" % ("PASS" if ok else "FAIL", name, time.perf_counter() - t0, detail))
        if not ok:
            failed.append(name)
    return failed
