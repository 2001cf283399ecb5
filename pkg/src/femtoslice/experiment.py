"""
Monte-Carlo harness: trade-off sweeps, the OMFC baseline and the
optimal-trade-off curve.

Random streams are keyed on ``(master_seed, trial, resample)`` only, so the
same topology and fading are reused across every SNR and trade-off number
(common random numbers). A trial therefore evaluates all ``(snr, A)`` pairs
in one pass, and comparisons between curves can use paired differences.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import (FEMTO_CELLS, STREAM_FADING, STREAM_TOPOLOGY, Cell,
                      TopologySamplingError, sample_fading, sample_topology, snr_to_noise,
                      trial_rng)
from .ia import iterate_vectors, subset_search
from .ora import allocate, log2_1p, no_pc_rate_tables, ora_final_rates

log = logging.getLogger(__name__)

IA_MODE_NAMES = ("zf", "mmse", "mmse_iterated")
MAX_RESAMPLES = 100
THREADS_ENV = "FEMTOSLICE_THREADS"


@dataclass(frozen=True)
class TrialResult:
    sum_rate: float
    ora_part: float
    ia_part: float
    resamples: int = 0


@dataclass(frozen=True)
class SweepRecord:
    snr_db: float
    trade_off_A: int
    trial_count: int
    mean_sum_rate: float
    std_err: float
    mean_ora_part: float
    mean_ia_part: float
    ia_mode: str


@dataclass(frozen=True)
class TradeoffCurvePoint:
    snr_db: float
    optimal_A: int
    best_mean_sum_rate: float


def std_err(x):
    """Standard error of the mean (zero for a single sample)."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return 0.0
    return float(np.std(x, ddof=1) / np.sqrt(x.size))


def _check_mode(ia_mode):
    if ia_mode not in IA_MODE_NAMES:
        raise ValueError("unknown ia_mode %r; expected one of %s" % (ia_mode, ", ".join(IA_MODE_NAMES)))


def sample_scenario(params, trial, resample=0):
    """Topology and fading for a trial, skipping failed topology draws.

    Returns ``(topology, realization, resample)`` where ``resample`` is the
    sub-stream that was finally used.
    """
    while resample <= MAX_RESAMPLES:
        try:
            topo = sample_topology(params, trial_rng(params.master_seed, trial, resample, STREAM_TOPOLOGY))
        except TopologySamplingError:
            resample += 1
            continue
        fading = sample_fading(params, trial_rng(params.master_seed, trial, resample, STREAM_FADING))
        return topo, fading, resample
    raise RuntimeError("trial %d: no valid scenario after %d resamples" % (trial, MAX_RESAMPLES))


def _ia_part(allocation, realization, topology, params, sigma2, ia_mode):
    if not allocation.ia_active:
        return 0.0, 0.0
    search_mode = "zf" if ia_mode == "zf" else "mmse"
    _, sol = subset_search(allocation, realization, topology, params, sigma2, mode=search_mode)
    if ia_mode != "mmse_iterated":
        return sol.sum_rate, sol.sum_rate
    it = iterate_vectors(sol, sol.group, realization, topology, params, sigma2, params.ia_iterations)
    return sol.sum_rate, it.sum_rate


def _pipeline(topology, realization, params, sigma2, A, ia_mode, tables=None):
    alloc = allocate(realization, topology, params, sigma2, A, tables=tables)
    ora = ora_final_rates(alloc, realization, topology, params, sigma2).ora_sum
    plain, iterated = _ia_part(alloc, realization, topology, params, sigma2, ia_mode)
    return ora, (iterated if ia_mode == "mmse_iterated" else plain)


def run_trial(params, sigma2, A, ia_mode, trial_seed):
    """One Monte-Carlo trial: sample, allocate, ORA rates, then IA.

    ``trial_seed`` is the trial index; the streams come from
    ``params.master_seed`` and that index. A singular or degenerate channel
    aborts the draw and the next resample stream is used.
    """
    _check_mode(ia_mode)
    resample = 0
    while True:
        topo, fading, resample = sample_scenario(params, trial_seed, resample)
        try:
            ora, ia = _pipeline(topo, fading, params, sigma2, A, ia_mode)
        except np.linalg.LinAlgError as exc:
            log.debug("trial %d A=%d: %s; resampling", trial_seed, A, exc)
            resample += 1
            if resample > MAX_RESAMPLES:
                raise RuntimeError("trial %d: too many degenerate draws" % trial_seed) from exc
            continue
        return TrialResult(ora + ia, ora, ia, resample)


def omfc_split(num_subchannels):
    """Number of sub-channels reserved for the macro cell (the larger half)."""
    return num_subchannels - num_subchannels // 2


def omfc_trial(topology, realization, params, sigma2):
    """Orthogonal macro/femto split: macro ORA on the first ``ceil(N/2)``
    sub-channels, both femtocells sharing the rest, each interference-free."""
    del topology  # power control makes the desired power P |h|^2
    half = omfc_split(params.num_subchannels)
    macro = params.tx_power_macro * np.abs(realization.h[Cell.MACRO][Cell.MACRO][:, :half]) ** 2
    total = log2_1p(macro.max(axis=0) / sigma2).sum()
    for c in FEMTO_CELLS:
        femto = params.tx_power(c) * np.abs(realization.h[c][c][:, half:]) ** 2
        total += log2_1p(femto.max(axis=0) / sigma2).sum()
    return float(total)


def omfc_baseline(params, sigma2):
    """Mean OMFC sum-rate over ``params.trials`` trials (even ``N`` only)."""
    if params.num_subchannels % 2:
        raise ValueError("OMFC baseline needs an even number of sub-channels, got %d" % params.num_subchannels)
    vals = [omfc_trial(*sample_scenario(params, t)[:2], params, sigma2) for t in range(params.trials)]
    return float(np.mean(vals))


def _trial_block(params, trial, modes):
    """All (mode, snr, A) results plus OMFC for one trial.

    Shapes: values (modes, snr, A, 3) with [sum, ora, ia]; resamples
    (modes, snr, A); omfc (snr,).
    """
    n_snr = len(params.snr_db_grid)
    n_a = params.num_subchannels + 1
    values = np.zeros((len(modes), n_snr, n_a, 3))
    resamples = np.zeros((len(modes), n_snr, n_a), dtype=np.int64)
    omfc = np.zeros(n_snr)
    topo, fading, r0 = sample_scenario(params, trial)
    for si, snr in enumerate(params.snr_db_grid):
        sigma2 = snr_to_noise(snr, params.tx_power_macro)
        omfc[si] = omfc_trial(topo, fading, params, sigma2)
        tables = no_pc_rate_tables(fading, topo, params, sigma2)
        for A in range(n_a):
            alloc = allocate(fading, topo, params, sigma2, A, tables=tables)
            ora = ora_final_rates(alloc, fading, topo, params, sigma2).ora_sum
            ia = {}
            try:
                if "zf" in modes:
                    ia["zf"] = _ia_part(alloc, fading, topo, params, sigma2, "zf")[0]
                if "mmse" in modes or "mmse_iterated" in modes:
                    mode = "mmse_iterated" if "mmse_iterated" in modes else "mmse"
                    ia["mmse"], ia["mmse_iterated"] = _ia_part(alloc, fading, topo, params, sigma2, mode)
            except np.linalg.LinAlgError:
                ia = None
            for mi, mode in enumerate(modes):
                if ia is None:
                    res = run_trial(params, sigma2, A, mode, trial)
                    values[mi, si, A] = (res.sum_rate, res.ora_part, res.ia_part)
                    resamples[mi, si, A] = res.resamples
                else:
                    values[mi, si, A] = (ora + ia[mode], ora, ia[mode])
                    resamples[mi, si, A] = r0
    return values, resamples, omfc


def _run_chunk(args):
    params, trials, modes = args
    out = [_trial_block(params, t, modes) for t in trials]
    return tuple(np.stack([o[i] for o in out], axis=-1) for i in range(3))


def resolve_workers(workers=None):
    """Worker count: explicit value, else ``FEMTOSLICE_THREADS``, else the CPU count."""
    if workers is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


@dataclass
class SimulationTable:
    """Per-trial results of a full sweep.

    ``values[mode, snr, A, :, trial]`` holds ``(sum_rate, ora_part,
    ia_part)``; ``omfc[snr, trial]`` the OMFC sum-rate of the same draw.
    """

    params: object
    modes: tuple
    values: np.ndarray      # (modes, snr, A, 3, trials)
    resamples: np.ndarray   # (modes, snr, A, trials)
    omfc: np.ndarray        # (snr, trials)

    @property
    def snr_db(self):
        return self.params.snr_db_grid

    def _mi(self, mode):
        return self.modes.index(mode)

    def _si(self, snr_db):
        return self.snr_db.index(float(snr_db))

    def samples(self, mode, snr_db, A):
        """Per-trial total sum-rates."""
        return self.values[self._mi(mode), self._si(snr_db), A, 0]

    def records(self, mode):
        mi = self._mi(mode)
        out = []
        for si, snr in enumerate(self.snr_db):
            for A in range(self.values.shape[2]):
                v = self.values[mi, si, A]
                out.append(SweepRecord(snr_db=snr, trade_off_A=A, trial_count=v.shape[1],
                                       mean_sum_rate=float(v[0].mean()), std_err=std_err(v[0]),
                                       mean_ora_part=float(v[1].mean()), mean_ia_part=float(v[2].mean()),
                                       ia_mode=mode))
        return out

    def curve(self, mode):
        out = []
        for si, snr in enumerate(self.snr_db):
            means = self.values[self._mi(mode), si, :, 0].mean(axis=1)
            # Ties go to the larger A (plain ORA is the simpler scheme).
            best = int(len(means) - 1 - np.argmax(means[::-1]))
            out.append(TradeoffCurvePoint(snr_db=snr, optimal_A=best, best_mean_sum_rate=float(means[best])))
        return out

    def omfc_mean(self, snr_db):
        return float(self.omfc[self._si(snr_db)].mean())


def simulate(params, modes=("mmse",), workers=None, chunk_size=25):
    """Run ``params.trials`` trials over the SNR grid and every A in 0..N.

    Trials are split into contiguous chunks; with more than one worker the
    chunks run in separate processes. Results are concatenated in trial
    order, so the output does not depend on the worker count.
    """
    modes = tuple(modes)
    for m in modes:
        _check_mode(m)
    chunks = [(params, range(s, min(s + chunk_size, params.trials)), modes)
              for s in range(0, params.trials, chunk_size)]
    n_workers = resolve_workers(workers)
    if n_workers == 1:
        parts = [_run_chunk(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(_run_chunk, chunks))
    values = np.concatenate([p[0] for p in parts], axis=-1)
    resamples = np.concatenate([p[1] for p in parts], axis=-1)
    omfc = np.concatenate([p[2] for p in parts], axis=-1)
    return SimulationTable(params=params, modes=modes, values=values, resamples=resamples, omfc=omfc)


def sweep(params, ia_mode, workers=None):
    """Mean sum-rate and its standard error for every (SNR, A)."""
    _check_mode(ia_mode)
    return simulate(params, (ia_mode,), workers=workers).records(ia_mode)


def tradeoff_curve(params, ia_mode, workers=None):
    """Optimal trade-off number per SNR."""
    _check_mode(ia_mode)
    return simulate(params, (ia_mode,), workers=workers).curve(ia_mode)
