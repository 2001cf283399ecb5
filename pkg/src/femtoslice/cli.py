"""
Command-line front end.

Configuration is resolved in three layers: built-in defaults, an optional
``key = value`` file, then command-line flags. Keys ending in ``_db`` are
converted to linear units here and nowhere else.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 selftest
failure.
"""

import argparse
import csv
import dataclasses
import logging
import math
import os
import sys
from dataclasses import dataclass

from .channel import SystemParams, snr_to_noise
from .experiment import resolve_workers, sample_scenario, omfc_trial, simulate, std_err

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_SELFTEST = 0, 1, 2, 3

CLI_MODES = {"zf": "zf", "mmse": "mmse", "mmse-iter": "mmse_iterated", "mmse_iterated": "mmse_iterated"}

SWEEP_HEADER = ["snr_db", "trade_off_A", "ia_mode", "trials", "mean_sum_rate", "std_err",
                "mean_ora_part", "mean_ia_part"]
TRIAL_HEADER = ["snr_db", "trade_off_A", "trial", "sum_rate", "ora_part", "ia_part", "resamples"]
CURVE_HEADER = ["snr_db", "optimal_A", "best_mean_sum_rate", "omfc_mean_sum_rate"]
OMFC_HEADER = ["snr_db", "trials", "omfc_mean_sum_rate", "std_err"]

log = logging.getLogger("femtoslice")

_PARAM_FIELDS = {f.name: f for f in dataclasses.fields(SystemParams)}
_INT_KEYS = {"num_macro_users", "num_femto_users", "num_subchannels", "trials", "master_seed", "ia_iterations"}
_FLOAT_KEYS = {"tx_power_macro", "tx_power_femto1", "tx_power_femto2", "pathloss_exponent", "d0_outdoor",
               "d0_indoor", "carrier_hz", "macro_radius", "femto_radius", "min_bs_user_distance_outdoor",
               "min_bs_user_distance_indoor", "delta_db"}
_KEY_ORDER = ["num_macro_users", "num_femto_users", "num_subchannels", "tx_power_macro", "tx_power_femto1",
              "tx_power_femto2", "pathloss_exponent", "delta_db", "d0_outdoor", "d0_indoor", "carrier_hz",
              "macro_radius", "femto_radius", "min_bs_user_distance_outdoor", "min_bs_user_distance_indoor",
              "snr_db_grid", "trials", "master_seed", "ia_iterations", "ia_mode", "output_path", "emit_per_trial"]
KNOWN_KEYS = frozenset(_KEY_ORDER)


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append("key %r" % key)
        if line is not None:
            where.append("line %d" % line)
        super().__init__("%s%s" % (message, " (%s)" % ", ".join(where) if where else ""))
        self.key = key
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    params: SystemParams
    delta_db: float = -10.0
    ia_mode: str = "mmse"
    output_path: str = "out.csv"
    emit_per_trial: bool = False

    def items(self):
        """Resolved ``(key, value)`` pairs in a fixed order."""
        out = []
        for key in _KEY_ORDER:
            if key == "delta_db":
                out.append((key, self.delta_db))
            elif key in _PARAM_FIELDS:
                out.append((key, getattr(self.params, key)))
            else:
                out.append((key, getattr(self, key)))
        return out

    def to_text(self):
        return "".join("%s = %s\n" % (k, _format_value(v)) for k, v in self.items())


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    return str(v)


def _convert(key, raw, line=None):
    raw = raw.strip() if isinstance(raw, str) else raw
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            val = float(raw)
            if not math.isfinite(val):
                raise ValueError(raw)
            return val
        if key == "snr_db_grid":
            vals = tuple(float(x) for x in str(raw).split(",") if x.strip())
            if not vals or not all(math.isfinite(x) for x in vals):
                raise ValueError(raw)
            return vals
        if key == "emit_per_trial":
            low = str(raw).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if key == "ia_mode":
            if raw not in CLI_MODES:
                raise ValueError(raw)
            return CLI_MODES[raw]
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError("cannot parse value %r" % (raw,), key=key, line=line) from None


def read_config_file(path):
    """Parse a flat ``key = value`` file into ``{key: (value, line)}``."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError("cannot read config file %s: %s" % (path, exc.strerror)) from None
    for no, text in enumerate(lines, start=1):
        text = text.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError("expected 'key = value'", line=no)
        key, raw = (s.strip() for s in text.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError("unknown key", key=key, line=no)
        out[key] = (_convert(key, raw, line=no), no)
    return out


def parse_config(path=None, overrides=None):
    """Resolve defaults <- config file <- flag overrides into a RunConfig."""
    values = {}
    lines = {}
    if path is not None:
        for key, (val, no) in read_config_file(path).items():
            values[key] = val
            lines[key] = no
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key not in KNOWN_KEYS:
            raise ConfigError("unknown key", key=key)
        values[key] = _convert(key, raw) if isinstance(raw, str) else raw
        lines.pop(key, None)

    delta_db = values.pop("delta_db", -10.0)
    run_keys = {k: values.pop(k) for k in ("ia_mode", "output_path", "emit_per_trial") if k in values}
    try:
        params = SystemParams(penetration_delta=10.0 ** (delta_db / 10.0), **values)
    except ValueError as exc:
        key = next((k for k in values if k in str(exc)), "delta_db" if "delta" in str(exc) else None)
        raise ConfigError(str(exc), key=key, line=lines.get(key)) from None
    cfg = RunConfig(params=params, delta_db=delta_db, **run_keys)
    out_dir = os.path.dirname(os.path.abspath(cfg.output_path))
    if not os.path.isdir(out_dir):
        raise ConfigError("output directory %s does not exist" % out_dir, key="output_path")
    return cfg


def _fmt(x):
    return "%.12g" % x


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _echo(cfg, out):
    out.write("".join("# %s" % line for line in cfg.to_text().splitlines(keepends=True)))
    with open(cfg.output_path + ".config", "w", encoding="ascii") as fh:
        fh.write(cfg.to_text())


def _trials_path(path):
    root, ext = os.path.splitext(path)
    return root + ".trials" + (ext or ".csv")


def cmd_sweep(cfg, out=sys.stdout):
    """Aggregate (and optionally per-trial) sum-rates for every (SNR, A)."""
    _echo(cfg, out)
    table = simulate(cfg.params, (cfg.ia_mode,))
    rows = []
    for r in table.records(cfg.ia_mode):
        rows.append([_fmt(r.snr_db), r.trade_off_A, r.ia_mode, r.trial_count, _fmt(r.mean_sum_rate),
                     _fmt(r.std_err), _fmt(r.mean_ora_part), _fmt(r.mean_ia_part)])
    _write_csv(cfg.output_path, SWEEP_HEADER, rows)
    if cfg.emit_per_trial:
        vals, res = table.values[0], table.resamples[0]
        trial_rows = []
        for si, snr in enumerate(table.snr_db):
            for A in range(vals.shape[1]):
                for t in range(vals.shape[3]):
                    s, o, i = vals[si, A, :, t]
                    trial_rows.append([_fmt(snr), A, t, _fmt(s), _fmt(o), _fmt(i), int(res[si, A, t])])
        _write_csv(_trials_path(cfg.output_path), TRIAL_HEADER, trial_rows)
    out.write("wrote %d rows to %s\n" % (len(rows), cfg.output_path))
    return EXIT_OK


def cmd_curve(cfg, out=sys.stdout):
    """Optimal trade-off number per SNR, with the OMFC reference."""
    _echo(cfg, out)
    table = simulate(cfg.params, (cfg.ia_mode,))
    rows = [[_fmt(p.snr_db), p.optimal_A, _fmt(p.best_mean_sum_rate), _fmt(table.omfc_mean(p.snr_db))]
            for p in table.curve(cfg.ia_mode)]
    _write_csv(cfg.output_path, CURVE_HEADER, rows)
    out.write("wrote %d rows to %s\n" % (len(rows), cfg.output_path))
    return EXIT_OK


def cmd_omfc(cfg, out=sys.stdout):
    """OMFC baseline alone; cheap since no IA is involved."""
    _echo(cfg, out)
    p = cfg.params
    if p.num_subchannels % 2:
        raise ValueError("OMFC baseline needs an even number of sub-channels")
    scenarios = [sample_scenario(p, t)[:2] for t in range(p.trials)]
    rows = []
    for snr in p.snr_db_grid:
        sigma2 = snr_to_noise(snr, p.tx_power_macro)
        vals = [omfc_trial(topo, fad, p, sigma2) for topo, fad in scenarios]
        rows.append([_fmt(snr), p.trials, _fmt(sum(vals) / len(vals)), _fmt(std_err(vals))])
    _write_csv(cfg.output_path, OMFC_HEADER, rows)
    out.write("wrote %d rows to %s\n" % (len(rows), cfg.output_path))
    return EXIT_OK


def cmd_selftest(fault=None, out=sys.stdout):
    from .selftest import run_selftest

    failed = run_selftest(fault=fault, out=lambda s: out.write(s + "\n"))
    if failed:
        out.write("selftest FAILED: %s\n" % ", ".join(failed))
        return EXIT_SELFTEST
    out.write("selftest passed\n")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", help="master seed (unsigned 64-bit)")
    common.add_argument("--trials", help="Monte-Carlo trials per point")
    common.add_argument("--snr", help="comma-separated SNR grid in dB")
    common.add_argument("--ia-mode", choices=sorted(CLI_MODES), help="IA receive design")
    common.add_argument("--iterations", help="transmit/receive iterations for mmse-iter")
    common.add_argument("--out", help="output CSV path")
    common.add_argument("--per-trial", action="store_true", default=None, help="also write per-trial CSV")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="femtoslice",
                                     description="ORA / interference-alignment trade-off simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="sum-rate versus trade-off number")
    sub.add_parser("curve", parents=[common], help="optimal trade-off number versus SNR")
    sub.add_parser("omfc", parents=[common], help="orthogonal macro/femto baseline")
    st = sub.add_parser("selftest", help="run the fast invariant suites")
    st.add_argument("--inject-fault", choices=["perturb-g"], help=argparse.SUPPRESS)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        return cmd_selftest(fault=args.inject_fault, out=out)
    overrides = {"master_seed": args.seed, "trials": args.trials, "snr_db_grid": args.snr,
                 "ia_mode": args.ia_mode, "ia_iterations": args.iterations, "output_path": args.out,
                 "emit_per_trial": args.per_trial}
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        sys.stderr.write("config error: %s\n" % exc)
        return EXIT_CONFIG
    log.debug("workers: %d", resolve_workers())
    command = {"sweep": cmd_sweep, "curve": cmd_curve, "omfc": cmd_omfc}[args.command]
    try:
        return command(cfg, out=out)
    except OSError as exc:
        sys.stderr.write("error: %s\n" % exc)
        return EXIT_RUNTIME
    except (RuntimeError, ValueError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
