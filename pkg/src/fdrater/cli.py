"""Command-line front end.

Every subcommand writes CSV (header row, 12 significant digits) or JSON to
stdout. Exit codes: 0 success, 2 usage error, 3 input-data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import hsinr, multichannel, sic, single
from .model import (
    FlatSic,
    LinkInstance,
    OutOfRangeError,
    StationParams,
    db_to_linear,
    equal_allocation,
    sum_rate_multi,
    sum_rate_single,
    tdd_maxima,
)

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

POLICIES = ("max_rate", "hsinr", "equal")


class DataError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def _write_rows(out, header: Sequence[str], rows) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def _dump_json(out, obj) -> None:
    json.dump(obj, out, indent=2, sort_keys=True)
    out.write("\n")


def _single_link(args):
    bs = StationParams(noise=1.0, sic=FlatSic(args.xinr_bs))
    ms = StationParams(noise=1.0, sic=FlatSic(args.xinr_ms))
    return bs, ms, db_to_linear(args.snr_ul_db), db_to_linear(args.snr_dl_db)


def cmd_single(args, out) -> None:
    bs, ms, h_mb, h_bm = _single_link(args)
    opt = single.single_channel_optimum(bs, ms, h_mb, h_bm)
    rate = float(sum_rate_single(bs, ms, h_mb, h_bm, args.p_b, args.p_m))
    tdd_ul = float(np.log2(1 + h_mb))
    tdd_dl = float(np.log2(1 + h_bm))
    p = single.capacity_extension_p(h_bm, h_mb, args.xinr_ms, args.xinr_bs)
    holds_ul, holds_dl = single.check_condition1(bs, ms, h_mb, h_bm, args.p_b, args.p_m)
    _write_rows(
        out,
        ["rate", "fd_rate", "tdd_ul_max", "tdd_dl_max", "tdd_max", "winner",
         "best_rate", "p", "cond1_ul", "cond1_dl"],
        [[rate, float(sum_rate_single(bs, ms, h_mb, h_bm, 1.0, 1.0)), tdd_ul, tdd_dl,
          max(tdd_ul, tdd_dl), opt.winner, opt.rate, p, holds_ul, holds_dl]],
    )


def cmd_capregion(args, out) -> None:
    bs, ms, h_mb, h_bm = _single_link(args)
    pts = single.trace_capacity_boundary(bs, ms, h_mb, h_bm, args.points)
    tdd_ul = float(np.log2(1 + h_mb))
    tdd_dl = float(np.log2(1 + h_bm))
    _write_rows(
        out,
        ["r_dl_norm", "r_ul_norm", "r_dl", "r_ul"],
        [[pt.r_dl / tdd_dl, pt.r_ul / tdd_ul, pt.r_dl, pt.r_ul] for pt in pts],
    )


def _db_grid(lo, hi, step) -> np.ndarray:
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def cmd_two_uni(args, out) -> None:
    gmax = db_to_linear(args.gamma_max_db)
    hi = args.gamma_max_db if args.snr_max_db is None else args.snr_max_db
    if hi > args.gamma_max_db:
        raise argparse.ArgumentTypeError("--snr-max-db cannot exceed --gamma-max-db")
    grid_db = _db_grid(args.snr_min_db, hi, args.step_db)
    rows = []
    for eta in args.eta:
        for rho in args.rho:
            geom = single.TwoUniGeometry(
                eta=eta, rho=rho, gamma_max_m1b=gmax, gamma_max_bm2=gmax,
                gamma_max_m1m2=gmax, gamma_bb=args.gamma_bb,
            )
            grid = db_to_linear(grid_db)
            pmap = single.two_uni_extension_map(geom, grid, grid)
            for i, a in enumerate(grid_db):
                for j, b in enumerate(grid_db):
                    rows.append([eta, rho, a, b, pmap[i, j]])
    _write_rows(out, ["eta", "rho", "gamma_m1b_db", "gamma_bm2_db", "p"], rows)


def _ms_sic(spec: str, k: int):
    if spec == "model":
        return None
    if spec.startswith("trace:"):
        path = spec[len("trace:"):]
        try:
            trace = sic.load_trace(path)
        except OSError as exc:
            raise DataError(f"cannot read trace {path!r}: {exc}") from exc
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
        return sic.to_profile(trace, channel_width_hz=sic.CHANNEL_WIDTH_HZ)
    raise argparse.ArgumentTypeError(f"--sic must be 'model' or 'trace:PATH', got {spec!r}")


def _eval_link(k, gamma_db, sic_spec, normalize) -> LinkInstance:
    link = sic.calibrate_evaluation(k, gamma_db, ms_sic=_ms_sic(sic_spec, k))
    if normalize:
        # Same total radiated power as TDD, where one station is silent.
        link = link.with_budgets(0.5 * link.bs.p_max, 0.5 * link.ms.p_max)
    return link


def _opts(args) -> multichannel.SolveOptions:
    return multichannel.SolveOptions(
        epsilon=args.epsilon, delta_c=args.delta_c, multistart=args.multistart
    )


def _allocation_outputs(link, alloc, tdd, out, args, extra) -> None:
    rep = sum_rate_multi(link, alloc, tdd)
    payload = {
        "k": link.k_channels,
        "c": float(alloc.c),
        "p_b": [float(x) for x in alloc.p_b],
        "p_m": [float(x) for x in alloc.p_m],
        "rate": rep.sum_rate,
        "tdd_max": rep.tdd_max,
        "extension_p": rep.extension_p,
    }
    payload.update(extra)
    _dump_json(out, payload)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            _write_rows(
                fh,
                ["k", "p_b", "p_m", "ul_rate", "dl_rate", "fd"],
                [[i + 1, pb, pm, u, d, pb > 0 and pm > 0]
                 for i, (pb, pm, (u, d)) in enumerate(zip(alloc.p_b, alloc.p_m, rep.per_channel))],
            )


def cmd_multiopt(args, out) -> None:
    link = _eval_link(args.k, args.gamma_avg_db, args.sic, args.normalize_total_power)
    tdd = tdd_maxima(_eval_link(args.k, args.gamma_avg_db, args.sic, False))
    opts = _opts(args)
    sol = multichannel.maximum_rate(link, opts)
    dc = opts.delta_c if opts.delta_c is not None else multichannel.delta_c_for(args.k, opts.epsilon)
    _allocation_outputs(
        link, sol.allocation, tdd, out, args,
        {"delta_c": dc, "epsilon": multichannel.epsilon_for(args.k, dc)},
    )


def cmd_hsinr(args, out) -> None:
    link = _eval_link(args.k, args.gamma_avg_db, args.sic, args.normalize_total_power)
    tdd = tdd_maxima(_eval_link(args.k, args.gamma_avg_db, args.sic, False))
    alloc = hsinr.hsinr_maximum_rate(link, args.epsilon)
    _allocation_outputs(
        link, alloc, tdd, out, args,
        {"hsinr_rate": hsinr.hsinr_rate(link, alloc), "epsilon": args.epsilon},
    )


def cmd_sweep(args, out) -> None:
    grid = _db_grid(args.gamma_min_db, args.gamma_max_db, args.gamma_step_db)
    opts = _opts(args)
    rows = []
    for k in args.k:
        for gamma_db in grid:
            link = _eval_link(k, gamma_db, args.sic, args.normalize_total_power)
            tdd = tdd_maxima(_eval_link(k, gamma_db, args.sic, False))
            for policy in args.policy:
                if policy == "max_rate":
                    alloc = multichannel.maximum_rate(link, opts).allocation
                elif policy == "hsinr":
                    alloc = hsinr.hsinr_maximum_rate(link)
                else:
                    alloc = equal_allocation(link)
                rep = sum_rate_multi(link, alloc, tdd)
                rows.append([
                    k, gamma_db, policy, rep.sum_rate, rep.sum_rate / k,
                    rep.tdd_max, rep.extension_p, alloc.c,
                ])
    _write_rows(
        out,
        ["k", "gamma_avg_db", "policy", "sum_rate", "rate_per_channel",
         "tdd_max", "extension_p", "c"],
        rows,
    )


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {text}")
    return v


def _unit(text):
    v = float(text)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


def _k_arg(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"K must be >= 1, got {text}")
    return v


def _add_single_link(p):
    p.add_argument("--snr-ul-db", type=float, required=True, help="UL SNR at full power, dB")
    p.add_argument("--snr-dl-db", type=float, required=True, help="DL SNR at full power, dB")
    p.add_argument("--xinr-bs", type=_nonneg, default=0.0, help="BS XINR at full power, linear")
    p.add_argument("--xinr-ms", type=_nonneg, default=0.0, help="MS XINR at full power, linear")


def _add_eval(p, solver=True):
    p.add_argument("--sic", default="model", help="'model' or 'trace:PATH'")
    p.add_argument("--normalize-total-power", action="store_true",
                   help="halve both budgets so total power matches TDD")
    if solver:
        p.add_argument("--epsilon", type=_positive, default=0.1,
                       help="absolute rate error target, b/s/Hz")
        p.add_argument("--delta-c", type=_positive, default=None,
                       help="canceller grid step; overrides --epsilon")
        p.add_argument("--multistart", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fd-rater",
        description="Full-duplex rate, capacity-region and power-allocation tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("single", help="single-channel FD versus TDD")
    _add_single_link(p)
    p.add_argument("--p-b", type=_unit, default=1.0, help="BS power as a fraction of its budget")
    p.add_argument("--p-m", type=_unit, default=1.0, help="MS power as a fraction of its budget")
    p.set_defaults(func=cmd_single)

    p = sub.add_parser("capregion", help="FD capacity-region boundary")
    _add_single_link(p)
    p.add_argument("--points", type=int, default=100)
    p.set_defaults(func=cmd_capregion)

    p = sub.add_parser("two-uni", help="extension map for two unidirectional links")
    p.add_argument("--eta", type=_positive, nargs="+", default=[2.0, 3.0, 4.0])
    p.add_argument("--rho", type=_positive, nargs="+", default=[0.25, 0.5, 0.75, 1.0])
    p.add_argument("--gamma-max-db", type=float, default=20.0,
                   help="SNR and INR at the reference distance, dB")
    p.add_argument("--gamma-bb", type=_nonneg, default=1.0, help="BS XINR, linear")
    p.add_argument("--snr-min-db", type=float, default=0.0)
    p.add_argument("--snr-max-db", type=float, default=None)
    p.add_argument("--step-db", type=_positive, default=1.0)
    p.set_defaults(func=cmd_two_uni)

    p = sub.add_parser("multiopt", help="optimal OFDM allocation and canceller position")
    p.add_argument("--k", type=_k_arg, default=33)
    p.add_argument("--gamma-avg-db", type=float, required=True)
    _add_eval(p)
    p.add_argument("--csv", help="also write the per-channel allocation here")
    p.set_defaults(func=cmd_multiopt)

    p = sub.add_parser("hsinr", help="high-SINR closed-form allocation")
    p.add_argument("--k", type=_k_arg, default=33)
    p.add_argument("--gamma-avg-db", type=float, required=True)
    _add_eval(p, solver=False)
    p.add_argument("--epsilon", type=_positive, default=1e-6)
    p.add_argument("--csv", help="also write the per-channel allocation here")
    p.set_defaults(func=cmd_hsinr)

    p = sub.add_parser("sweep", help="sum rate and extension versus average SNR")
    p.add_argument("--k", type=_k_arg, nargs="+", default=[9, 17, 33])
    p.add_argument("--gamma-min-db", type=float, default=0.0)
    p.add_argument("--gamma-max-db", type=float, default=50.0)
    p.add_argument("--gamma-step-db", type=_positive, default=10.0)
    p.add_argument("--policy", choices=POLICIES, nargs="+", default=list(POLICIES))
    _add_eval(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[List[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args, out)
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        print(f"fd-rater: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OutOfRangeError, sic.TraceFormatError) as exc:
        print(f"fd-rater: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (multichannel.NumericError, ArithmeticError, FloatingPointError) as exc:
        print(f"fd-rater: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"fd-rater: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
