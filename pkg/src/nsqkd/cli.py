"""Command-line entry point: ``python -m nsqkd <subcommand> ...``.

Exit codes: 0 success, 1 aborted run or failed check, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import boxcore as bx
from .hashing import collision_count
from .lpverify import max_guessing
from .protocol import ProtocolAbort, ProtocolParams, run_protocol
from .quantum import EprParams, epr_box
from .reconciliation import SCHEMES, EcConfig
from .security import (
    CSV_HEADER,
    LENGTH_RULES,
    key_distance_exact,
    key_table,
    p_grid,
    p_min,
    pa_bound,
    rate_curve,
    rows_to_csv,
)
from .verify import SUITES, run_suites

PRESETS = ("pr", "uniform", "epr", "deterministic")


class UsageError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _delta(text: str) -> str | float:
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"delta must be a number or 'auto', got {text!r}") from exc


def _common(p: argparse.ArgumentParser, formats: Sequence[str] = ("json",)) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed for every random stream")
    p.add_argument("--out", type=Path, default=None, help="write the result here instead of stdout")
    p.add_argument("--format", choices=formats, default=formats[0])


def _box_source(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--box", type=Path, help="JSON box file")
    g.add_argument("--preset", choices=PRESETS, default="pr")
    p.add_argument("--purity", type=float, default=1.0, help="visibility of the 'epr' preset")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nsqkd", description="Device-independent key distribution toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the protocol once on a noisy singlet source")
    p.add_argument("--n", type=int, required=True, help="number of pairs")
    p.add_argument("--m", type=int, default=6, help="Alice's setting count")
    p.add_argument("--delta", type=_delta, default="auto", help="estimation probability or 'auto' for N^-1/4")
    p.add_argument("--purity", type=float, default=1.0)
    p.add_argument("--ec-margin", type=float, default=EcConfig.margin)
    p.add_argument("--ec-scheme", choices=SCHEMES, default=EcConfig.scheme)
    p.add_argument("--sample-fraction", type=float, default=EcConfig.sample_fraction)
    p.add_argument("--length-rule", choices=LENGTH_RULES, default="finite")
    _common(p)

    p = sub.add_parser("rates", help="asymptotic key rate against purity")
    p.add_argument("--m", type=_int_list, required=True, help="comma-separated setting counts")
    p.add_argument("--p-grid", default="0.9:1.0:0.001", help="A:B:STEP")
    _common(p, ("csv", "json"))

    p = sub.add_parser("threshold", help="smallest purity with a positive rate")
    p.add_argument("--m", type=_int_list, required=True)
    p.add_argument("--tol", type=float, default=1e-4)
    _common(p, ("json", "csv"))

    p = sub.add_parser("verify-lemmas", help="run the verification suites")
    p.add_argument("--suite", default="all", help=f"'all' or comma-separated from {','.join(SUITES)}")
    _common(p)

    p = sub.add_parser("eve-lp", help="best no-signaling guessing probability of Alice's outcome")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--x", type=_int_list, default=[0], help="target setting string, comma-separated")
    _box_source(p)
    _common(p)

    p = sub.add_parser("hash-test", help="Toeplitz collision statistics")
    p.add_argument("--in-len", type=int, default=32)
    p.add_argument("--out-len", type=_int_list, default=[4, 8])
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--draws", type=int, default=100_000)
    _common(p, ("json", "csv"))

    p = sub.add_parser("key-distance", help="exact key distance against the hashing bound for one pair")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--n-s", type=int, default=1, help="key length (0 or 1 for a single pair)")
    _box_source(p)
    _common(p)
    return parser


def _emit(args, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)


def _plain(o: Any) -> Any:
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_plain) + "\n"


def _load_box(args):
    if args.box is not None:
        return bx.load_box(args.box)
    M = args.m
    if args.preset == "pr":
        return bx.pr_analog(M)
    if args.preset == "uniform":
        return bx.uniform_box(M)
    if args.preset == "deterministic":
        return bx.local_deterministic([0] * M, [0] * (M + 1))
    return epr_box(EprParams(args.purity, M))


def cmd_simulate(args) -> int:
    if args.n < 1 or args.m < 2:
        raise UsageError("--n must be positive and --m at least 2")
    ec = EcConfig(scheme=args.ec_scheme, margin=args.ec_margin, seed=args.seed, sample_fraction=args.sample_fraction)
    delta = args.n**-0.25 if args.delta == "auto" else args.delta
    if not 0 < delta < 1:
        raise UsageError(f"delta must lie in (0, 1), got {delta}")
    params = ProtocolParams(args.n, args.m, delta, seed=args.seed, ec=ec, length_rule=args.length_rule)
    source = epr_box(EprParams(args.purity, args.m))
    try:
        t = run_protocol(params, source)
    except ProtocolAbort as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        if exc.transcript is not None:
            _emit(args, exc.transcript.to_json(indent=1) + "\n")
        return 1
    _emit(args, t.to_json(indent=1) + "\n")
    print(f"N_e={t.N_e} N_r={t.N_r} N_c={t.N_c} B_est={t.B_est:.6f} N_s={t.N_s} keys_agree={t.keys_agree}", file=sys.stderr)
    return 0


def cmd_rates(args) -> int:
    grid = p_grid(args.p_grid)
    if any(not 0 <= p <= 1 for p in grid) or any(m < 2 for m in args.m):
        raise UsageError("purity must lie in [0, 1] and M at least 2")
    rows = [r for m in args.m for r in rate_curve(m, grid)]
    if args.format == "csv":
        _emit(args, rows_to_csv(rows))
    else:
        _emit(args, _dump([dict(zip(CSV_HEADER, (r.p, r.M, r.B, r.w, r.rate_raw, r.rate_clamped))) for r in rows]))
    return 0


def cmd_threshold(args) -> int:
    if any(m < 2 for m in args.m):
        raise UsageError("M must be at least 2")
    out = [{"M": m, "p_min": p_min(m, args.tol)} for m in args.m]
    if args.format == "csv":
        lines = ["M,p_min"] + [f"{r['M']},{'' if r['p_min'] is None else repr(r['p_min'])}" for r in out]
        _emit(args, "\n".join(lines) + "\n")
    else:
        _emit(args, _dump(out))
    return 0


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [s.strip() for s in args.suite.split(",") if s.strip()]
    if not names or any(n not in SUITES for n in names):
        raise UsageError(f"--suite must be 'all' or names from {sorted(SUITES)}")
    results = run_suites(names, args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} ({r.checks} checks)", file=sys.stderr)
    passed = all(r.passed for r in results)
    _emit(args, _dump({"passed": passed, "suites": [r.to_dict() for r in results]}))
    return 0 if passed else 1


def cmd_eve_lp(args) -> int:
    box = _load_box(args)
    x = tuple(args.x)
    N = box.n_pairs
    if len(x) == 1 and N > 1:
        x = x * N
    if len(x) != N or any(not 0 <= v < box.M for v in x):
        raise UsageError(f"--x needs {N} setting(s) in 0..{box.M - 1}")
    value, _, res = max_guessing(box, x)
    bc = bx.bc_product_value(box)
    _emit(args, _dump({"value": value, "bc": bc, "slack": bc - value, "pivots": res.iterations}))
    return 0


def cmd_hash_test(args) -> int:
    if args.pairs < 1 or args.draws < 1 or any(not 1 <= k <= args.in_len for k in args.out_len):
        raise UsageError("need pairs, draws >= 1 and 1 <= out-len <= in-len")
    rng = np.random.default_rng(args.seed)
    rows = []
    for k in args.out_len:
        target = 2.0**-k
        sigma = math.sqrt(target * (1 - target) / args.draws)
        for i in range(args.pairs):
            a = rng.integers(0, 2, args.in_len, dtype=np.uint8)
            b = a.copy()
            while np.array_equal(a, b):
                b = rng.integers(0, 2, args.in_len, dtype=np.uint8)
            rate = collision_count(a, b, k, args.draws, rng) / args.draws
            rows.append({"out_len": k, "pair": i, "rate": rate, "target": target, "z": (rate - target) / sigma})
    if args.format == "csv":
        lines = ["out_len,pair,rate,target,z"] + [
            f"{r['out_len']},{r['pair']},{r['rate']!r},{r['target']!r},{r['z']!r}" for r in rows
        ]
        _emit(args, "\n".join(lines) + "\n")
    else:
        _emit(args, _dump(rows))
    return 0 if all(abs(r["z"]) <= 3 for r in rows) else 1


def cmd_key_distance(args) -> int:
    box = _load_box(args)
    if box.n_pairs != 1:
        raise UsageError("key-distance takes a single-pair box")
    if not 0 <= args.n_s <= 1:
        raise UsageError("--n-s must be 0 or 1 for one pair")
    _, witness, _ = max_guessing(box, 0)
    joint = key_table(witness.alice_eve((0,)), args.n_s)
    distance = key_distance_exact(joint, args.n_s)
    bound = pa_bound(1, args.n_s, 0, bx.bc_product_value(box))
    _emit(args, _dump({"distance": distance, "bound": bound, "n_s": args.n_s}))
    return 0 if distance <= bound + 1e-12 else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "rates": cmd_rates,
    "threshold": cmd_threshold,
    "verify-lemmas": cmd_verify,
    "eve-lp": cmd_eve_lp,
    "hash-test": cmd_hash_test,
    "key-distance": cmd_key_distance,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    print("config: " + json.dumps(config, sort_keys=True), file=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, bx.PreconditionError, bx.BoxShapeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
