"""Command-line interface: ``stashshuffle {shuffle,plan,verify,gen}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

from . import verify as suites
from .enclave import AssignmentMode, StashLayout
from .errors import ParameterError
from .memory import DEFAULT_PAYLOAD_SIZE, read_items, trace_fingerprint, write_items, write_trace
from .params import ShuffleParams, corollary_preset, table1_params, theorem_distance
from .planner import random_payloads
from .shuffle import run_stash_shuffle

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INTEGRITY = 20
EXIT_IO = 30

log = logging.getLogger("stashshuffle")


@dataclass
class RunManifest:
    params: dict[str, Any]
    seed: int | None
    input: str
    output: str
    mode: str
    stash_layout: str
    outcome: str
    failure_detail: str | None
    peak_private_items: dict[str, int]
    trace_fingerprint: str

    def dumps(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def _atomic_write(path: str | Path, write) -> None:
    """Write through a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _params_from_args(args: argparse.Namespace) -> ShuffleParams | None:
    if getattr(args, "config", None):
        return ShuffleParams.load(args.config)
    keys = ("N", "B", "C", "S", "W", "Q", "K", "alpha")
    given = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    if not given:
        return None
    return ShuffleParams.from_dict(given)


# -- shuffle ----------------------------------------------------------------------


def cmd_shuffle(args: argparse.Namespace) -> int:
    try:
        p = ShuffleParams.load(args.config)
        payloads, size = read_items(args.input)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    if len(payloads) != p.N:
        log.error("input holds %d records, config says N=%d", len(payloads), p.N)
        return EXIT_IO

    run = run_stash_shuffle(payloads, p, args.seed, args.mode, args.stash_layout)
    fail = run.failure
    manifest = RunManifest(
        params=p.to_dict(),
        seed=args.seed,
        input=str(args.input),
        output=str(args.output),
        mode=AssignmentMode(args.mode).value,
        stash_layout=StashLayout(args.stash_layout).value,
        outcome="success" if fail is None else fail.cause,
        failure_detail=None if fail is None else str(fail),
        peak_private_items=run.peaks,
        trace_fingerprint=trace_fingerprint(run.store),
    )
    manifest_path = args.manifest or f"{args.output}.manifest.json"
    try:
        if run.ok:
            _atomic_write(args.output, lambda tmp: write_items(tmp, run.output, size))
        _atomic_write(manifest_path, lambda tmp: Path(tmp).write_text(manifest.dumps()))
        if args.trace:
            def dump(tmp: str) -> None:
                with open(tmp, "w", encoding="ascii") as fh:
                    write_trace(run.store.trace, fh)
            _atomic_write(args.trace, dump)
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO

    if fail is not None:
        log.error("shuffle failed (%s): %s", fail.cause, fail)
        return fail.exit_code
    print(f"shuffled {p.N} records -> {args.output} (manifest {manifest_path})")
    return EXIT_OK


# -- plan -------------------------------------------------------------------------


def _fmt_log2(x: float) -> str:
    return f"{x:.1f}" if math.isfinite(x) else str(x)


def _report_lines(p: ShuffleParams, reference: float | None = None) -> list[str]:
    r = theorem_distance(p)
    lines = [
        f"N={p.N} B={p.B} D={p.D} C={p.C} S={p.S} K={p.K} W={p.W} Q={p.Q} L={p.L} alpha={p.alpha:.4f}",
        f"  f1_exact={r.f1_exact:.3e}  f2_exact={r.f2_exact:.3e}  "
        f"log2_epsilon_exact={_fmt_log2(r.log2_epsilon_exact)}"
        + (f"  (reference {reference})" if reference is not None else ""),
        f"  f1_closed={r.f1_closed:.3e}{' (vacuous)' if r.vacuous['f1_closed'] else ''}"
        f"  f2_closed={r.f2_closed:.3e}{' (vacuous)' if r.vacuous['f2_closed'] else ''}"
        f"  log2_epsilon_closed={_fmt_log2(r.log2_epsilon_closed)}",
        "  conditions: " + ", ".join(f"{k}={'yes' if v else 'NO'}" for k, v in r.conditions.items()),
    ]
    for note in p.adjustments:
        lines.append(f"  note: {note}")
    return lines


def cmd_plan(args: argparse.Namespace) -> int:
    rows: list[tuple[ShuffleParams, float | None]] = []
    try:
        if args.table1:
            rows.extend(table1_params())
        if args.corollary:
            n, eps = args.corollary
            rows.append((corollary_preset(int(float(n)), float(eps)), None))
        p = _params_from_args(args)
        if p is not None:
            rows.append((p, None))
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    if not rows:
        log.error("nothing to plan: pass --table1, --corollary, --config or parameter flags")
        return EXIT_IO
    if args.json:
        out = []
        for p, ref in rows:
            d = {"params": p.to_dict(), "report": theorem_distance(p).to_dict()}
            if ref is not None:
                d["reference_log2_epsilon"] = ref
            out.append(d)
        print(json.dumps(out, indent=2))
    else:
        for p, ref in rows:
            print("\n".join(_report_lines(p, ref)))
    return EXIT_OK


# -- verify -----------------------------------------------------------------------


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        p = ShuffleParams.load(args.config) if args.config else None
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    result = suites.run_suite(args.suite, args.trials, args.seed, p)
    print(result.report())
    return EXIT_OK if result.passed else EXIT_VIOLATION


# -- gen --------------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> int:
    payloads = random_payloads(args.n, args.payload_size, args.seed)
    try:
        _atomic_write(args.output, lambda tmp: write_items(tmp, payloads, args.payload_size))
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stashshuffle", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sh = sub.add_parser("shuffle", help="obliviously shuffle an item file")
    sh.add_argument("--config", required=True)
    sh.add_argument("--in", dest="input", required=True)
    sh.add_argument("--out", dest="output", required=True)
    sh.add_argument("--seed", type=int)
    sh.add_argument("--trace", help="write the access trace, one `seq,array,op,index` per line")
    sh.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    sh.add_argument("--mode", choices=[m.value for m in AssignmentMode],
                    default=AssignmentMode.MULTINOMIAL.value)
    sh.add_argument("--stash-layout", choices=[s.value for s in StashLayout],
                    default=StashLayout.POOLED.value)
    sh.set_defaults(func=cmd_shuffle)

    pl = sub.add_parser("plan", help="failure probability report")
    pl.add_argument("--config")
    for name in ("N", "B", "C", "S", "W", "Q", "K"):
        pl.add_argument(f"--{name}", type=int)
    pl.add_argument("--alpha", type=float)
    pl.add_argument("--table1", action="store_true", help="the four reference scenarios")
    pl.add_argument("--corollary", nargs=2, metavar=("N", "EPS"),
                    help="asymptotic preset for N items and exponent slack EPS")
    pl.add_argument("--json", action="store_true")
    pl.set_defaults(func=cmd_plan)

    ve = sub.add_parser("verify", help="run a verification suite")
    ve.add_argument("suite", choices=suites.SUITES)
    ve.add_argument("--trials", type=int)
    ve.add_argument("--seed", type=int, default=0)
    ve.add_argument("--config")
    ve.set_defaults(func=cmd_verify)

    ge = sub.add_parser("gen", help="write an item file of random payloads")
    ge.add_argument("--n", type=int, required=True)
    ge.add_argument("--payload-size", type=int, default=DEFAULT_PAYLOAD_SIZE)
    ge.add_argument("--seed", type=int, default=0)
    ge.add_argument("--out", dest="output", required=True)
    ge.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ParameterError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
