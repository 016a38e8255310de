"""Command-line front end.

Subcommands: ``add`` (stage-by-stage trace of one two-operand fold),
``validate`` (capability and resource check of a stage program),
``aggregate`` (multi-worker vector reduction), ``query`` (Top-N and group-by
operators over a CSV column), ``analyze`` (error and ratio histograms).

Exit codes: 0 success, 1 usage or parse failure, 2 validation violations,
3 numeric events promoted to failures by ``--strict``.

Decimal literals are parsed with the standard text-to-binary conversion
(round to nearest even at the target format), so every trace and report is
reproducible from its command line; synthetic inputs are fully determined
by ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Sequence

from .aggregation import (
    Session,
    SessionConfig,
    load_worker_file,
)
from .analysis import (
    error_distribution,
    error_histogram_csv,
    error_histogram_json,
    ratio_distribution,
    ratio_histogram_csv,
    ratio_histogram_json,
    synthetic_vectors,
)
from .core import CoreConfig, EventKind, Variant
from .formats import (
    FORMATS_BY_NAME,
    FpFormat,
    NonFiniteInput,
    RoundingMode,
    encode_decimal,
    to_float,
)
from .pipeline import (
    BASELINE,
    EXTENDED,
    EXP_ARRAY,
    MANT_ARRAY,
    Machine,
    ProfileMismatch,
    ResourceLimits,
    add_packet,
    builtin_program,
    check_resources,
    event_from_metadata,
    program_from_json,
    read_packet,
    result_word,
    validate,
)
from .query import (
    Direction,
    Extreme,
    Row,
    groupby_having_extreme,
    groupby_sum,
    load_rows_csv,
    topn,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_STRICT = 3

_PROFILES = {"baseline": BASELINE, "extended": EXTENDED}
_ROUNDINGS = {
    "floor": RoundingMode.TOWARD_NEG_INF,
    "nearest-even": RoundingMode.NEAREST_EVEN,
}

# wide metadata fields whose bit patterns read better in hex
_HEX_FIELDS = frozenset(
    "value mant_mag mant_in mant_old mant_cur align_mask align_disc "
    "state_mask state_disc q qm frac_out e_shift word rnd_mask rem half".split()
)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this surface reserves 2 for validation."""

    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    """Resolved run parameters: config-file values overridden by flags."""

    fmt: FpFormat
    variant: Variant
    register_width: int
    guard_bits: int
    profile_name: str
    rounding: RoundingMode
    slots: int
    chunk: int
    seed: int
    out: str | None
    out_format: str
    strict: bool

    @property
    def profile(self):
        return _PROFILES[self.profile_name]

    def core(self) -> CoreConfig:
        return CoreConfig(
            fmt=self.fmt,
            register_width=self.register_width,
            guard_bits=self.guard_bits,
            variant=self.variant,
        )


_DEFAULTS = {
    "format": "fp32",
    "variant": "exact",
    "register_width": 32,
    "guard_bits": 0,
    "profile": "extended",
    "rounding": "floor",
    "slots": 1,
    "chunk": 256,
    "seed": 0,
    "out": None,
    "out_format": "json",
    "strict": False,
    "n": 2,
    "len": 8,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="JSON",
                   help="config file; flags given on the command line win")
    p.add_argument("--format", choices=sorted(FORMATS_BY_NAME))
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--register-width", type=int, dest="register_width")
    p.add_argument("--guard-bits", type=int, dest="guard_bits")
    p.add_argument("--profile", choices=sorted(_PROFILES))
    p.add_argument("--rounding", choices=sorted(_ROUNDINGS))
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--out-format", choices=["json", "csv"], dest="out_format")
    p.add_argument("--strict", action="store_true", default=None,
                   help="fail (exit 3) on overwrite/overflow events")


def _resolve(args: argparse.Namespace) -> RunConfig:
    merged = dict(_DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        unknown = set(loaded) - set(_DEFAULTS)
        if unknown:
            raise ValueError(f"{args.config}: unknown keys {sorted(unknown)}")
        merged.update(loaded)
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    args.n = merged["n"]
    args.len = merged["len"]
    return RunConfig(
        fmt=FORMATS_BY_NAME[merged["format"]],
        variant=Variant(merged["variant"]),
        register_width=merged["register_width"],
        guard_bits=merged["guard_bits"],
        profile_name=merged["profile"],
        rounding=_ROUNDINGS[merged["rounding"]],
        slots=merged["slots"],
        chunk=merged["chunk"],
        seed=merged["seed"],
        out=merged["out"],
        out_format=merged["out_format"],
        strict=bool(merged["strict"]),
    )


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _hex(word: int, fmt: FpFormat) -> str:
    return f"0x{word:0{fmt.total_bits // 4}X}"


def _load_vectors(args: argparse.Namespace, rc: RunConfig) -> list[list[int]]:
    if args.synthetic:
        return synthetic_vectors(args.synthetic, args.n, args.len,
                                 seed=rc.seed, fmt=rc.fmt)
    return [load_worker_file(path, rc.fmt) for path in args.workers]


# ---------------------------------------------------------------------------
# add
# ---------------------------------------------------------------------------

def _print_trace(trace, fmt: FpFormat) -> None:
    prev: dict[str, int] = {}
    for snap in trace:
        changed = {k: v for k, v in snap.metadata.items()
                   if prev.get(k, 0) != v}
        prev = snap.metadata
        parts = " ".join(
            f"{k}={_hex(v, fmt) if k in _HEX_FIELDS else v}"
            for k, v in changed.items()
        )
        print(f"  [{snap.stage_id} {snap.stage_name}] {parts}")


def _event_text(event) -> str:
    if event.kind is EventKind.ROUNDING_LOSS:
        return f"rounding_loss ({event.bits_lost} bits)"
    if event.kind is EventKind.OVERWRITE:
        return f"overwrite (discarded {float(event.discarded)!r})"
    return event.kind.value


def cmd_add(args: argparse.Namespace) -> int:
    rc = _resolve(args)
    core = rc.core()
    words = [encode_decimal(text, rc.fmt) for text in (args.a, args.b)]
    program = builtin_program(rc.variant, core, profile=rc.profile,
                              rounding=rc.rounding)
    machine = Machine(program, rc.profile)
    events = []
    for label, word in zip("ab", words):
        trace = []
        pkt = machine.process(add_packet(word), trace)
        print(f"add {label} = {to_float(word, rc.fmt)!r} ({_hex(word, rc.fmt)})")
        _print_trace(trace, rc.fmt)
        print(f"  registers: exp={machine.read_register(EXP_ARRAY, 0)} "
              f"mant={machine.read_register(MANT_ARRAY, 0)}")
        event = event_from_metadata(pkt.metadata, core)
        if event is not None:
            events.append(event)
    print("events: " + (", ".join(_event_text(e) for e in events) or "none"))
    trace = []
    pkt = machine.process(read_packet(), trace)
    print("read slot 0")
    _print_trace(trace, rc.fmt)
    word = result_word(pkt)
    print(f"result = {to_float(word, rc.fmt)!r} ({_hex(word, rc.fmt)})")
    if rc.strict and events:
        return EXIT_STRICT
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    rc = _resolve(args)
    if args.program:
        with open(args.program) as fh:
            program = program_from_json(fh.read())
    else:
        variant = Variant(args.builtin)
        try:
            program = builtin_program(variant, rc.core(), profile=rc.profile,
                                      rounding=rc.rounding)
        except ProfileMismatch:
            # build unrestricted so the validator can name every violation
            program = builtin_program(variant, rc.core(), profile=EXTENDED,
                                      rounding=rc.rounding)
    violations = validate(program, rc.profile)
    pressure = check_resources(program, ResourceLimits())
    for v in violations:
        print(f"violation: {v}")
    for v in pressure:
        print(f"warning: {v}")
    if violations:
        return EXIT_INVALID
    print(f"ok: program '{program.name}' validates under {rc.profile_name}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# aggregate
# ---------------------------------------------------------------------------

_EVENT_ORDER = (EventKind.ROUNDING_LOSS, EventKind.OVERWRITE,
                EventKind.HEADROOM_OVERFLOW)


def cmd_aggregate(args: argparse.Namespace) -> int:
    rc = _resolve(args)
    vectors = _load_vectors(args, rc)
    n = len(vectors[0]) if vectors else 0
    session = Session(SessionConfig(
        core=rc.core(),
        n_workers=len(vectors),
        n_slots=rc.slots,
        vector_len=max(1, min(rc.chunk, n)),
        profile=rc.profile,
        rounding=rc.rounding,
    ))
    from .aggregation import scatter_gather

    words = scatter_gather(vectors, session)
    events = {k.value: session.event_counts.get(k, 0) for k in _EVENT_ORDER}
    protocol = {
        "contributions": session.contributions,
        "results": session.results_emitted,
        "acks": session.acks_emitted,
        "errors": session.errors_emitted,
    }
    if rc.out_format == "json":
        _emit(json.dumps({
            "n_workers": len(vectors),
            "n_elements": n,
            "result": [
                {"element": i, "word": _hex(w, rc.fmt),
                 "value": to_float(w, rc.fmt)}
                for i, w in enumerate(words)
            ],
            "events": events,
            "protocol": protocol,
        }, indent=2) + "\n", rc.out)
    else:
        lines = ["element,word,value"]
        lines += [f"{i},{_hex(w, rc.fmt)},{to_float(w, rc.fmt)!r}"
                  for i, w in enumerate(words)]
        _emit("\n".join(lines) + "\n", rc.out)
        print("events: " + " ".join(f"{k}={v}" for k, v in events.items()),
              file=sys.stderr)
    if rc.strict and (events["overwrite"] or events["headroom_overflow"]):
        return EXIT_STRICT
    return EXIT_OK


# ---------------------------------------------------------------------------
# query
# ---------------------------------------------------------------------------

def _row_obj(row: Row, fmt: FpFormat) -> dict:
    return {"key": row.key, "word": _hex(row.value, fmt),
            "value": to_float(row.value, fmt)}


def cmd_query(args: argparse.Namespace) -> int:
    rc = _resolve(args)
    rows, rejected = load_rows_csv(args.input, rc.fmt)
    if args.op == "topn":
        rep = topn(rows, args.n, Direction(args.direction), rc.fmt)
        result = [_row_obj(r, rc.fmt) for r in rep.final_result]
        if rc.out_format == "json":
            _emit(json.dumps({
                "op": "topn",
                "rows_in": rep.rows_in,
                "rows_forwarded": rep.rows_forwarded,
                "rows_dropped": rep.rows_dropped,
                "rows_rejected": rejected,
                "result": [{"rank": i + 1, **obj}
                           for i, obj in enumerate(result)],
            }, indent=2) + "\n", rc.out)
        else:
            lines = ["rank,key,word,value"]
            lines += [f"{i + 1},{o['key']},{o['word']},{o['value']!r}"
                      for i, o in enumerate(result)]
            _emit("\n".join(lines) + "\n", rc.out)
        return EXIT_OK
    if args.op == "gb-extreme":
        rep = groupby_having_extreme(rows, Extreme(args.extreme), rc.fmt)
        items = sorted(rep.final_result.items())
        if rc.out_format == "json":
            _emit(json.dumps({
                "op": "gb-extreme",
                "rows_in": rep.rows_in,
                "rows_forwarded": rep.rows_forwarded,
                "rows_dropped": rep.rows_dropped,
                "rows_rejected": rejected,
                "result": [{"key": k, "word": _hex(w, rc.fmt),
                            "value": to_float(w, rc.fmt)}
                           for k, w in items],
            }, indent=2) + "\n", rc.out)
        else:
            lines = ["key,word,value"]
            lines += [f"{k},{_hex(w, rc.fmt)},{to_float(w, rc.fmt)!r}"
                      for k, w in items]
            _emit("\n".join(lines) + "\n", rc.out)
        return EXIT_OK
    # gb-sum: the accuracy contract promotes overflow to failure (strict)
    rep = groupby_sum(rows, rc.core(), rc.rounding)
    items = sorted(rep.sums.items())
    failed = sorted(rep.failed)
    if rc.out_format == "json":
        _emit(json.dumps({
            "op": "gb-sum",
            "rows_in": rep.rows_in,
            "rows_rejected": rejected,
            "rounding_events": len(rep.events),
            "sums": [{"key": k, "word": _hex(w, rc.fmt),
                      "value": to_float(w, rc.fmt)} for k, w in items],
            "failed": [{"key": k, "reason": rep.failed[k].kind.value}
                       for k in failed],
        }, indent=2) + "\n", rc.out)
    else:
        lines = ["key,word,value"]
        lines += [f"{k},{_hex(w, rc.fmt)},{to_float(w, rc.fmt)!r}"
                  for k, w in items]
        _emit("\n".join(lines) + "\n", rc.out)
        for k in failed:
            print(f"failed: group {k} {rep.failed[k].kind.value}",
                  file=sys.stderr)
    if failed:
        return EXIT_STRICT
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def cmd_analyze(args: argparse.Namespace) -> int:
    rc = _resolve(args)
    vectors = _load_vectors(args, rc)
    if args.ratio:
        hist = ratio_distribution(vectors, rc.fmt)
        text = (ratio_histogram_json(hist) + "\n"
                if rc.out_format == "json" else ratio_histogram_csv(hist))
    else:
        hist = error_distribution(vectors, rc.core(), rc.rounding)
        text = (error_histogram_json(hist) + "\n"
                if rc.out_format == "json" else error_histogram_csv(hist))
    _emit(text, rc.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="switchfp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("add", parents=[], help="trace one two-operand fold")
    p.add_argument("a", help="decimal FP literal")
    p.add_argument("b", help="decimal FP literal")
    _add_common(p)
    p.set_defaults(cmd_func=cmd_add)

    p = sub.add_parser("validate", help="check a stage program against a profile")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--builtin", choices=[v.value for v in Variant])
    src.add_argument("--program", metavar="JSON",
                     help="stage program exported as JSON")
    _add_common(p)
    p.set_defaults(cmd_func=cmd_validate)

    p = sub.add_parser("aggregate", help="reduce worker vectors through a session")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--workers", nargs="+", metavar="FILE",
                     help="one value file per worker (.csv, .bin, .raw)")
    src.add_argument("--synthetic", metavar="DIST",
                     help="'uniform(a,b)' or 'lognormal(mu,sigma)'")
    p.add_argument("--n", type=int, help="synthetic worker count")
    p.add_argument("--len", type=int, help="synthetic vector length")
    p.add_argument("--slots", type=int, help="accumulator slots per array")
    p.add_argument("--chunk", type=int, help="elements per slot round")
    p.add_argument("--seed", type=int, help="synthetic generator seed")
    _add_common(p)
    p.set_defaults(cmd_func=cmd_aggregate)

    p = sub.add_parser("query", help="run a query operator over key,value CSV")
    p.add_argument("input", help="CSV file with a key,value header")
    p.add_argument("--op", required=True,
                   choices=["topn", "gb-extreme", "gb-sum"])
    p.add_argument("--n", type=int, help="Top-N size")
    p.add_argument("--direction", choices=[d.value for d in Direction],
                   default="largest")
    p.add_argument("--extreme", choices=[e.value for e in Extreme],
                   default="max")
    _add_common(p)
    p.set_defaults(cmd_func=cmd_query)

    p = sub.add_parser("analyze", help="error or ratio histogram over vectors")
    kind = p.add_mutually_exclusive_group(required=True)
    kind.add_argument("--ratio", action="store_true",
                      help="element-wise max/min magnitude ratios")
    kind.add_argument("--error", action="store_true",
                      help="absolute error against the exact rational sum")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--workers", nargs="+", metavar="FILE")
    src.add_argument("--synthetic", metavar="DIST")
    p.add_argument("--n", type=int, help="synthetic worker count")
    p.add_argument("--len", type=int, help="synthetic vector length")
    p.add_argument("--seed", type=int, help="synthetic generator seed")
    _add_common(p)
    p.set_defaults(cmd_func=cmd_analyze)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.cmd_func(args)
    except (ValueError, OSError) as exc:  # NonFiniteInput is a ValueError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
