"""
Command-line front end.

    fairslot allocate -i inst.json --family ipa --ell 1
    fairslot decompose -i inst.json
    fairslot sample -i inst.json --seed 7
    fairslot pay -i inst.json --advertiser 0 --oracle
    fairslot audit -i a.json -b b.json --definitions weak,ordered,tv,hetero
    fairslot welfare -i inst.json --family pa
    fairslot sweep --spec sweep.json -o out.csv
    fairslot --validate-output out.json

Exit codes: 0 success, 2 input or validation error (a JSON diagnostic is
written to stderr), 3 a fairness bound was violated.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import pandas as pd

from .config import get_settings
from .core import AuctionInstance, MechanismConfig
from .errors import BadShape, FairSlotError
from .fairness_audit import DEFINITIONS, audit_pair
from .feasibility import bvn_decompose, extend_doubly_stochastic, realize
from .oracles import OracleConfig, numeric_payment
from .payments import payment_report
from .position import generalized_allocate
from .schemas import (
    AuditPayload,
    MatchingPayload,
    MatrixPayload,
    PaymentsPayload,
    SamplePayload,
    WelfarePayload,
    load_config,
    load_instance,
    load_sweep_spec,
    parse_payload,
)
from .sweeps import COLUMNS, sweep_csv, to_csv
from .welfare import welfare_result

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_VIOLATION = 3


class InvalidInput(FairSlotError):
    code = "InvalidInput"


def _read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InvalidInput(f"{path}: no such file")
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: {exc}")


def _instance(path: Optional[str]) -> AuctionInstance:
    if not path:
        raise InvalidInput("an instance file is required (-i/--instance)")
    return load_instance(_read_json(path))


def _config(args: argparse.Namespace) -> MechanismConfig:
    raw: Dict[str, Any] = _read_json(args.config) if args.config else {}
    if not isinstance(raw, dict):
        raise InvalidInput(f"{args.config}: expected a JSON object")
    if args.family is not None:
        raw["family"] = args.family
    if args.ell is not None:
        raw["ell"] = args.ell
    return load_config(raw)


def _emit(args: argparse.Namespace, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_json(args: argparse.Namespace, payload: Dict[str, Any]) -> None:
    _emit(args, json.dumps(payload, indent=2) + "\n")


# -------------------------
# Subcommands
# -------------------------

def cmd_allocate(args: argparse.Namespace) -> int:
    inst, config = _instance(args.instance), _config(args)
    alloc = generalized_allocate(inst, config)
    _emit_json(args, {"family": config.family.value, "ell": config.ell, **alloc.to_payload()})
    return EXIT_OK


def cmd_decompose(args: argparse.Namespace) -> int:
    inst, config = _instance(args.instance), _config(args)
    alloc = generalized_allocate(inst, config)
    dist = bvn_decompose(extend_doubly_stochastic(alloc), tol=args.support_tol, k=alloc.k)
    _emit_json(args, dist.to_payload())
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    inst, config = _instance(args.instance), _config(args)
    dist, assignment = realize(generalized_allocate(inst, config), args.seed, tol=args.support_tol)
    _emit_json(args, {"seed": args.seed, "assignment": assignment.tolist(), "matching": dist.to_payload()})
    return EXIT_OK


def cmd_pay(args: argparse.Namespace) -> int:
    inst, config = _instance(args.instance), _config(args)
    records = payment_report(inst, config, args.advertiser)
    payload: List[Dict[str, Any]] = []
    for record in records:
        row = record.to_dict()
        if args.oracle:
            reference = numeric_payment(inst, record.advertiser, config, args.grid)
            row["oracle_payment"] = reference
            row["oracle_delta"] = record.payment - reference
        payload.append(row)
    _emit_json(args, {"payments": payload})
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    inst_a, inst_b = _instance(args.instance), _instance(args.instance_b)
    config = _config(args)
    definitions = [d.strip() for d in args.definitions.split(",") if d.strip()]
    report = audit_pair(inst_a, inst_b, config, definitions, tol=args.tolerance, lam=args.lam)
    if args.format == "json":
        _emit_json(args, report.to_payload())
    else:
        _emit(args, to_csv(report.to_frame()))
    return EXIT_OK if report.satisfied else EXIT_VIOLATION


def cmd_welfare(args: argparse.Namespace) -> int:
    inst, config = _instance(args.instance), _config(args)
    result = welfare_result(inst, config)
    _emit_json(args, {"family": config.family.value, "ell": config.ell, **result.to_dict()})
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    path = args.spec or args.instance
    if not path:
        raise InvalidInput("a sweep spec file is required (--spec)")
    spec = load_sweep_spec(_read_json(path))
    if args.seed_given:
        spec = spec.model_copy(update={"seed": args.seed})
    _emit(args, sweep_csv(spec))
    return EXIT_OK


# -------------------------
# Output validation
# -------------------------

JSON_SCHEMAS = [
    ("matrix", MatrixPayload),
    ("payments", PaymentsPayload),
    ("records", AuditPayload),
    ("assignment", SamplePayload),
    ("weights", MatchingPayload),
    ("opt", WelfarePayload),
]
AUDIT_COLUMNS = ["definition", "witness", "measured", "bound", "satisfied"]


def validate_output(path: str) -> str:
    """Check that a file written by this tool parses back; returns its kind."""
    if path.endswith(".csv"):
        try:
            frame = pd.read_csv(path, comment="#")
        except (FileNotFoundError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise InvalidInput(f"{path}: {exc}")
        header = list(frame.columns)
        known = {"audit": AUDIT_COLUMNS, **COLUMNS}
        for kind, columns in known.items():
            if header == columns:
                return kind
        raise BadShape(f"{path}: unrecognised CSV header {header}")

    data = _read_json(path)
    if not isinstance(data, dict):
        raise BadShape(f"{path}: expected a JSON object")
    for key, model in JSON_SCHEMAS:
        if key in data:
            parse_payload(model, data, BadShape)
            return key
    raise BadShape(f"{path}: unrecognised payload keys {sorted(data)}")


# -------------------------
# Parser
# -------------------------

COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "allocate": cmd_allocate,
    "decompose": cmd_decompose,
    "sample": cmd_sample,
    "pay": cmd_pay,
    "audit": cmd_audit,
    "welfare": cmd_welfare,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="fairslot", description="Fair sponsored-search position auctions")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    parser.add_argument("--validate-output", metavar="FILE", help="check a JSON/CSV file produced by fairslot")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-i", "--instance", help="instance JSON file")
    common.add_argument("-c", "--config", help="config JSON file: {\"family\": ..., \"ell\": ...}")
    common.add_argument("--family", choices=["ipa", "pa"], help="mechanism family (default ipa)")
    common.add_argument("--ell", type=float, help="smoothing exponent (default 1)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--tolerance", type=float, default=settings.tolerance, help="audit slack")
    common.add_argument("--support-tol", type=float, default=settings.support_tol, help="BvN support threshold")
    common.add_argument("-o", "--output", help="write to this file instead of stdout")

    sub = parser.add_subparsers(dest="command")
    sub.add_parser("allocate", parents=[common], help="allocation matrix and cumulative vectors")
    sub.add_parser("decompose", parents=[common], help="distribution over slot assignments")
    sub.add_parser("sample", parents=[common], help="draw one slot assignment")

    pay = sub.add_parser("pay", parents=[common], help="Myerson payments")
    pay.add_argument("--advertiser", type=int, help="only this advertiser")
    pay.add_argument("--oracle", action="store_true", help="also integrate mechanism runs numerically")
    pay.add_argument("--grid", type=int, default=OracleConfig().payment_grid, help="oracle grid size")

    audit = sub.add_parser("audit", parents=[common], help="fairness audit of two instances")
    audit.add_argument("-b", "--instance-b", required=True, help="second instance JSON file")
    audit.add_argument("--definitions", default="weak,ordered,tv,hetero", help=f"comma list from {','.join(DEFINITIONS)}")
    audit.add_argument("--format", choices=["csv", "json"], default="csv")
    audit.add_argument("--lambda", dest="lam", type=float, help="check against this lambda instead of the measured one")

    sub.add_parser("welfare", parents=[common], help="welfare ratio and bound")

    sweep = sub.add_parser("sweep", parents=[common], help="welfare / stability campaigns as CSV")
    sweep.add_argument("--spec", help="sweep spec JSON file")
    return parser


def _configure_logging(verbose: int) -> None:
    level = get_settings().log_level
    if verbose == 1:
        level = "INFO"
    elif verbose >= 2:
        level = "DEBUG"
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)

    try:
        if args.validate_output:
            kind = validate_output(args.validate_output)
            logger.info("%s is a valid %s output", args.validate_output, kind)
            return EXIT_OK
        if not args.command:
            parser.print_usage(sys.stderr)
            raise InvalidInput("a subcommand is required")
        args.seed_given = args.seed is not None
        if args.seed is None:
            args.seed = 0
        return COMMANDS[args.command](args)
    except FairSlotError as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return EXIT_INPUT


def run() -> None:
    sys.exit(main())
