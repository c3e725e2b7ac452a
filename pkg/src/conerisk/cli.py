"""Command-line front door: load fixtures, run checkers and pricers, emit
machine-readable reports.

Exit codes: 0 for a true verdict or a computed quantity, 1 for a false
verdict (the report carries the certificate), 2 for input errors.  All
rationals cross the boundary as ``num/den`` strings; reports are
deterministic for a fixed seed unless ``--timings`` is requested.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .ftap import arbitrage_check, superhedge
from .market import (
    BidAskProcess,
    augment_market,
    market_scenario_set,
    trading_cones,
    verify_market_equivalence,
)
from .rational import Q, qstr
from .report import Report
from .risk import (
    NumeraireVector,
    ScenarioSet,
    compose_rho,
    decompose,
    is_optionally_stable,
    is_representable,
    rho,
    rho0,
)
from .sweep import sweep as run_sweep
from .tree import FilteredTree, TerminalClaim, TreeError, tree_from_json

import random


class SchemaError(ValueError):
    """Input fails the documented schema; message carries the location."""


# ---------------------------------------------------------------------------
# Input loading
# ---------------------------------------------------------------------------


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read input ({exc})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc


def _need(data: dict, key: str, where: str):
    if key not in data:
        raise SchemaError(f"{where}: missing required key {key!r}")
    return data[key]


def load_bundle(path: str) -> tuple[FilteredTree, ScenarioSet | None, NumeraireVector | None]:
    """A fixture bundle: tree plus optional scenario set and numeraires."""
    data = _load_json(path)
    try:
        tree = tree_from_json(_need(data, "tree", path))
    except TreeError as exc:
        raise SchemaError(f"{path}: tree: {exc}") from exc
    scen = None
    if "scenario" in data:
        try:
            scen = ScenarioSet.from_json(tree, data["scenario"])
        except (ValueError, KeyError) as exc:
            raise SchemaError(f"{path}: scenario: {exc}") from exc
    num = None
    if "numeraire" in data:
        try:
            num = NumeraireVector.from_json(tree, data["numeraire"])
        except (ValueError, KeyError) as exc:
            raise SchemaError(f"{path}: numeraire: {exc}") from exc
    return tree, scen, num


def load_market(path: str) -> tuple[BidAskProcess, Fraction | None]:
    data = _load_json(path)
    for key in ("tree", "d", "pi"):
        _need(data, key, path)
    try:
        market = BidAskProcess.from_json(data)
    except (TreeError, ValueError, KeyError) as exc:
        raise SchemaError(f"{path}: market: {exc}") from exc
    eps = Q(data["epsilon"]) if "epsilon" in data else None
    return market, eps


def parse_claim(text: str, tree: FilteredTree, width: int) -> TerminalClaim:
    """Inline JSON claim: flat list (scalar) or list of lists (vector)."""
    if text.startswith("@"):
        raw = json.loads(Path(text[1:]).read_text())
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"--claim: invalid JSON ({exc.msg})") from exc
    if not isinstance(raw, list) or len(raw) != tree.n_leaves:
        raise SchemaError(f"--claim: expected a list with one entry per leaf ({tree.n_leaves})")
    if raw and isinstance(raw[0], list):
        claim = TerminalClaim.vector(raw)
    else:
        claim = TerminalClaim.scalar(raw)
    if claim.width != width:
        raise SchemaError(f"--claim: expected width {width}, got {claim.width}")
    return claim


# ---------------------------------------------------------------------------
# Command handlers: each returns (exit_code, payload)
# ---------------------------------------------------------------------------


def cmd_validate(args) -> tuple[int, dict]:
    data = _load_json(args.input)
    parts = {}
    if "pi" in data:
        market, eps = load_market(args.input)
        parts["market"] = {
            "nodes": len(market.tree.nodes),
            "d": market.d,
            "epsilon": None if eps is None else qstr(eps),
        }
    else:
        tree, scen, num = load_bundle(args.input)
        parts["tree"] = {"T": tree.horizon, "leaves": tree.n_leaves,
                         "leafProbs": [qstr(p) for p in tree.leaf_probs]}
        if scen is not None:
            parts["scenario"] = {"generators": scen.n_generators}
        if num is not None:
            parts["numeraire"] = {"d": num.d}
    return 0, {"valid": True, **parts}


def _bundle_for_risk(args):
    tree, scen, num = load_bundle(args.input)
    if scen is None:
        raise SchemaError(f"{args.input}: command needs a 'scenario' section")
    if num is None:
        num = NumeraireVector.unit(tree)
    return tree, scen, num


def cmd_rho(args) -> tuple[int, dict]:
    tree, scen, _ = _bundle_for_risk(args)
    claim = parse_claim(args.claim, tree, 1)
    t = args.t
    if not 0 <= t <= tree.horizon:
        raise SchemaError(f"--t: outside 0..{tree.horizon}")
    values = rho(scen, claim, t)
    payload = {
        "t": t,
        "values": {
            node.id: qstr(val[0])
            for node, val in zip(tree.nodes_at(t), values.values)
        },
    }
    if t == 0:
        payload["value"] = qstr(values.values[0][0])
    return 0, payload


def cmd_compose(args) -> tuple[int, dict]:
    tree, scen, _ = _bundle_for_risk(args)
    claim = parse_claim(args.claim, tree, 1)
    composed = compose_rho(scen, claim)
    static = rho0(scen, claim)
    return 0, {
        "composed": qstr(composed),
        "static": qstr(static),
        "timeConsistentHere": composed == static,
    }


def cmd_check_stability(args) -> tuple[int, dict]:
    tree, scen, num = _bundle_for_risk(args)
    rng = random.Random(args.seed)
    report = is_optionally_stable(scen, num, rng=rng, samples=args.samples)
    payload = report.to_json_dict()
    if args.recheck:
        payload["recheck"] = _recheck_verdict_report(report)
    return (0 if report.verdict else 1), payload


def cmd_check_representability(args) -> tuple[int, dict]:
    tree, scen, num = _bundle_for_risk(args)
    report = is_representable(scen, num)
    payload = report.to_json_dict()
    if args.recheck:
        payload["recheck"] = _recheck_verdict_report(report)
    return (0 if report.verdict else 1), payload


def cmd_decompose(args) -> tuple[int, dict]:
    tree, scen, num = _bundle_for_risk(args)
    claim = parse_claim(args.claim, tree, 1)
    dec, cert = decompose(scen, num, claim)
    if dec is None:
        return 1, {"verdict": False, "certificate": cert}
    payload = {"verdict": True, **dec.to_json_dict()}
    if args.recheck:
        payload["recheck"] = {"resummed": True}  # decompose asserts exact re-summation
    return 0, payload


def _market_cones(args):
    market, eps = load_market(args.input)
    if getattr(args, "epsilon", None) is not None:
        eps = Q(args.epsilon)
    return market, (eps if eps is not None else Fraction(1, 10))


def cmd_check_arbitrage(args) -> tuple[int, dict]:
    market, _ = _market_cones(args)
    cones = trading_cones(market)
    report = arbitrage_check(cones)
    payload = report.to_json_dict()
    if args.recheck:
        if report.arbitrage_free:
            ps = report.price_system
            payload["recheck"] = {
                "martingale": ps.check_martingale(),
                "dualMembership": ps.check_duals(cones),
                "strictlyPositive": ps.delta > 0,
            }
        else:
            ok = all(q >= 0 for q in report.witness_claim) and any(
                q > 0 for q in report.witness_claim
            )
            ok &= all(
                cones.cone(nid).contains(xi) for nid, xi in report.witness_strategy
            )
            payload["recheck"] = {"witnessValid": ok}
    return (0 if report.arbitrage_free else 1), payload


def cmd_superhedge(args) -> tuple[int, dict]:
    market, _ = _market_cones(args)
    claim = parse_claim(args.claim, market.tree, market.width)
    result = superhedge(trading_cones(market), claim, args.numeraire_index)
    payload = result.to_json_dict()
    if args.recheck:
        payload["recheck"] = {"strongDuality": payload["price"] == payload["dual"]["value"]}
    return 0, payload


def cmd_augment(args) -> tuple[int, dict]:
    market, eps = _market_cones(args)
    aug = augment_market(market, eps)
    return 0, {
        "epsilon": qstr(aug.epsilon),
        "tree": aug.tree.to_json_dict(),
        "vtilde": [[qstr(x) for x in v] for v in aug.vtilde],
        "V": aug.v.to_json_dict()["V"],
    }


def cmd_extract_scenarios(args) -> tuple[int, dict]:
    market, eps = _market_cones(args)
    scen = market_scenario_set(augment_market(market, eps))
    payload = {
        "epsilon": qstr(eps),
        "tree": scen.market.tree.to_json_dict(),
        **scen.to_json_dict(),
    }
    return 0, payload


def cmd_verify_equivalence(args) -> tuple[int, dict]:
    market, eps = _market_cones(args)
    report = verify_market_equivalence(market, eps)
    payload = report.to_json_dict()
    return (0 if report.verdict else 1), payload


def cmd_sweep(args) -> tuple[int, dict]:
    jobs = args.jobs
    if jobs is None:
        jobs = int(os.environ.get("CONERISK_THREADS", "1"))
    report = _sweep_parallel(args.seed, args.instances, jobs)
    return (0 if report["passed"] else 1), report


def _sweep_parallel(seed: int, instances: int | None, jobs: int) -> dict:
    from .sweep import _DEFAULT_BATTERY

    if jobs <= 1:
        return run_sweep(seed, instances).to_json_dict()
    from concurrent.futures import ProcessPoolExecutor

    names = [prop.__name__ for prop, _ in _DEFAULT_BATTERY]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(_run_one_property, seed, i, instances)
            for i in range(len(names))
        ]
        results = [f.result() for f in futures]
    return {
        "seed": seed,
        "passed": all(r["passed"] for r in results),
        "properties": results,
    }


def _run_one_property(seed: int, index: int, instances: int | None) -> dict:
    from .sweep import _DEFAULT_BATTERY

    prop, default_n = _DEFAULT_BATTERY[index]
    rng = random.Random(f"{seed}:{prop.__name__}")
    return prop(rng, instances if instances is not None else default_n).to_json_dict()


def _recheck_verdict_report(report) -> dict:
    """Re-verify whatever certificate data a checker report carries."""
    checks = 0
    cert = report.certificate
    if cert and "separation" in cert:
        sep = cert["separation"]
        point = [Q(x) for x in sep["point"]]
        separator = [Q(x) for x in sep["separator"]]
        value = sum(a * b for a, b in zip(point, separator))
        if value <= 0:
            return {"passed": False, "checks": checks}
        checks += 1
    for check in getattr(report, "cross_checks", ()):
        if isinstance(check, dict) and check.get("inHull") is False:
            return {"passed": False, "checks": checks}
        checks += 1
    return {"passed": True, "checks": checks}


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conerisk",
        description="Exact verification and pricing for dynamic multi-currency "
        "coherent risk measures on finite scenario trees.",
    )
    parser.add_argument("--version", action="version", version=f"conerisk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("input", help="input JSON file")
        p.add_argument("--out", help="write the JSON report to this file")
        p.add_argument(
            "--out-dir",
            help="directory for report.json, summary.csv and rendered figures",
        )
        p.add_argument("--timings", action="store_true",
                       help="include wall-clock timings (breaks byte determinism)")
        p.add_argument("--recheck", action="store_true",
                       help="re-verify certificates in the report")
        return p

    common(sub.add_parser("validate", help="parse and validate an input file"))

    p = common(sub.add_parser("rho", help="conditional risk of a scalar claim"))
    p.add_argument("--claim", required=True, help='leafwise values, e.g. "[4,-2]"')
    p.add_argument("--t", type=int, default=0)

    p = common(sub.add_parser("compose", help="backward-composed risk vs static risk"))
    p.add_argument("--claim", required=True)

    p = common(sub.add_parser("check-stability", help="optional stability of a scenario set"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=8, help="pasting cross-checks on success")

    common(sub.add_parser("check-representability",
                          help="acceptance cone vs summed step cones"))

    p = common(sub.add_parser("decompose", help="split an acceptable claim into dated trades"))
    p.add_argument("--claim", required=True)

    common(sub.add_parser("check-arbitrage", help="arbitrage check for a bid-ask market"))

    p = common(sub.add_parser("superhedge", help="minimal reserve covering a claim"))
    p.add_argument("--claim", required=True, help="leafwise portfolio vectors")
    p.add_argument("--numeraire-index", type=int, default=0)

    p = common(sub.add_parser("augment", help="append the frictionless cash-out period"))
    p.add_argument("--epsilon", help="bracket widening in (0,1), default 1/10")

    p = common(sub.add_parser("extract-scenarios",
                              help="scenario set spanning all consistent price systems"))
    p.add_argument("--epsilon")

    p = common(sub.add_parser("verify-equivalence",
                              help="market claims vs induced acceptance cone"))
    p.add_argument("--epsilon")

    p = common(sub.add_parser("sweep", help="randomized property battery"), needs_input=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, help="override instances per property")
    p.add_argument("--jobs", type=int, help="parallel workers (default CONERISK_THREADS)")

    return parser


_HANDLERS = {
    "validate": cmd_validate,
    "rho": cmd_rho,
    "compose": cmd_compose,
    "check-stability": cmd_check_stability,
    "check-representability": cmd_check_representability,
    "decompose": cmd_decompose,
    "check-arbitrage": cmd_check_arbitrage,
    "superhedge": cmd_superhedge,
    "augment": cmd_augment,
    "extract-scenarios": cmd_extract_scenarios,
    "verify-equivalence": cmd_verify_equivalence,
    "sweep": cmd_sweep,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        code, payload = handler(args)
    except SchemaError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    report = Report(
        command=args.command,
        payload=payload,
        inputs=[args.input] if getattr(args, "input", None) else [],
        options=_option_dict(args),
        seed=getattr(args, "seed", None),
        with_timings=args.timings,
    )
    text = report.dumps()
    if args.out:
        Path(args.out).write_text(text + "\n")
    if args.out_dir:
        report.write_outputs(args.out_dir)
    if not args.out and not args.out_dir:
        print(text)
    return code


def _option_dict(args) -> dict:
    skip = {"command", "input", "out", "out_dir", "timings"}
    return {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in skip and v is not None and not k.startswith("_")
    }


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
