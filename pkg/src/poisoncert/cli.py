"""Command-line interface.

Exit codes: 0 success, 1 invalid configuration or input, 2 runtime failure
(including a failed oracle check).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from fractions import Fraction

from .certify import ABSTAIN, accuracy_curve, certified_radius, certify_all
from .config import ENV_CONFIG, ConfigError, RunConfig
from .ensemble import make_blobs, split
from .formats import (
    atomic_write,
    certificates_to_csv,
    curve_to_csv,
    read_votes,
    write_csv_dataset,
    write_votes,
)
from .schemes import scheme_from_dict

log = logging.getLogger("poisoncert")

COMMANDS = ("generate", "train", "certify", "curve", "radius", "oracle-check", "compare-case3")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poisoncert",
                                     description="Certified robustness of random-selection ensembles "
                                                 "against data poisoning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help=f"key = value config file (default: ${ENV_CONFIG})")
        for key in RunConfig.keys():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, metavar="V")
        if name == "radius":
            p.add_argument("--margin", type=float, required=True, help="p1_lower - p2_upper")
        if name == "oracle-check":
            p.add_argument("--max-n", type=int, default=7)
            p.add_argument("--max-rho", type=int, default=2)
            p.add_argument("--perturb-pi", action="store_true",
                           help="scale the implemented pi by 1.01 (debug; the check must fail)")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    path = args.config or os.environ.get(ENV_CONFIG)
    cfg = RunConfig.from_file(path) if path else RunConfig()
    return cfg.update({k: getattr(args, k) for k in RunConfig.keys()})


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.output:
        atomic_write(cfg.output, text)
    else:
        sys.stdout.write(text)


def cmd_generate(cfg: RunConfig) -> int:
    data = make_blobs(cfg.n, cfg.d, cfg.k, cfg.separation, cfg.seed, cfg.sigma)
    if cfg.test_output:
        train, test = split(data, cfg.test_fraction or 0.2, cfg.seed)
        write_csv_dataset(cfg.output, train)
        write_csv_dataset(cfg.test_output, test)
    else:
        write_csv_dataset(cfg.output, data)
    return 0


def cmd_train(cfg: RunConfig) -> int:
    from .pipeline import run_train

    start = time.perf_counter()
    votes = run_train(cfg)
    write_votes(cfg.votes, votes)
    log.info("wrote %s (%d records) in %.1fs", cfg.votes, len(votes.records),
             time.perf_counter() - start)
    return 0


def _votes_context(cfg: RunConfig):
    if not cfg.votes:
        raise ConfigError("votes path missing")
    try:
        votes = read_votes(cfg.votes)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from None
    return votes, scheme_from_dict(votes.scheme), cfg.poisoning_model()


def cmd_certify(cfg: RunConfig) -> int:
    votes, scheme, model = _votes_context(cfg)
    cap = cfg.rho_cap if cfg.rho_cap >= 0 else votes.n
    certs = certify_all(votes.records, cfg.alpha, scheme, model, votes.n, cap)
    _emit(cfg, certificates_to_csv(certs))
    return 0


def cmd_curve(cfg: RunConfig) -> int:
    votes, scheme, model = _votes_context(cfg)
    curve = accuracy_curve(votes.records, cfg.grid(), cfg.alpha, scheme, model, votes.n)
    _emit(cfg, curve_to_csv(curve))
    return 0


def cmd_radius(cfg: RunConfig, margin: float) -> int:
    if cfg.n < 1:
        raise ConfigError("n must be positive")
    scheme = cfg.selection_scheme(cfg.n)
    cap = cfg.rho_cap if cfg.rho_cap >= 0 else cfg.n
    r = certified_radius(scheme, cfg.poisoning_model(), cfg.n, margin, cap)
    print("ABSTAIN" if r == ABSTAIN else r)
    return 0


def cmd_oracle_check(cfg: RunConfig, max_n: int, max_rho: int, perturb: bool) -> int:
    from . import oracle
    from .certify import UncertifiableWarning, delta, delta_exact

    if not 3 <= max_n <= oracle.MAX_N or not 0 <= max_rho <= oracle.MAX_RHO:
        raise ConfigError(f"caps must satisfy 3 <= max_n <= {oracle.MAX_N}, "
                          f"0 <= max_rho <= {oracle.MAX_RHO}")
    scale = Fraction(101, 100) if perturb else Fraction(1)
    failures = []
    checked = 0
    start = time.perf_counter()
    for inst in oracle.default_grid(range(3, max_n + 1), rhos=range(max_rho + 1)):
        checked += 1
        tag = f"{inst.scheme} {inst.model.name} n={inst.n} rho={inst.rho}"
        exact = oracle.enumerate_delta_exact(inst)
        with warnings.catch_warnings():
            # the grid deliberately includes uncertifiable instances
            warnings.simplefilter("ignore", UncertifiableWarning)
            closed = delta(inst.scheme, inst.model, inst.n, inst.rho)
        if abs(float(exact) - closed) > 1e-9 or delta_exact(inst.scheme, inst.model, inst.n, inst.rho) != exact:
            failures.append(f"delta {tag}: oracle {exact} vs closed form {closed}")
        rep = oracle.verify_pi_bounds(inst, scale)
        if not rep.ok:
            failures.append(f"pi {tag}: {rep.failures[0]}")
        if oracle.tightness_witness(inst, exact) is not None:
            failures.append(f"tightness {tag}: attack found at margin = delta")
        if inst.rho and oracle.tightness_witness(inst, min(exact, 1) - Fraction(1, 1000)) is None:
            failures.append(f"tightness {tag}: no attack just below delta")
    elapsed = time.perf_counter() - start
    for f in failures[:50]:
        print("FAIL", f)
    status = "PASS" if not failures else "FAIL"
    print(f"oracle-check {status}: {checked} instances, {len(failures)} failures, {elapsed:.1f}s")
    summary = {"status": status, "instances": checked, "failures": len(failures),
               "max_n": max_n, "max_rho": max_rho, "perturbed_pi": perturb,
               "seconds": round(elapsed, 3)}
    if cfg.output:
        atomic_write(cfg.output, json.dumps(summary, indent=1, sort_keys=True) + "\n")
    else:
        print(json.dumps(summary, sort_keys=True))
    return 0 if not failures else 2


def cmd_compare_case3(cfg: RunConfig) -> int:
    from .config import parse_int_list
    from .pipeline import compare_case3, load_data

    train, test = load_data(cfg)
    clean = parse_int_list(cfg.clean_classes)
    if not clean:
        raise ConfigError("clean_classes missing")
    D_p_size = int(sum(1 for y in train.labels if int(y) not in clean))
    report = compare_case3(train, test, clean, cfg.selection_scheme(D_p_size), cfg.T,
                           cfg.learner_spec(), cfg.seed, cfg.alpha, cfg.poisoning_model(),
                           cfg.expand_size)
    _emit(cfg, report.to_csv())
    print(f"phase-2 clean accuracy {report.phase2_accuracy:.4f}; two-phase >= flat at "
          f"{report.wins}/{len(report.rows)} grid points", file=sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        cfg.validate(args.command)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "certify":
            return cmd_certify(cfg)
        if args.command == "curve":
            return cmd_curve(cfg)
        if args.command == "radius":
            return cmd_radius(cfg, args.margin)
        if args.command == "oracle-check":
            return cmd_oracle_check(cfg, args.max_n, args.max_rho, args.perturb_pi)
        return cmd_compare_case3(cfg)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
