"""``resiot`` command line.

Exit codes:

0  command succeeded (for ``run``: every run met its expectation)
1  ``run`` completed but at least one run missed its expected outcome
2  usage, validation or I/O error
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .abe import AbeDecryptionKey, abe_keygen, abe_setup, validate_policy
from .errors import PolicyError, ResiotError, ScenarioError
from .groupsig import gs_enroll, gs_setup
from .harness import load_scenario, resolve_scenario_path, run_scenario
from .perf.bench import microbench
from .perf.costs import CSV_COLUMNS, cost_table, format_value, load_cost_parameters
from .perf.queue import ARRIVALS, POLICIES, QueueConfig, sweep

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        path.write_text(data)
    else:
        path.write_bytes(data)
    return path


# -- keygen --------------------------------------------------------------------------

def cmd_keygen(args):
    out = Path(args.out)
    written = []
    if args.kind == "group":
        if args.members < 1:
            raise UsageError("--members must be >= 1")
        gpk, issuer = gs_setup(rng_seed=args.seed)
        members = [gs_enroll(issuer, i) for i in range(1, args.members + 1)]
        written.append(_write(out / "group-public.key", gpk.to_bytes()))
        written.append(_write(out / "group-issuer.key", issuer.to_bytes()))
        for m in members:
            written.append(_write(out / f"group-member-{m.index}.key", m.to_bytes(gpk.suite)))
    else:
        universe = _universe(args.universe)
        pk, msk = abe_setup(universe=universe, rng_seed=args.seed)
        policies = [validate_policy(pk, text) for text in args.policy]
        written.append(_write(out / "abe-public.key", pk.to_bytes()))
        written.append(_write(out / "abe-master.key", msk.to_bytes()))
        for i, policy in enumerate(policies, start=1):
            key = abe_keygen(msk, policy, args.seed * 1000 + i)
            written.append(_write(out / f"abe-key-{i}.key", key.to_bytes()))
            AbeDecryptionKey.from_bytes(key.to_bytes(), pk.suite)
    for p in written:
        print(p)
    return EXIT_OK


def _universe(text):
    text = str(text).strip()
    if text.isdigit():
        return int(text)
    names = [t.strip() for t in text.split(",") if t.strip()]
    if not names:
        raise UsageError("--universe must be a count or a comma-separated list")
    return names


# -- run ----------------------------------------------------------------------------

def cmd_run(args):
    path = resolve_scenario_path(args.scenario)
    scenario = load_scenario(path)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    report = run_scenario(scenario, costs=args.timings)
    paths = report.write(args.out)
    sys.stdout.write(report.summary_csv())
    for p in paths.values():
        print(p, file=sys.stderr)
    return EXIT_OK if report.all_matched else EXIT_MISMATCH


# -- cost table -----------------------------------------------------------------------

def cmd_cost_table(args):
    params = load_cost_parameters(args.timings)
    rows = cost_table(params, args.n_attributes)
    lines = [",".join(CSV_COLUMNS)]
    for r in rows:
        lines.append(",".join(_csv_cell(v) for v in (r.function, r.quantity, format_value(r.value),
                                                       format_value(r.published), r.provenance, r.flag)))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        print(_write(Path(args.out) / "cost_table.csv", text), file=sys.stderr)
    return EXIT_OK


def _csv_cell(v):
    v = str(v)
    return f'"{v}"' if "," in v or '"' in v else v


# -- queue sweep ---------------------------------------------------------------------

def parse_grid(spec, service_ms):
    """Parse ``c=0.1:1.0:10;texp=2,5,10`` into (c values, t_exp values in ms).

    ``lo:hi:n`` is an inclusive linear range of n points; t_exp entries are
    multiples of the service time, and ``inf`` disables the deadline.
    """
    parts = {}
    for chunk in spec.split(";"):
        if not chunk.strip():
            continue
        if "=" not in chunk:
            raise UsageError(f"grid chunk {chunk!r} is not key=values")
        key, values = (s.strip() for s in chunk.split("=", 1))
        if key not in ("c", "texp"):
            raise UsageError(f"unknown grid key {key!r}")
        parts[key] = _values(values, key)
    if set(parts) != {"c", "texp"}:
        raise UsageError("grid needs both c= and texp=")
    for c in parts["c"]:
        if not 0 < c <= 1:
            raise UsageError(f"c={c} outside (0, 1]")
    for t in parts["texp"]:
        if not t > 0:
            raise UsageError(f"texp={t} must be > 0")
    return parts["c"], [t * service_ms for t in parts["texp"]]


def _values(text, key):
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
            if n < 1:
                raise ValueError
            if n == 1:
                return [lo]
            return [round(lo + (hi - lo) * i / (n - 1), 12) for i in range(n)]
        return [math.inf if v.strip() == "inf" else float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"bad {key} values {text!r}") from None


QUEUE_COLUMNS = ("c_k", "t_exp", "success_rate", "mean_wait_ms", "mean_total_ms")


def _fmt(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return repr(round(float(v), 9))


def cmd_queue_sweep(args):
    c_values, t_values = parse_grid(args.grid, args.service_ms)
    if args.requests < 1:
        raise UsageError("--requests must be >= 1")
    base = QueueConfig(service_ms=args.service_ms, requests=args.requests, seed=args.seed,
                       arrivals=args.arrivals, policy=args.policy)
    reports = sweep(c_values, t_values, base, workers=args.workers)
    lines = [",".join(QUEUE_COLUMNS)]
    for r in reports:
        row = r.as_row()
        lines.append(",".join(_fmt(row[k]) for k in QUEUE_COLUMNS))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        print(_write(Path(args.out) / "queue_sweep.csv", text), file=sys.stderr)
    return EXIT_OK


# -- microbench ---------------------------------------------------------------------

def cmd_microbench(args):
    timings = microbench(repeats=args.repeats, seed=args.seed)
    row = {k: round(v, 6) for k, v in timings.as_dict().items()
           if k not in ("platform", "provenance") and v is not None}
    base = load_cost_parameters("paper")
    doc = {
        "provenance": "host-measured",
        "platforms": {"device": row, "sa": row},
        "latencies": {"t_com_d": base.latencies.t_com_d, "t_com_d_sa": base.latencies.t_com_d_sa,
                      "t_attach_d": base.latencies.t_attach_d},
    }
    text = yaml.safe_dump(doc, sort_keys=True)
    sys.stdout.write(text)
    if args.out:
        print(_write(Path(args.out) / "host_timings.yaml", text), file=sys.stderr)
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="resiot", description="Offloaded IoT security functions: keys, "
                                "protocol scenarios, cost model and SA queue sweeps.")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", help="generate and serialize group or ABE keys")
    k.add_argument("kind", choices=("group", "abe"))
    k.add_argument("--members", type=int, default=3, help="group members to enroll")
    k.add_argument("--universe", default="4", help="ABE attribute count or comma-separated names")
    k.add_argument("--policy", action="append", default=[], help="ABE key policy (repeatable)")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_keygen)

    r = sub.add_parser("run", help="execute a scenario file or bundled scenario name")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--timings", default=None, help="paper | host | path (overrides the scenario)")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("cost-table", help="SF/RSF processing times and reductions")
    c.add_argument("--timings", default="paper", help="paper | host | path")
    c.add_argument("--n-attributes", type=int, default=None)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_cost_table)

    q = sub.add_parser("queue-sweep", help="SA queue success rate over a (c_k, t_exp) grid")
    q.add_argument("--grid", default="c=0.1:1.0:10;texp=2,5,10")
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--requests", type=int, default=100_000)
    q.add_argument("--service-ms", type=float, default=208.5)
    q.add_argument("--policy", choices=POLICIES, default="abandon")
    q.add_argument("--arrivals", choices=ARRIVALS, default="poisson")
    q.add_argument("--workers", type=int, default=1)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_queue_sweep)

    m = sub.add_parser("microbench", help="time pairing primitives on this host")
    m.add_argument("--repeats", type=int, default=15)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_microbench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ScenarioError, PolicyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except ResiotError as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
