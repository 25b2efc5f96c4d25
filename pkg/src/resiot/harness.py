"""Scenario files: declarative principals, attachments, runs and faults.

A scenario is a YAML mapping::

    name: rsf-gs happy path
    seed: 7
    timings: paper            # paper | host | path to a timing YAML
    latencies: {t_com_d: 56, t_com_d_sa: 243}   # optional override
    anonymous_attachment: false
    abe_universe: [a, b, c, d]                   # or an integer size
    principals:
      - {id: SA1, role: security-agent}
      - {id: SA2, role: security-agent, group: rogue, abe_policy: "and(a, b)"}
      - {id: D1, role: device, sa: SA1}
      - {id: D2, role: device, sa: SA2, attach: false}
    runs:
      - id: auth
        protocol: rsf-gs
        initiator: D1
        responder: D2
        expect: accept
        faults:
          - {step: 5, action: bitflip, field: sigma, bit: 200}

Running a scenario is a pure function of its contents: the report bytes
depend only on the file and its seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .abe import abe_keygen, abe_setup, parse_policy
from .errors import AuthenticationFailed, PolicyError, ResiotError, ScenarioError
from .groupsig import gs_enroll, gs_setup
from .perf.costs import LatencyConstants, load_cost_parameters
from .protocol import (AAAStub, Device, KeyAuthority, Network, SecurityAgent, STEP_COUNT, attach,
                       detach, run_rsf_abe, run_rsf_gs)
from .sim import FAULT_ACTIONS, FabricConfig, Fault
from .suite import Rng

PROTOCOLS = ("rsf-gs", "rsf-abe")
OUTCOMES = {"rsf-gs": ("accept", "reject"), "rsf-abe": ("delivered", "denied", "protocol-failure")}
GROUPS = ("main", "rogue", "none")


@dataclass(frozen=True)
class PrincipalSpec:
    id: str
    role: str
    sa: str | None = None
    attach: bool = True
    secret: str = "valid"
    group: str = "main"
    abe_policy: str | None = None


@dataclass(frozen=True)
class RunSpec:
    id: str
    protocol: str
    initiator: str
    responder: str
    expect: str | None = None
    expect_step: int | None = None
    data: bytes = b""
    attributes: tuple = ()
    faults: tuple = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    principals: tuple
    runs: tuple
    timings: str = "paper"
    latencies: LatencyConstants | None = None
    jitter_ms: float = 0.0
    step_timeout_ms: float = 5000.0
    anonymous_attachment: bool = False
    abe_universe: tuple = ("a", "b", "c", "d")

    def principal(self, pid):
        for p in self.principals:
            if p.id == pid:
                return p
        raise KeyError(pid)

    def run(self, run_id):
        for r in self.runs:
            if r.id == run_id:
                return r
        raise KeyError(run_id)


# -- parsing and validation ------------------------------------------------------

def _need(doc, key, path, kind=None):
    if not isinstance(doc, dict) or key not in doc:
        raise ScenarioError(f"{path}.{key}" if path else key, "required")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise ScenarioError(f"{path}.{key}" if path else key, f"expected {getattr(kind, '__name__', kind)}")
    return value


def _check_keys(doc, allowed, path):
    extra = set(doc) - set(allowed)
    if extra:
        raise ScenarioError(f"{path}.{sorted(extra)[0]}", "unknown key")


def _parse_fault(doc, path):
    if not isinstance(doc, dict):
        raise ScenarioError(path, "fault must be a mapping")
    _check_keys(doc, ("step", "action", "field", "kind", "bit", "value", "source_run"), path)
    step = _need(doc, "step", path, int)
    action = _need(doc, "action", path, str)
    if action not in FAULT_ACTIONS:
        raise ScenarioError(f"{path}.action", f"one of {', '.join(FAULT_ACTIONS)}")
    value = doc.get("value")
    if value is not None:
        try:
            value = bytes.fromhex(value)
        except (TypeError, ValueError):
            raise ScenarioError(f"{path}.value", "hex string expected") from None
    try:
        return Fault(step=step, action=action, field=doc.get("field"), kind=doc.get("kind"),
                     bit=int(doc.get("bit", 0)), value=value, source_run=doc.get("source_run"))
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None


def _parse_principal(doc, path):
    if not isinstance(doc, dict):
        raise ScenarioError(path, "principal must be a mapping")
    _check_keys(doc, ("id", "role", "sa", "attach", "secret", "group", "abe_policy"), path)
    pid = _need(doc, "id", path, str)
    role = _need(doc, "role", path, str)
    if role not in ("device", "security-agent"):
        raise ScenarioError(f"{path}.role", "device or security-agent")
    spec = PrincipalSpec(pid, role, sa=doc.get("sa"), attach=bool(doc.get("attach", True)),
                         secret=doc.get("secret", "valid"), group=doc.get("group", "main"),
                         abe_policy=doc.get("abe_policy"))
    if role == "device" and not spec.sa:
        raise ScenarioError(f"{path}.sa", "devices need a home security agent")
    if spec.secret not in ("valid", "wrong"):
        raise ScenarioError(f"{path}.secret", "valid or wrong")
    if spec.group not in GROUPS:
        raise ScenarioError(f"{path}.group", f"one of {', '.join(GROUPS)}")
    if spec.abe_policy is not None:
        try:
            parse_policy(spec.abe_policy)
        except PolicyError as exc:
            raise ScenarioError(f"{path}.abe_policy", str(exc)) from None
    return spec


def _parse_run(doc, path):
    if not isinstance(doc, dict):
        raise ScenarioError(path, "run must be a mapping")
    _check_keys(doc, ("id", "protocol", "initiator", "responder", "sender", "receiver", "expect",
                      "expect_step", "data", "attributes", "faults"), path)
    rid = _need(doc, "id", path, str)
    protocol = _need(doc, "protocol", path, str)
    if protocol not in PROTOCOLS:
        raise ScenarioError(f"{path}.protocol", f"one of {', '.join(PROTOCOLS)}")
    a, b = ("initiator", "responder") if protocol == "rsf-gs" else ("sender", "receiver")
    first, second = _need(doc, a, path, str), _need(doc, b, path, str)
    expect = doc.get("expect")
    if expect is not None and expect not in OUTCOMES[protocol]:
        raise ScenarioError(f"{path}.expect", f"one of {', '.join(OUTCOMES[protocol])}")
    attrs = ()
    data = b""
    if protocol == "rsf-abe":
        attrs = _need(doc, "attributes", path, list)
        if not attrs or not all(isinstance(x, str) for x in attrs):
            raise ScenarioError(f"{path}.attributes", "non-empty list of attribute names")
        data = str(doc.get("data", "")).encode()
    faults = doc.get("faults") or []
    if not isinstance(faults, list):
        raise ScenarioError(f"{path}.faults", "list expected")
    parsed = tuple(_parse_fault(f, f"{path}.faults[{i}]") for i, f in enumerate(faults))
    for i, f in enumerate(parsed):
        if not 1 <= f.step <= STEP_COUNT[protocol]:
            raise ScenarioError(f"{path}.faults[{i}].step", f"{protocol} has steps 1..{STEP_COUNT[protocol]}")
    return RunSpec(rid, protocol, first, second, expect, doc.get("expect_step"), data, tuple(attrs), parsed)


def scenario_from_dict(doc, name="scenario"):
    """Build and validate a ``Scenario``; errors name the offending path."""
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "scenario must be a mapping")
    _check_keys(doc, ("name", "seed", "timings", "latencies", "jitter_ms", "step_timeout_ms",
                      "anonymous_attachment", "abe_universe", "principals", "runs"), "<root>")
    seed = _need(doc, "seed", "", int)
    principals_doc = _need(doc, "principals", "", list)
    runs_doc = _need(doc, "runs", "", list)
    principals = tuple(_parse_principal(p, f"principals[{i}]") for i, p in enumerate(principals_doc))
    ids = [p.id for p in principals]
    for i, pid in enumerate(ids):
        if pid in ids[:i]:
            raise ScenarioError(f"principals[{i}].id", f"duplicate id {pid!r}")
    roles = {p.id: p.role for p in principals}
    for i, p in enumerate(principals):
        if p.role == "device" and roles.get(p.sa) != "security-agent":
            raise ScenarioError(f"principals[{i}].sa", f"{p.sa!r} is not a declared security agent")
    universe = doc.get("abe_universe", ["a", "b", "c", "d"])
    if isinstance(universe, int):
        universe = [f"attr{i}" for i in range(1, universe + 1)]
    if not isinstance(universe, list) or not universe or len(set(universe)) != len(universe):
        raise ScenarioError("abe_universe", "non-empty list of distinct names or a positive integer")
    for i, p in enumerate(principals):
        if p.abe_policy:
            unknown = sorted({a for a in _leaf_names(p.abe_policy)} - set(universe))
            if unknown:
                raise ScenarioError(f"principals[{i}].abe_policy", f"attributes outside universe: {unknown}")
    runs = tuple(_parse_run(r, f"runs[{i}]") for i, r in enumerate(runs_doc))
    seen = []
    for i, r in enumerate(runs):
        if r.id in seen:
            raise ScenarioError(f"runs[{i}].id", f"duplicate run id {r.id!r}")
        seen.append(r.id)
        labels = ("initiator", "responder") if r.protocol == "rsf-gs" else ("sender", "receiver")
        for label, pid in zip(labels, (r.initiator, r.responder)):
            if roles.get(pid) != "device":
                raise ScenarioError(f"runs[{i}].{label}", f"{pid!r} is not a declared device")
        for a in r.attributes:
            if a not in universe:
                raise ScenarioError(f"runs[{i}].attributes", f"{a!r} outside abe_universe")
        for j, f in enumerate(r.faults):
            if f.source_run is not None and f.source_run not in seen[:-1]:
                raise ScenarioError(f"runs[{i}].faults[{j}].source_run", "must name an earlier run")
    latencies = None
    if doc.get("latencies") is not None:
        lat = doc["latencies"]
        if not isinstance(lat, dict):
            raise ScenarioError("latencies", "mapping expected")
        try:
            latencies = LatencyConstants(**{k: float(v) for k, v in lat.items()})
        except (TypeError, ValueError) as exc:
            raise ScenarioError("latencies", str(exc)) from None
    timings = doc.get("timings", "paper")
    if not isinstance(timings, str):
        raise ScenarioError("timings", "paper, host or a file path")
    return Scenario(name=str(doc.get("name", name)), seed=seed, principals=principals, runs=runs,
                    timings=timings, latencies=latencies, jitter_ms=float(doc.get("jitter_ms", 0.0)),
                    step_timeout_ms=float(doc.get("step_timeout_ms", 5000.0)),
                    anonymous_attachment=bool(doc.get("anonymous_attachment", False)),
                    abe_universe=tuple(universe))


def _leaf_names(text):
    from .abe import attributes
    return attributes(parse_policy(text))


def load_scenario(path):
    path = Path(path)
    with path.open() as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError("<root>", f"not valid YAML: {exc}") from None
    scenario = scenario_from_dict(doc, name=path.stem)
    if scenario.timings not in ("paper", "host"):
        resolved = (path.parent / scenario.timings).resolve()
        scenario = replace(scenario, timings=str(resolved))
    return scenario


def inject_fault(scenario, at_step, mutation, run=None):
    """Return a copy of ``scenario`` with one more fault on ``run``.

    ``mutation`` is an action name (``"drop"``) or a mapping of ``Fault``
    fields without ``step``. ``run`` may be omitted for single-run scenarios.
    """
    if run is None:
        if len(scenario.runs) != 1:
            raise ScenarioError("runs", "name the run to mutate when a scenario has several")
        run = scenario.runs[0].id
    try:
        target = scenario.run(run)
    except KeyError:
        raise ScenarioError("runs", f"no run {run!r}") from None
    if not isinstance(at_step, int) or not 1 <= at_step <= STEP_COUNT[target.protocol]:
        raise ScenarioError(f"runs[{run}].faults", f"unknown step {at_step!r} for {target.protocol}")
    spec = {"action": mutation} if isinstance(mutation, str) else dict(mutation)
    spec["step"] = at_step
    fault = _parse_fault({k: (v.hex() if k == "value" and isinstance(v, bytes) else v)
                          for k, v in spec.items()}, f"runs[{run}].faults")
    runs = tuple(replace(r, faults=r.faults + (fault,)) if r.id == run else r for r in scenario.runs)
    return replace(scenario, runs=runs)


# -- execution -----------------------------------------------------------------------

@dataclass
class RunReport:
    id: str
    protocol: str
    outcome: str
    expected: str | None
    failed_step: int | None
    expected_step: int | None
    error: str | None
    reason: str
    started_at_ms: float
    elapsed_ms: float
    messages: int
    keys_agree: bool

    @property
    def matched(self):
        if self.expected is not None and self.outcome != self.expected:
            return False
        if self.expected_step is not None and self.failed_step != self.expected_step:
            return False
        return True

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["started_at_ms"] = round(self.started_at_ms, 6)
        d["elapsed_ms"] = round(self.elapsed_ms, 6)
        d["matched"] = self.matched
        return d


@dataclass
class ScenarioReport:
    name: str
    seed: int
    timings: str
    attachments: list
    runs: list
    transcript: object = field(repr=False)
    network: object = field(default=None, repr=False)

    @property
    def all_matched(self):
        return all(r.matched for r in self.runs)

    def to_dict(self):
        return {
            "name": self.name, "seed": self.seed, "timings": self.timings,
            "attachments": self.attachments,
            "runs": [r.as_dict() for r in self.runs],
            "transcript_sha256": hashlib.sha256(self.transcript_jsonl().encode()).hexdigest(),
            "all_matched": self.all_matched,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def summary_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in self.runs:
            w.writerow([r.id, r.protocol, r.outcome, r.expected or "", "" if r.failed_step is None else r.failed_step,
                        r.error or "", f"{r.elapsed_ms:.6f}", r.messages, str(r.matched).lower()])
        return buf.getvalue()

    def transcript_jsonl(self):
        return "".join(json.dumps(e.as_dict(), sort_keys=True) + "\n" for e in self.transcript)

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"report": out / "report.json", "summary": out / "summary.csv",
                 "transcript": out / "transcript.jsonl"}
        paths["report"].write_text(self.to_json())
        paths["summary"].write_text(self.summary_csv())
        paths["transcript"].write_text(self.transcript_jsonl())
        return paths


SUMMARY_COLUMNS = ("run", "protocol", "outcome", "expected", "failed_step", "error", "elapsed_ms",
                   "messages", "matched")


def build_network(scenario, costs=None):
    """Instantiate principals and keys for ``scenario`` (no runs, no attachments)."""
    rng = Rng(scenario.seed)
    params = load_cost_parameters(costs if costs is not None else scenario.timings)
    if scenario.latencies is not None:
        params = replace(params, latencies=scenario.latencies)
    config = FabricConfig.from_latencies(params.latencies, scenario.jitter_ms, scenario.seed)
    net = Network(params, config, step_timeout_ms=scenario.step_timeout_ms)
    aaa = net.add(AAAStub("AAA", rng.fork("aaa")))
    authorities = {}
    for group in ("main", "rogue"):
        gpk, issuer = gs_setup(net.suite, rng.fork(f"ka/{group}/gs"))
        pk, msk = abe_setup(net.suite, scenario.abe_universe, rng.fork(f"ka/{group}/abe"))
        authorities[group] = net.add(KeyAuthority(f"KA-{group}", gpk, issuer, pk, msk))
    main = authorities["main"]
    index = {"main": 0, "rogue": 0}
    for p in scenario.principals:
        if p.role != "security-agent":
            continue
        ka = authorities.get(p.group, main)
        member = None
        if p.group != "none":
            index[p.group] += 1
            member = gs_enroll(ka.issuer, index[p.group])
        abe_key = abe_keygen(main.abe_msk, p.abe_policy, rng.fork(f"abe-key/{p.id}")) if p.abe_policy else None
        net.add(SecurityAgent(p.id, gpk=ka.gpk, member_key=member, abe_pk=main.abe_pk, abe_key=abe_key,
                              rng_seed=rng.fork(f"sa/{p.id}")))
    for p in scenario.principals:
        if p.role != "device":
            continue
        secret = aaa.enroll(p.id)
        if p.secret == "wrong":
            secret = rng.fork(f"wrong/{p.id}").bytes(32)
        net.add(Device(p.id, secret, rng.fork(f"device/{p.id}")), net.principals[p.sa])
    return net, aaa


def _attach(net, aaa, dev_spec, anonymous, rng, log):
    dev, sa = net.principals[dev_spec.id], net.principals[dev_spec.sa]
    detach(dev, sa)
    try:
        att = attach(dev, sa, aaa, anonymous=anonymous, rng_seed=rng, at=net.clock.now)
        log.append({"device": dev.id, "sa": sa.id, "status": "attached", "anonymous": anonymous,
                    "at_ms": round(net.clock.now, 6), "handle": att.handle if not anonymous else "anonymous"})
    except AuthenticationFailed as exc:
        log.append({"device": dev.id, "sa": sa.id, "status": "authentication-failed", "anonymous": anonymous,
                    "at_ms": round(net.clock.now, 6), "reason": str(exc)})


def run_scenario(scenario, costs=None):
    """Execute every run in order and collect outcomes and transcripts."""
    if isinstance(scenario, (str, Path)):
        scenario = load_scenario(scenario)
    net, aaa = build_network(scenario, costs)
    rng = Rng(scenario.seed).fork("runs")
    log = []
    devices = [p for p in scenario.principals if p.role == "device" and p.attach]
    if not scenario.anonymous_attachment:
        for d in devices:
            _attach(net, aaa, d, False, rng.fork(f"attach/{d.id}"), log)
    reports = []
    for k, run in enumerate(scenario.runs):
        if scenario.anonymous_attachment:
            for d in devices:
                if d.id in (run.initiator, run.responder):
                    _attach(net, aaa, d, True, rng.fork(f"attach/{run.id}/{d.id}"), log)
        a, b = net.principals[run.initiator], net.principals[run.responder]
        sa_i, sa_j = a.home_sa, b.home_sa
        try:
            if run.protocol == "rsf-gs":
                res = run_rsf_gs(net, a, b, sa_i, sa_j, rng_seed=rng.fork(f"run/{run.id}"), run_id=run.id,
                                 faults=run.faults)
            else:
                res = run_rsf_abe(net, a, b, sa_i, sa_j, run.data, run.attributes,
                                  rng_seed=rng.fork(f"run/{run.id}"), run_id=run.id, faults=run.faults)
        except ResiotError as exc:
            raise ScenarioError(f"runs[{k}]", str(exc)) from exc
        reports.append(RunReport(run.id, run.protocol, res.outcome, run.expect, res.failed_step,
                                 run.expect_step, res.error, res.reason, res.started_at, res.elapsed_ms,
                                 len(res.transcript), res.keys_agree))
    return ScenarioReport(scenario.name, scenario.seed, net.costs.provenance, log, reports,
                          net.fabric.transcript, net)


def bundled_scenarios():
    from importlib import resources
    root = resources.files("resiot").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_scenario_path(name_or_path):
    """A filesystem path, or the name of a scenario shipped with the package."""
    p = Path(name_or_path)
    if p.exists():
        return p
    from importlib import resources
    stem = p.name[:-5] if p.name.endswith(".yaml") else p.name
    candidate = resources.files("resiot").joinpath("scenarios").joinpath(stem + ".yaml")
    if candidate.is_file():
        return Path(str(candidate))
    raise FileNotFoundError(name_or_path)


__all__ = [
    "PrincipalSpec", "RunSpec", "Scenario", "RunReport", "ScenarioReport", "SUMMARY_COLUMNS",
    "build_network", "bundled_scenarios", "inject_fault", "load_scenario", "resolve_scenario_path",
    "run_scenario", "scenario_from_dict",
]
