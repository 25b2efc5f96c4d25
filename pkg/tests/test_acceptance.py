"""Acceptance criteria, one terminal line each (see the summary section).

Each test records named checks through the ``acceptance`` fixture and
fails if any check fails, so the pytest result and the summary line agree.
"""

import itertools
import random
import subprocess
import sys
import time

import yaml

from conftest import make_network
from resiot.abe import abe_decrypt, abe_encrypt, abe_keygen, abe_setup
from resiot.errors import PolicyUnsatisfied
from resiot.groupsig import gs_enroll, gs_open, gs_setup, gs_sign, gs_verify
from resiot.perf.costs import compose_rsf_time, compose_sf_time, cost_table, paper_parameters, \
    predict_sf_time, formula, reduction_percent
from resiot.perf.queue import QueueConfig, md1_mean_wait, simulate_queue, sweep
from resiot.protocol import PUBLIC_FIELDS, attach, detach, run_rsf_abe, run_rsf_gs
from resiot.sim import Fault, transcript_view

S = 208.5


def close(a, b, tol):
    return abs(a - b) <= tol


def finish(log, started, limit_s):
    took = time.perf_counter() - started
    log.check(f"runtime < {limit_s:g} s", took < limit_s, f"{took:.2f} s")
    assert not log.failures, log.failures


def test_criterion_1_cost_model(acceptance):
    log = acceptance(1, "cost-model regression")
    t0 = time.perf_counter()
    p = paper_parameters()
    cells = [("gs-sign", p.device, 2409.3), ("gs-sign", p.sa, 208.5), ("gs-verify", p.sa, 224.7),
             ("abe-encrypt", p.device, 6380.9), ("abe-encrypt", p.sa, 706.4),
             ("abe-decrypt", p.device, 1863.0), ("abe-decrypt", p.sa, 95.4)]
    for fn, timings, want in cells:
        got = predict_sf_time(formula(fn, 50), timings)
        log.check(f"{fn}@{timings.platform}={want}", close(got, want, 0.05), f"got {got}")
    rows = {(r.function, r.quantity): r for r in cost_table(p)}
    cell = rows["gs-verify", "t_sf_device"]
    log.check("gs-verify@device reconstruction 2762.4", close(cell.value, 2762.4, 0.05), f"got {cell.value}")
    log.check("gs-verify@device flagged vs 1786.8", cell.published == 1786.8 and cell.flag != "", cell.flag)
    finish(log, t0, 1)


def test_criterion_2_composition(acceptance):
    log = acceptance(2, "composition regression")
    t0 = time.perf_counter()
    p = paper_parameters()
    lat = p.latencies
    t_sf = {fn: compose_sf_time(p.device_time(fn), lat) for fn in ("gs-sign", "gs-verify", "abe-encrypt",
                                                                    "abe-decrypt")}
    t_rsf = {fn: compose_rsf_time(p.device.t_rsf_device, p.sa_time(fn), lat) for fn in t_sf}
    # the gs-verify device cell is published, not reconstructed (criterion 1)
    t_sf["gs-verify"] = compose_sf_time(p.published["t_sf_device"]["gs-verify"], lat)
    for fn, want in (("gs-sign", 2465.3), ("gs-verify", 1842.8), ("abe-encrypt", 6436.9), ("abe-decrypt", 1919)):
        log.check(f"T_sf {fn}={want}", close(t_sf[fn], want, 0.05), f"got {t_sf[fn]}")
    for fn, want in (("gs-sign", 509.837), ("gs-verify", 526.037), ("abe-decrypt", 396.737)):
        log.check(f"T_rsf {fn}={want}", close(t_rsf[fn], want, 0.0005), f"got {t_rsf[fn]}")
    log.check("T_rsf abe-encrypt=1007.737", close(t_rsf["abe-encrypt"], 1007.737, 0.0005),
              f"got {t_rsf['abe-encrypt']}")
    row = {(r.function, r.quantity): r for r in cost_table(p)}["abe-encrypt", "T_rsf"]
    log.check("abe-encrypt 60 ms flag", row.published == 1067.737 and "-60.000" in row.flag, row.flag)
    for fn, want in (("gs-sign", 79.32), ("gs-verify", 71.46), ("abe-decrypt", 79.33)):
        got = reduction_percent(t_sf[fn], t_rsf[fn])
        log.check(f"reduction {fn}={want}%", close(got, want, 0.01), f"got {got:.4f}")
    finish(log, t0, 1)


def test_criterion_3_queue(acceptance):
    log = acceptance(3, "queue experiment")
    t0 = time.perf_counter()
    base = QueueConfig(service_ms=S, requests=100_000, seed=2024, arrivals="poisson")
    t_grid = [2 * S, 5 * S, 10 * S]
    for t in t_grid:
        r = simulate_queue(QueueConfig(**{**vars(base), "scaled_rate": 1.0, "t_exp_ms": t}))
        log.check(f"c=1.0 t_exp={t / S:g}*t_SF success>0.80", r.success_rate > 0.80, f"{r.success_rate:.4f}")
    c_values = [round(0.1 * i, 1) for i in range(1, 11)]
    reports = {(r.config.scaled_rate, r.config.t_exp_ms): r for r in sweep(c_values, t_grid, base)}
    for c in (c for c in c_values if c <= 0.7):
        worst = min(reports[c, t].success_rate for t in t_grid)
        log.check(f"c={c} success>0.90 on grid", worst > 0.90, f"min {worst:.4f}")
    rate = {k: v.success_rate for k, v in reports.items()}
    mono_c = all(rate[a, t] >= rate[b, t] for t in t_grid for a, b in zip(c_values, c_values[1:]))
    mono_t = all(rate[c, a] <= rate[c, b] for c in c_values for a, b in zip(t_grid, t_grid[1:]))
    log.check("non-increasing in c_k (10x3)", mono_c)
    log.check("non-decreasing in t_exp (10x3)", mono_t)
    r = simulate_queue(QueueConfig(**{**vars(base), "scaled_rate": 0.5}))
    want = md1_mean_wait(0.5, S)
    log.check("M/D/1 mean wait c=0.5 within 5%", abs(r.mean_wait_ms - want) <= 0.05 * want,
              f"{r.mean_wait_ms:.2f} vs {want}")
    finish(log, t0, 30)


def _oracle(tree, attrs):
    if isinstance(tree, str):
        return tree in attrs
    k, kids = tree
    return sum(_oracle(c, attrs) for c in kids) >= k


def _render(tree):
    if isinstance(tree, str):
        return tree
    k, kids = tree
    return f"thresh({k}, {', '.join(_render(c) for c in kids)})"


def _random_tree(rng, names, depth):
    if depth == 0 or (depth < 2 and rng.random() < 0.35):
        return rng.choice(names)
    kids = [_random_tree(rng, names, depth - 1) for _ in range(rng.randint(2, 3))]
    return (rng.randint(1, len(kids)), kids)


def test_criterion_4_crypto(acceptance):
    log = acceptance(4, "crypto correctness")
    t0 = time.perf_counter()
    gpk, issuer = gs_setup(rng_seed=41)
    members = [gs_enroll(issuer, i) for i in range(1, 11)]
    rng = random.Random(4)
    bad_round_trip = bad_open = 0
    for n in range(100):
        msg = rng.randbytes(rng.randint(0, 64))
        m = members[n % len(members)]
        sig = gs_sign(gpk, m, msg, rng_seed=n)
        bad_round_trip += not gs_verify(gpk, msg, sig)
        bad_open += gs_open(issuer, msg, sig) != m.index
    log.check("BBS round-trip 100 messages x 10 members", bad_round_trip == 0, f"{bad_round_trip} failed")
    log.check("gs_open recovers every signer", bad_open == 0, f"{bad_open} wrong")
    other_gpk, other_issuer = gs_setup(rng_seed=42)
    stranger = gs_enroll(other_issuer, 1)
    cross = [bool(gs_verify(gpk, b"m%d" % i, gs_sign(other_gpk, stranger, b"m%d" % i, rng_seed=i)))
             or bool(gs_verify(other_gpk, b"m%d" % i, gs_sign(gpk, members[i], b"m%d" % i, rng_seed=i)))
             for i in range(10)]
    log.check("cross-group verification fails", not any(cross))

    names = ["a", "b", "c", "d"]
    pk, msk = abe_setup(universe=names, rng_seed=44)
    trng = random.Random(44)
    mismatches = []
    trees = [_random_tree(trng, names, 2) for _ in range(6)]
    for t_i, tree in enumerate(trees):
        key = abe_keygen(msk, _render(tree), 100 + t_i)
        for mask in range(16):
            attrs = [a for j, a in enumerate(names) if mask >> j & 1]
            expect = _oracle(tree, set(attrs))
            if not attrs:
                # the empty set cannot form a ciphertext; the oracle must agree it satisfies nothing
                ok = not expect
            else:
                ct = abe_encrypt(pk, attrs, b"p%d" % mask, 1000 * t_i + mask)
                try:
                    ok = abe_decrypt(key, ct) == b"p%d" % mask and expect
                except PolicyUnsatisfied:
                    ok = not expect
            if not ok:
                mismatches.append((_render(tree), attrs))
    log.check(f"GPSW {len(trees)} trees x 16 subsets agree with oracle", not mismatches, str(mismatches[:3]))
    finish(log, t0, 300)


def _sa_variable_values(transcript, sa_id):
    values = set()
    for e in transcript_view(transcript, sa_id):
        for name, v in e.fields.items():
            if name not in PUBLIC_FIELDS:
                values.add(("field", v))
        values.add(("wire", e.wire))
        values.add(("session", e.session_id))
        for pid in (e.wire_sender, e.wire_receiver):
            if pid != sa_id:
                values.add(("handle", pid))
    return values


# (protocol, fault, outcome, step)
FAULT_CATALOGUE = [
    ("gs", Fault(5, "bitflip", field="sigma", bit=77), "reject", 6),
    ("gs", Fault(1, "bitflip", field="nonce", bit=3), "reject", 6),
    ("gs", Fault(2, "bitflip", bit=8 * 40), "reject", 3),
    ("gs", Fault(3, "bitflip", bit=8 * 60), "reject", 3),
    ("gs", Fault(4, "bitflip", field="e_prime", bit=300), "reject", 5),
    ("gs", Fault(1, "drop"), "reject", 1),
    ("gs", Fault(4, "drop"), "reject", 4),
    ("gs", Fault(6, "drop"), "reject", 6),
    ("gs", Fault(4, "replay", field="e_prime", source_run="origin"), "reject", 5),
    ("gs", Fault(4, "replay", field="*", source_run="origin"), "reject", 5),
    ("abe", Fault(4, "bitflip", field="e_pp", bit=200), "protocol-failure", 5),
    ("abe", Fault(6, "bitflip", bit=8 * 70), "protocol-failure", 6),
    ("abe", Fault(3, "drop"), "protocol-failure", 3),
    ("abe", Fault(7, "replace", field="ack", value=b"\x00" * 16), "protocol-failure", 7),
    ("abe", Fault(4, "replay", field="*", source_run="origin-abe"), "protocol-failure", 5),
    ("abe", Fault(5, "replay", field="abe_ct", source_run="origin-abe"), "protocol-failure", 7),
]


def test_criterion_5_protocol_properties(acceptance, group, rogue_group, abe_keys):
    log = acceptance(5, "protocol properties")
    t0 = time.perf_counter()

    # (a) confidentiality over 100 seeded runs
    leaks, failures = [], 0
    net, aaa, sa1, sa2, d1, d2 = make_network(group, abe_keys, policy="or(a, b)")
    for seed in range(100):
        rng = random.Random(seed)
        marker = rng.randbytes(16)
        if seed % 2:
            res = run_rsf_gs(net, d1, d2, sa1, sa2, rng_seed=seed, run_id=f"c{seed}", nonce=marker)
            failures += res.outcome != "accept"
        else:
            marker = b"MARK" + marker
            res = run_rsf_abe(net, d1, d2, sa1, sa2, marker + b" reading", ["a"], rng_seed=seed, run_id=f"c{seed}")
            failures += res.outcome != "delivered"
        for sa in ("SA1", "SA2"):
            if any(marker in blob for e in transcript_view(res.transcript, sa) for blob in e.visible_bytes()):
                leaks.append((seed, sa))
    log.check("100 honest runs complete", failures == 0, f"{failures} failed")
    log.check("no planted marker in SA-visible transcripts", not leaks, str(leaks[:3]))

    # (b) authenticity: unattached devices are refused
    refused = 0
    for seed in range(10):
        net, aaa, sa1, sa2, d1, d2 = make_network(group, abe_keys, attach_devices=False)
        attach(d1, sa1, aaa)
        gs = run_rsf_gs(net, d1, d2, sa1, sa2, rng_seed=seed, run_id="gs")
        abe = run_rsf_abe(net, d2, d1, sa2, sa1, b"x", ["a", "b"], rng_seed=seed, run_id="abe")
        refused += (gs.failed_step, gs.error, abe.failed_step, abe.error) == (3, "refused", 3, "refused")
    log.check("unattached device refused (gs and abe, 10 seeds)", refused == 10, f"{refused}/10")

    # (c) untraceability under anonymous attachment
    net, aaa, sa1, sa2, d1, d2 = make_network(group, abe_keys, policy="or(a, b)", anonymous=True)
    per_session = {"SA1": [], "SA2": []}
    for i in range(15):
        if i:
            for d, sa in ((d1, sa1), (d2, sa2)):
                detach(d, sa)
                attach(d, sa, aaa, anonymous=True, rng_seed=1000 + i)
        if i % 2:
            res = run_rsf_gs(net, d1, d2, sa1, sa2, rng_seed=500 + i, run_id=f"u{i}")
        else:
            res = run_rsf_abe(net, d1, d2, sa1, sa2, b"r", ["a"], rng_seed=500 + i, run_id=f"u{i}")
        for sa in per_session:
            per_session[sa].append(_sa_variable_values(res.transcript, sa))
    pairs = linked = 0
    for sa, sessions in per_session.items():
        for x, y in itertools.combinations(sessions, 2):
            pairs += 1
            linked += bool(x & y)
    log.check(f"no repeated SA-visible values across {pairs} anonymous session pairs", pairs >= 100 and linked == 0,
              f"{linked} linked pairs")

    # (d) fault catalogue
    wrong = []
    for seed in range(3):
        for proto, fault, outcome, step in FAULT_CATALOGUE:
            net, aaa, sa1, sa2, d1, d2 = make_network(group, abe_keys)
            if proto == "gs":
                run_rsf_gs(net, d1, d2, sa1, sa2, rng_seed=seed + 50, run_id="origin")
                res = run_rsf_gs(net, d1, d2, sa1, sa2, rng_seed=seed, run_id="f", faults=[fault])
            else:
                run_rsf_abe(net, d1, d2, sa1, sa2, b"old", ["a", "b"], rng_seed=seed + 50, run_id="origin-abe")
                res = run_rsf_abe(net, d1, d2, sa1, sa2, b"new", ["a", "b"], rng_seed=seed, run_id="f",
                                  faults=[fault])
            if (res.outcome, res.failed_step) != (outcome, step):
                wrong.append((fault.describe(), res.outcome, res.failed_step, res.error))
        net, aaa, sa1, sa2, d1, d2 = make_network(group, abe_keys, rogue=rogue_group)
        res = run_rsf_gs(net, d1, d2, sa1, sa2, rng_seed=seed)
        if (res.outcome, res.failed_step) != ("reject", 6):
            wrong.append(("cross-group", res.outcome, res.failed_step, res.error))
    log.check(f"{len(FAULT_CATALOGUE) + 1} fault scenarios abort at documented step", not wrong, str(wrong[:3]))
    finish(log, t0, 300)


def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "resiot.cli", *map(str, args)], cwd=cwd,
                          capture_output=True, check=False)


def _snapshot(out_dir):
    return {p.relative_to(out_dir).as_posix(): p.read_bytes() for p in sorted(out_dir.rglob("*")) if p.is_file()}


def test_criterion_6_cli_determinism(acceptance, tmp_path):
    log = acceptance(6, "CLI determinism")
    t0 = time.perf_counter()
    commands = {
        "keygen group": ["keygen", "group", "--members", 4, "--seed", 12],
        "keygen abe": ["keygen", "abe", "--universe", "a,b,c,d", "--policy", "and(a, or(b, c))",
                       "--policy", "thresh(2, a, b, d)", "--seed", 12],
        "run rsf_gs_happy": ["run", "rsf_gs_happy"],
        "run rsf_gs_faults": ["run", "rsf_gs_faults", "--seed", 99],
        "run rsf_abe_access": ["run", "rsf_abe_access"],
        "cost-table": ["cost-table"],
        "queue-sweep": ["queue-sweep", "--seed", 3, "--requests", 20_000],
    }
    for name, args in commands.items():
        results = []
        for i in range(2):
            out = tmp_path / name.replace(" ", "_") / str(i)
            proc = _cli(args + ["--out", out], tmp_path)
            # keygen echoes the paths it wrote
            stdout = proc.stdout.replace(str(out).encode(), b"OUT")
            results.append((proc.returncode, stdout, _snapshot(out)))
        same = results[0] == results[1] and results[0][0] == 0 and results[0][2]
        log.check(name, same, f"exit {results[0][0]}, {len(results[0][2])} files")

    # microbench timings are wall-clock host measurements; everything else in its output is fixed
    docs = []
    for i in range(2):
        out = tmp_path / "microbench" / str(i)
        proc = _cli(["microbench", "--repeats", 3, "--out", out], tmp_path)
        doc = yaml.safe_load((out / "host_timings.yaml").read_bytes()) if proc.returncode == 0 else {}
        for platform in doc.get("platforms", {}).values():
            for k in platform:
                platform[k] = None
        docs.append(yaml.safe_dump(doc))
    log.check("microbench (timing values masked)", docs[0] == docs[1] and "host-measured" in docs[0])
    finish(log, t0, 300)
