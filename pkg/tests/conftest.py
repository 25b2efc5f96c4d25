import pytest
from hypothesis import HealthCheck, settings

from resiot.abe import abe_keygen, abe_setup
from resiot.groupsig import gs_enroll, gs_setup
from resiot.protocol import AAAStub, Device, Network, SecurityAgent, attach

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("default")

# criterion number -> (title, [(check, ok, detail)])
_ACCEPTANCE = {}


class AcceptanceLog:
    def __init__(self, number, title):
        self.number = number
        _ACCEPTANCE.setdefault(number, (title, []))

    def check(self, name, ok, detail=""):
        _ACCEPTANCE[self.number][1].append((name, bool(ok), detail))
        return bool(ok)

    @property
    def failures(self):
        return [c for c in _ACCEPTANCE[self.number][1] if not c[1]]


@pytest.fixture
def acceptance():
    return AcceptanceLog


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, checks = _ACCEPTANCE[number]
        status = "PASS" if checks and all(ok for _, ok, _ in checks) else "FAIL"
        failed = [f"{name} ({detail})" for name, ok, detail in checks if not ok]
        summary = f"{len(checks) - len(failed)}/{len(checks)} checks"
        if failed:
            summary += "; failing: " + "; ".join(failed)
        tr.write_line(f"[{status}] criterion {number}: {title}: {summary}")


@pytest.fixture(scope="session")
def group():
    gpk, issuer = gs_setup(rng_seed=101)
    members = [gs_enroll(issuer, i) for i in range(1, 11)]
    return gpk, issuer, members


@pytest.fixture(scope="session")
def rogue_group():
    gpk, issuer = gs_setup(rng_seed=202)
    return gpk, issuer, [gs_enroll(issuer, 1)]


@pytest.fixture(scope="session")
def abe_keys():
    return abe_setup(universe=["a", "b", "c", "d"], rng_seed=303)


def make_network(group, abe_keys, *, policy="and(a, b)", rogue=None, attach_devices=True,
                 anonymous=False, costs="paper", fabric_config=None, step_timeout_ms=5000.0):
    """Two SAs (SA1 verifies/encrypts, SA2 signs/decrypts) and two devices."""
    gpk, issuer, members = group
    pk, msk = abe_keys
    net = Network(costs, fabric_config, step_timeout_ms=step_timeout_ms)
    aaa = net.add(AAAStub("AAA", rng_seed=1))
    sa1 = net.add(SecurityAgent("SA1", gpk=gpk, member_key=members[0], abe_pk=pk, rng_seed=2))
    if rogue is None:
        sa2_gpk, sa2_member = gpk, members[1]
    else:
        sa2_gpk, sa2_member = rogue[0], rogue[2][0]
    sa2 = net.add(SecurityAgent("SA2", gpk=sa2_gpk, member_key=sa2_member, abe_pk=pk,
                                abe_key=abe_keygen(msk, policy, 4) if policy else None, rng_seed=3))
    d1 = net.add(Device("D1", aaa.enroll("D1"), rng_seed=5), sa1)
    d2 = net.add(Device("D2", aaa.enroll("D2"), rng_seed=6), sa2)
    if attach_devices:
        attach(d1, sa1, aaa, anonymous=anonymous)
        attach(d2, sa2, aaa, anonymous=anonymous)
    return net, aaa, sa1, sa2, d1, d2
