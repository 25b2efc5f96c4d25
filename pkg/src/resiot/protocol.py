"""Offloaded security-function protocols between devices and security agents.

Two session types run over the simulated fabric:

``rsf-gs``  anonymous authentication. The responder's SA group-signs a
            value bound to a fresh DH key; the initiator's SA verifies.
``rsf-abe`` attribute-based data access. The sender's SA ABE-encrypts the
            sender's DH-protected payload; the receiver's SA decrypts it
            if its key policy admits the ciphertext attributes.

Devices only ever run DH and AES-GCM. All pairing work happens on SAs,
which see E_K(...) values and never K itself.

Each protocol party is a generator driven by the simulation clock. It
yields ``("compute", ms)`` to consume processing time and
``("expect", kind)`` to wait for the next message of the session.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from collections import deque
from dataclasses import dataclass, field

from .abe import AbeCiphertext, abe_decrypt, abe_encrypt
from .encoding import decode_parts, encode_parts
from .errors import (AuthenticationFailed, InvalidElement, MalformedCiphertext, MalformedEncoding,
                     PolicyUnsatisfied, ProtocolAbort, ResiotError, StepOrderError, UnknownAttribute)
from .groupsig import GroupSignature, gs_sign, gs_verify
from .perf.costs import load_cost_parameters
from .sim import Fabric, FabricConfig, SimClock
from .suite import (SessionKey, as_rng, default_suite, derive_key, dh_agree, dh_generate,
                    sym_decrypt, sym_encrypt)

KIND_CODES = {
    "auth_req": 1, "sign_req": 2, "sign_resp": 3, "auth_resp": 4, "verify_req": 5, "verify_resp": 6,
    "abac_init": 7, "abac_accept": 8, "enc_req": 9, "enc_resp": 10, "data_transfer": 11,
    "dec_req": 12, "dec_resp": 13, "ack": 14,
}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

STEPS = {
    "rsf-gs": {"auth_req": 1, "sign_req": 2, "sign_resp": 3, "auth_resp": 4,
               "verify_req": 5, "verify_resp": 6},
    "rsf-abe": {"abac_init": 1, "abac_accept": 1, "enc_req": 2, "enc_resp": 3, "data_transfer": 4,
                "dec_req": 5, "dec_resp": 6, "ack": 7},
}
STEP_COUNT = {"rsf-gs": 6, "rsf-abe": 7}
FAILURE_OUTCOME = {"rsf-gs": "reject", "rsf-abe": "protocol-failure"}
SUCCESS_OUTCOME = {"rsf-gs": "accept", "rsf-abe": "delivered"}

# fields whose values are fixed vocabulary, not per-session secrets
PUBLIC_FIELDS = frozenset({"status", "result", "descriptor"})

_MAGIC = b"RS"
_VERSION = 1
_HEAD = struct.Struct(">2sBB16s")
_PLAIN, _SEALED = 0, 1


# -- wire format ---------------------------------------------------------------

@dataclass(frozen=True)
class ProtocolMessage:
    """Header (magic, version, kind, session id, sender, receiver, length) + payload."""

    kind: str
    session_id: bytes
    sender: str
    receiver: str
    payload: bytes

    def encode(self):
        s, r = self.sender.encode(), self.receiver.encode()
        if len(s) > 255 or len(r) > 255:
            raise ValueError("principal identifiers are limited to 255 bytes")
        return (_HEAD.pack(_MAGIC, _VERSION, KIND_CODES[self.kind], self.session_id)
                + bytes([len(s)]) + s + bytes([len(r)]) + r
                + struct.pack(">I", len(self.payload)) + self.payload)

    @classmethod
    def decode(cls, data):
        try:
            magic, version, code, sid = _HEAD.unpack_from(data, 0)
            pos = _HEAD.size
            n = data[pos]
            sender = data[pos + 1:pos + 1 + n].decode()
            pos += 1 + n
            n = data[pos]
            receiver = data[pos + 1:pos + 1 + n].decode()
            pos += 1 + n
            (length,) = struct.unpack_from(">I", data, pos)
            pos += 4
        except (struct.error, IndexError, UnicodeDecodeError) as exc:
            raise MalformedEncoding(f"bad message header: {exc}") from None
        if magic != _MAGIC or version != _VERSION or code not in KIND_NAMES:
            raise MalformedEncoding("bad message header")
        payload = data[pos:]
        if len(payload) != length:
            raise MalformedEncoding("payload length mismatch")
        return cls(KIND_NAMES[code], sid, sender, receiver, bytes(payload))

    def aad(self):
        return encode_parts([bytes([KIND_CODES[self.kind]]), self.session_id,
                             self.sender.encode(), self.receiver.encode()])


def encode_fields(fields):
    flat = []
    for k, v in fields.items():
        flat += [k.encode(), bytes(v)]
    return encode_parts(flat)


def decode_fields(data):
    parts = decode_parts(data)
    if len(parts) % 2:
        raise MalformedEncoding("odd field list")
    return {parts[i].decode(): parts[i + 1] for i in range(0, len(parts), 2)}


def seal_payload(key, msg_header, fields, rng):
    ct = sym_encrypt(key, encode_fields(fields), rng, aad=msg_header.aad())
    return bytes([_SEALED]) + ct.to_bytes()


def open_payload(key, msg):
    """Return the field dict of ``msg``; raises on a bad seal."""
    if not msg.payload:
        raise MalformedEncoding("empty payload")
    flag, body = msg.payload[0], msg.payload[1:]
    if flag == _PLAIN:
        return decode_fields(body), False
    if flag != _SEALED or key is None:
        raise AuthenticationFailed("sealed payload without a session key")
    return decode_fields(sym_decrypt(key, body, aad=msg.aad())), True


# -- principals ---------------------------------------------------------------

class Principal:
    role = "principal"

    def __init__(self, pid):
        if not pid or len(pid.encode()) > 255:
            raise ValueError("principal id must be 1..255 bytes")
        self.id = pid
        self.network = None

    def receive(self, wire, entry):
        pass

    def __repr__(self):
        return f"{type(self).__name__}({self.id!r})"


@dataclass
class Attachment:
    """A device-SA association created by the attachment handshake.

    On the SA side ``device_id`` is ``None`` for anonymous attachments: the
    SA only ever learns the per-attachment ``handle``.
    """

    device_id: str | None
    sa_id: str
    handle: str
    key: SessionKey = field(repr=False)
    established_at: float = 0.0
    anonymous: bool = False


class AAAStub(Principal):
    """Holds every device's pre-shared secret and vouches for devices to SAs."""

    role = "aaa-stub"

    def __init__(self, pid="AAA", rng_seed=0):
        super().__init__(pid)
        self._secrets = {}
        self._pending = {}
        self._rng = as_rng(rng_seed).fork("aaa")

    def enroll(self, device_id):
        secret = self._rng.bytes(32)
        self._secrets[device_id] = secret
        return secret

    def _identify(self, claim, nonce_d, anonymous):
        if not anonymous:
            device_id = claim.decode()
            if device_id not in self._secrets:
                raise AuthenticationFailed(f"unknown device {device_id!r}")
            return device_id
        for device_id, secret in sorted(self._secrets.items()):
            try:
                if sym_decrypt(_claim_key(secret), claim, aad=nonce_d) == device_id.encode():
                    return device_id
            except (AuthenticationFailed, MalformedEncoding):
                continue
        raise AuthenticationFailed("anonymous claim matches no enrolled device")

    def challenge(self, sa_id, claim, nonce_d, anonymous):
        device_id = self._identify(claim, nonce_d, anonymous)
        secret = self._secrets[device_id]
        nonce_a = self._rng.bytes(16)
        ticket = self._rng.bytes(16)
        self._pending[ticket] = (device_id, sa_id, nonce_d, nonce_a)
        return ticket, nonce_a, _mac(secret, b"aaa-proof", sa_id, nonce_d, nonce_a)

    def confirm(self, ticket, response):
        if ticket not in self._pending:
            raise AuthenticationFailed("unknown attachment ticket")
        device_id, sa_id, nonce_d, nonce_a = self._pending.pop(ticket)
        secret = self._secrets[device_id]
        if not hmac.compare_digest(response, _mac(secret, b"device-proof", sa_id, nonce_d, nonce_a)):
            raise AuthenticationFailed("device response does not match its AAA secret")
        return _attachment_key(secret, sa_id, nonce_d, nonce_a)


def _mac(secret, label, sa_id, nonce_d, nonce_a):
    return hmac.new(secret, encode_parts([label, sa_id.encode(), nonce_d, nonce_a]), hashlib.sha256).digest()


def _claim_key(secret):
    return derive_key(b"resiot/attach/claim/v1", secret)


def _attachment_key(secret, sa_id, nonce_d, nonce_a):
    return derive_key(b"resiot/attach/key/v1", secret, sa_id.encode(), nonce_d, nonce_a)


class KeyAuthority(Principal):
    """Trusted issuer of group-member and ABE keys (to SAs only)."""

    role = "key-authority"

    def __init__(self, pid, gpk=None, issuer=None, abe_pk=None, abe_msk=None):
        super().__init__(pid)
        self.gpk, self.issuer = gpk, issuer
        self.abe_pk, self.abe_msk = abe_pk, abe_msk


class SecurityAgent(Principal):
    """Performs the pairing-based half of each protocol for attached devices."""

    role = "security-agent"

    def __init__(self, pid, *, gpk=None, member_key=None, abe_pk=None, abe_key=None, rng_seed=0):
        super().__init__(pid)
        self.gpk = gpk
        self.member_key = member_key
        self.abe_pk = abe_pk
        self.abe_key = abe_key
        self.attachments = {}
        self._routes = {}
        self._rng = as_rng(rng_seed).fork(f"sa/{pid}")
        self.refusals = 0

    def receive(self, wire, entry):
        net = self.network
        try:
            msg = ProtocolMessage.decode(wire)
        except MalformedEncoding:
            return
        att = self.attachments.get(msg.sender)
        route = self._routes.get(msg.sender, entry.sender)
        if att is None:
            self._refuse(msg, route, entry, None, "sender is not attached")
            return
        try:
            fields, sealed = open_payload(att.key, msg)
        except (AuthenticationFailed, MalformedEncoding):
            self._refuse(msg, route, entry, None, "request failed attachment authentication")
            return
        if not sealed:
            self._refuse(msg, route, entry, att, "request not sealed under the attachment key")
            return
        handler = {"sign_req": self._sign, "verify_req": self._verify,
                   "enc_req": self._encrypt, "dec_req": self._decrypt}.get(msg.kind)
        if handler is None:
            self._refuse(msg, route, entry, att, f"unexpected request {msg.kind}")
            return
        reply_kind, reply, cost = handler(fields, entry.run_id)
        net.clock.call_later(cost, self._reply, entry, msg, route, att, reply_kind, reply)

    def _refuse(self, msg, route, entry, att, reason):
        self.refusals += 1
        reply_kind = {"sign_req": "sign_resp", "verify_req": "verify_resp",
                      "enc_req": "enc_resp", "dec_req": "dec_resp"}.get(msg.kind)
        if reply_kind is None:
            return
        self._reply(entry, msg, route, att, reply_kind, {"status": b"refused", "reason": reason.encode()})

    def _reply(self, entry, msg, route, att, kind, fields):
        net = self.network
        session = net.sessions.get(msg.session_id)
        protocol = session.protocol if session else entry.run_id
        step = STEPS.get(protocol, {}).get(kind, entry.step + 1)
        header = ProtocolMessage(kind, msg.session_id, self.id, msg.sender, b"")

        def finalize(f):
            if att is None:
                payload = bytes([_PLAIN]) + encode_fields(f)
            else:
                payload = seal_payload(att.key, header, f, self._rng)
            return ProtocolMessage(kind, msg.session_id, self.id, msg.sender, payload).encode()

        if session is not None:
            session.advance(step)
        net.fabric.transmit(run_id=entry.run_id, session_id=msg.session_id, step=step, kind=kind,
                            sender=self.id, receiver=route, wire_sender=self.id, wire_receiver=msg.sender,
                            fields=fields, finalize=finalize, sealed=att is not None)

    # -- security functions -----------------------------------------------------

    def _sign(self, fields, run_id):
        if self.member_key is None or self.gpk is None:
            return "sign_resp", {"status": b"refused", "reason": b"no group credential"}, 0.0
        sigma = gs_sign(self.gpk, self.member_key, fields.get("e_j", b""), self._rng.fork(run_id))
        return "sign_resp", {"status": b"ok", "sigma": sigma.to_bytes(self.gpk.suite)}, \
            self.network.sa_compute("gs-sign")

    def _verify(self, fields, run_id):
        if self.gpk is None:
            return "verify_resp", {"status": b"refused", "reason": b"no group public key"}, 0.0
        verdict = gs_verify(self.gpk, fields.get("e_j", b""), fields.get("sigma", b""))
        reply = {"status": b"ok", "result": b"true" if verdict else b"false"}
        if not verdict:
            reply["reason"] = verdict.reason.encode()
        return "verify_resp", reply, self.network.sa_compute("gs-verify")

    def _encrypt(self, fields, run_id):
        if self.abe_pk is None:
            return "enc_resp", {"status": b"refused", "reason": b"no ABE public key"}, 0.0
        attrs = [a for a in fields.get("descriptor", b"").decode().split(",") if a]
        try:
            ct = abe_encrypt(self.abe_pk, attrs, fields.get("e_i", b""), self._rng.fork(run_id))
        except (UnknownAttribute, ValueError) as exc:
            return "enc_resp", {"status": b"error", "reason": str(exc).encode()}, 0.0
        return "enc_resp", {"status": b"ok", "abe_ct": ct.to_bytes(self.abe_pk.suite)}, \
            self.network.sa_compute("abe-encrypt", len(attrs))

    def _decrypt(self, fields, run_id):
        if self.abe_key is None:
            return "dec_resp", {"status": b"refused", "reason": b"no ABE decryption key"}, 0.0
        suite = self.abe_key.suite
        try:
            ct = AbeCiphertext.from_bytes(fields.get("abe_ct", b""), suite)
        except MalformedCiphertext as exc:
            return "dec_resp", {"status": b"error", "reason": str(exc).encode()}, 0.0
        cost = self.network.sa_compute("abe-decrypt", len(ct.attrs))
        try:
            e_i = abe_decrypt(self.abe_key, ct)
        except PolicyUnsatisfied:
            return "dec_resp", {"status": b"policy-unsatisfied"}, cost
        except (AuthenticationFailed, MalformedCiphertext) as exc:
            return "dec_resp", {"status": b"error", "reason": str(exc).encode()}, cost
        return "dec_resp", {"status": b"ok", "e_i": e_i}, cost


class Device(Principal):
    """Constrained device: knows its AAA secret and its SA session keys only."""

    role = "device"

    def __init__(self, pid, aaa_secret, rng_seed=0):
        super().__init__(pid)
        self.aaa_secret = aaa_secret
        self.attachments = {}
        self.parties = {}
        self._rng = as_rng(rng_seed).fork(f"device/{pid}")

    def receive(self, wire, entry):
        try:
            msg = ProtocolMessage.decode(wire)
        except MalformedEncoding:
            return
        party = self.parties.get(msg.session_id)
        if party is None:
            spawn = _RESPONDERS.get(msg.kind)
            session = self.network.sessions.get(msg.session_id)
            if spawn is None or session is None or session.outcome is not None:
                return
            party = _Party(self.network, session, self, spawn)
            self.parties[msg.session_id] = party
            party.inbox.append((msg, entry))
            party.start()
            return
        party.deliver(msg, entry)


def attach(device, sa, aaa, *, anonymous=False, rng_seed=None, at=0.0):
    """Run the three-message pre-shared-key handshake through the AAA stub.

    1. device -> SA: claim (identity, or identity sealed for the AAA), nonce_d
    2. SA -> device: nonce_a and the AAA's proof of knowing the device secret
    3. device -> SA: the device's proof; the AAA then releases the session key

    Fails closed with ``AuthenticationFailed`` if either proof is wrong.
    """
    rng = as_rng(rng_seed if rng_seed is not None else device._rng.fork(f"attach/{sa.id}/{len(device.attachments)}"))
    nonce_d = rng.bytes(16)
    if anonymous:
        handle = "anon-" + rng.bytes(8).hex()
        claim = sym_encrypt(_claim_key(device.aaa_secret), device.id.encode(), rng, aad=nonce_d).to_bytes()
    else:
        handle = device.id
        claim = device.id.encode()
    ticket, nonce_a, aaa_proof = aaa.challenge(sa.id, claim, nonce_d, anonymous)
    if not hmac.compare_digest(aaa_proof, _mac(device.aaa_secret, b"aaa-proof", sa.id, nonce_d, nonce_a)):
        raise AuthenticationFailed("network side failed to prove knowledge of the device secret")
    response = _mac(device.aaa_secret, b"device-proof", sa.id, nonce_d, nonce_a)
    sa_key = aaa.confirm(ticket, response)
    dev_key = _attachment_key(device.aaa_secret, sa.id, nonce_d, nonce_a)
    sa.attachments[handle] = Attachment(None if anonymous else device.id, sa.id, handle, sa_key, at, anonymous)
    sa._routes[handle] = device.id
    mine = Attachment(device.id, sa.id, handle, dev_key, at, anonymous)
    device.attachments[sa.id] = mine
    return mine


def detach(device, sa):
    att = device.attachments.pop(sa.id, None)
    if att is not None:
        sa.attachments.pop(att.handle, None)
        sa._routes.pop(att.handle, None)


# -- sessions and the party driver ------------------------------------------------

@dataclass
class Session:
    protocol: str
    session_id: bytes
    run_id: str
    started_at: float
    step: int = 0
    outcome: str | None = None
    failed_step: int | None = None
    error: str | None = None
    reason: str = ""
    finished_at: float | None = None
    keys: dict = field(default_factory=dict, repr=False)
    values: dict = field(default_factory=dict, repr=False)
    parties: list = field(default_factory=list, repr=False)

    def advance(self, step):
        if step < self.step:
            raise StepOrderError(step, f"step went backwards from {self.step}")
        self.step = step

    def finish(self, outcome, now, *, step=None, error=None, reason=""):
        if self.outcome is not None:
            raise ResiotError(f"session outcome already set to {self.outcome}")
        self.outcome = outcome
        self.finished_at = now
        self.failed_step = step
        self.error = error
        self.reason = reason
        for p in self.parties:
            p.stop()

    @property
    def elapsed_ms(self):
        return None if self.finished_at is None else self.finished_at - self.started_at


class _Abort(ProtocolAbort):
    def __init__(self, step, error, reason, outcome=None):
        super().__init__(step, reason)
        self.error = error
        self.outcome = outcome


class _Party:
    """Drives one principal's generator within one session."""

    def __init__(self, network, session, principal, body, **params):
        self.net = network
        self.session = session
        self.me = principal
        self.params = params
        self.inbox = deque()
        self.waiting = None
        self.timer = None
        self.stopped = False
        self.rng = principal._rng.fork(f"{session.run_id}/{session.session_id.hex()}")
        self.gen = body(self)
        session.parties.append(self)

    # used by the generator bodies
    def send(self, receiver, kind, fields, sa=None):
        step = STEPS[self.session.protocol][kind]
        self.session.advance(step)
        sid = self.session.session_id
        if sa is None:
            wire_sender, wire_receiver, key, true_receiver = self.me.id, receiver.id, None, receiver.id
        else:
            att = self.me.attachments.get(sa.id)
            wire_sender = att.handle if att else self.me.id
            wire_receiver, key, true_receiver = sa.id, att.key if att else None, sa.id

        def finalize(f):
            header = ProtocolMessage(kind, sid, wire_sender, wire_receiver, b"")
            if key is None:
                payload = bytes([_PLAIN]) + encode_fields(f)
            else:
                payload = seal_payload(key, header, f, self.rng)
            return ProtocolMessage(kind, sid, wire_sender, wire_receiver, payload).encode()

        self.net.fabric.transmit(run_id=self.session.run_id, session_id=sid, step=step, kind=kind,
                                 sender=self.me.id, receiver=true_receiver, wire_sender=wire_sender,
                                 wire_receiver=wire_receiver, fields=fields, finalize=finalize,
                                 sealed=key is not None)

    def open_from_sa(self, sa, msg, step):
        att = self.me.attachments.get(sa.id)
        try:
            fields, _ = open_payload(att.key if att else None, msg)
        except (AuthenticationFailed, MalformedEncoding) as exc:
            raise _Abort(step, "decryption-failure", f"cannot open {msg.kind}: {exc}") from None
        status = fields.get("status", b"")
        if status == b"refused":
            raise _Abort(step, "refused", "SA refused service: " + fields.get("reason", b"").decode())
        return fields

    def fields_of(self, msg, step):
        try:
            fields, _ = open_payload(None, msg)
        except (AuthenticationFailed, MalformedEncoding) as exc:
            raise _Abort(step, "malformed", f"cannot parse {msg.kind}: {exc}") from None
        return fields

    # driver
    def start(self):
        self._resume(None)

    def stop(self):
        self.stopped = True
        if self.timer is not None:
            self.timer.cancel()
            self.timer = None

    def deliver(self, msg, entry):
        if self.stopped:
            return
        self.inbox.append((msg, entry))
        if self.waiting is not None:
            self._take()

    def _take(self):
        msg, entry = self.inbox.popleft()
        kind = self.waiting
        self.waiting = None
        if self.timer is not None:
            self.timer.cancel()
            self.timer = None
        if msg.kind != kind:
            self._fail(_Abort(STEPS[self.session.protocol][kind], "step-order",
                              f"expected {kind}, received {msg.kind}"))
            return
        self._resume(msg)

    def _timeout(self):
        # label with the first step whose message never arrived, which is
        # not necessarily the step this party was waiting on
        self.timer = None
        kind = self.waiting
        delivered = [e.step for e in self.net.fabric.transcript.entries
                     if e.run_id == self.session.run_id and e.delivered_at is not None]
        step = max(delivered, default=0) + 1
        self._fail(_Abort(step, "timeout", f"timed out waiting for {kind}"))

    def _fail(self, abort):
        if self.session.outcome is None:
            outcome = abort.outcome or FAILURE_OUTCOME[self.session.protocol]
            self.session.finish(outcome, self.net.clock.now, step=abort.step,
                                error=getattr(abort, "error", "step-order"), reason=abort.reason)
        self.stop()

    def _resume(self, value):
        if self.stopped or self.session.outcome is not None:
            return
        try:
            cmd = self.gen.send(value)
        except StopIteration:
            self.stop()
            return
        except ProtocolAbort as abort:
            self._fail(abort)
            return
        op, arg = cmd
        if op == "compute":
            self.net.clock.call_later(arg, self._resume, None)
        elif op == "expect":
            self.waiting = arg
            if self.inbox:
                self._take()
            else:
                self.timer = self.net.clock.call_later(self.net.step_timeout_ms, self._timeout)
        elif op == "finish":
            self.session.finish(arg, self.net.clock.now)
            self.stop()
        else:
            raise ResiotError(f"unknown party command {op!r}")


def _agree(p, kp, peer_public, step):
    try:
        return dh_agree(kp, peer_public, p.net.suite)
    except (InvalidElement, MalformedEncoding) as exc:
        raise _Abort(step, "invalid-dh", f"peer DH value rejected: {exc}") from None


def _open(key, ct, step, what, aad=b""):
    try:
        return sym_decrypt(key, ct, aad=aad)
    except (AuthenticationFailed, MalformedEncoding) as exc:
        raise _Abort(step, "decryption-failure", f"{what} failed authenticated decryption ({exc})") from None


# -- rsf-gs -----------------------------------------------------------------------

_E_J_AAD = b"resiot/rsf-gs/E_j/v1"


def bind_nonce(key, nonce):
    """E_j = E_K(Nonce_i) with the AEAD nonce fixed by (K, Nonce_i).

    Both devices must produce identical bytes: the responder's SA signs
    E_j and the initiator later rebuilds it for verification.
    """
    iv = hashlib.sha256(b"resiot/rsf-gs/iv/v1" + key.key_bytes + nonce).digest()[:12]
    return sym_encrypt(key, nonce, nonce=iv, aad=_E_J_AAD).to_bytes()


def _gs_initiator(p):
    s, net = p.session, p.net
    responder, sa = p.params["responder"], p.params["sa"]
    kp = dh_generate(p.rng.fork("dh"), net.suite)
    nonce = p.params.get("nonce") or p.rng.bytes(16)
    s.values["nonce"] = nonce
    p.send(responder, "auth_req", {"dh_x": kp.public_bytes, "nonce": nonce})
    msg = yield ("expect", "auth_resp")
    fields = p.fields_of(msg, 5)
    yield ("compute", net.device_compute())
    key = _agree(p, kp, fields.get("dh_y", b""), 5)
    s.keys[p.me.id] = key
    sigma = _open(key, fields.get("e_prime", b""), 5, "E'_j")
    p.send(sa, "verify_req", {"e_j": bind_nonce(key, nonce), "sigma": sigma}, sa=sa)
    msg = yield ("expect", "verify_resp")
    result = p.open_from_sa(sa, msg, 6)
    if result.get("result") != b"true":
        raise _Abort(6, "signature-rejected",
                     "SA verification rejected the signature: " + result.get("reason", b"").decode())
    yield ("finish", "accept")


def _gs_responder(p):
    s, net = p.session, p.net
    msg, _ = p.inbox.popleft()
    if msg.kind != "auth_req":
        raise _Abort(1, "step-order", f"session opened with {msg.kind}")
    initiator = net.principals[msg.sender]
    sa = p.me.home_sa
    fields = p.fields_of(msg, 2)
    yield ("compute", net.device_compute())
    kp = dh_generate(p.rng.fork("dh"), net.suite)
    key = _agree(p, kp, fields.get("dh_x", b""), 2)
    s.keys[p.me.id] = key
    p.send(sa, "sign_req", {"e_j": bind_nonce(key, fields.get("nonce", b""))}, sa=sa)
    msg = yield ("expect", "sign_resp")
    sigma = p.open_from_sa(sa, msg, 3)["sigma"]
    e_prime = sym_encrypt(key, sigma, p.rng.fork("e_prime")).to_bytes()
    p.send(initiator, "auth_resp", {"dh_y": kp.public_bytes, "e_prime": e_prime})


# -- rsf-abe ----------------------------------------------------------------------

def _abe_sender(p):
    s, net = p.session, p.net
    receiver, sa = p.params["receiver"], p.params["sa"]
    kp = dh_generate(p.rng.fork("dh"), net.suite)
    p.send(receiver, "abac_init", {"dh_x": kp.public_bytes})
    msg = yield ("expect", "abac_accept")
    fields = p.fields_of(msg, 2)
    yield ("compute", net.device_compute())
    key = _agree(p, kp, fields.get("dh_y", b""), 2)
    s.keys[p.me.id] = key
    data = p.params["data"]
    ack = p.params.get("ack") or p.rng.bytes(16)
    s.values.update(data=data, ack=ack)
    e_i = sym_encrypt(key, encode_parts([data, ack]), p.rng.fork("e_i")).to_bytes()
    descriptor = ",".join(p.params["attributes"]).encode()
    p.send(sa, "enc_req", {"e_i": e_i, "descriptor": descriptor}, sa=sa)
    msg = yield ("expect", "enc_resp")
    reply = p.open_from_sa(sa, msg, 3)
    if reply.get("status") != b"ok":
        raise _Abort(3, "encryption-failed", "SA could not encrypt: " + reply.get("reason", b"").decode())
    e_pp = sym_encrypt(key, reply["abe_ct"], p.rng.fork("e_pp")).to_bytes()
    p.send(receiver, "data_transfer", {"e_pp": e_pp})
    msg = yield ("expect", "ack")
    got = p.fields_of(msg, 7).get("ack", b"")
    if not hmac.compare_digest(got, ack):
        raise _Abort(7, "ack-mismatch", "acknowledgement does not match")
    yield ("finish", "delivered")


def _abe_receiver(p):
    s, net = p.session, p.net
    msg, _ = p.inbox.popleft()
    if msg.kind != "abac_init":
        raise _Abort(1, "step-order", f"session opened with {msg.kind}")
    sender = net.principals[msg.sender]
    sa = p.me.home_sa
    kp = dh_generate(p.rng.fork("dh"), net.suite)
    key = _agree(p, kp, p.fields_of(msg, 1).get("dh_x", b""), 1)
    s.keys[p.me.id] = key
    p.send(sender, "abac_accept", {"dh_y": kp.public_bytes})
    msg = yield ("expect", "data_transfer")
    yield ("compute", net.device_compute())
    e_prime = _open(key, p.fields_of(msg, 5).get("e_pp", b""), 5, "E''_i")
    p.send(sa, "dec_req", {"abe_ct": e_prime}, sa=sa)
    msg = yield ("expect", "dec_resp")
    reply = p.open_from_sa(sa, msg, 6)
    status = reply.get("status")
    if status == b"policy-unsatisfied":
        raise _Abort(6, "policy-unsatisfied", "SA key policy does not admit the ciphertext", outcome="denied")
    if status != b"ok":
        raise _Abort(6, "decryption-failure", "SA could not decrypt: " + reply.get("reason", b"").decode())
    plain = _open(key, reply["e_i"], 7, "E_i")
    try:
        data, ack = decode_parts(plain, 2)
    except MalformedEncoding:
        raise _Abort(7, "malformed", "E_i plaintext is not data||ack") from None
    s.values["received"] = data
    p.send(sender, "ack", {"ack": ack})


_RESPONDERS = {"auth_req": _gs_responder, "abac_init": _abe_receiver}


# -- network and run entry points ---------------------------------------------------

class Network:
    """Clock, fabric, principals and cost source for a set of sessions."""

    def __init__(self, costs="paper", fabric_config=None, *, step_timeout_ms=5000.0, suite=None):
        self.costs = load_cost_parameters(costs)
        self.clock = SimClock()
        self.fabric = Fabric(self.clock, fabric_config or FabricConfig.from_latencies(self.costs.latencies))
        self.suite = suite or default_suite()
        self.step_timeout_ms = float(step_timeout_ms)
        self.principals = {}
        self.sessions = {}

    def add(self, principal, home_sa=None):
        if principal.id in self.principals:
            raise ValueError(f"duplicate principal {principal.id!r}")
        principal.network = self
        if isinstance(principal, Device):
            principal.home_sa = home_sa
        self.principals[principal.id] = principal
        self.fabric.register(principal.id, principal.role, principal.receive)
        return principal

    def device_compute(self):
        return self.costs.device.t_rsf_device

    def sa_compute(self, function, n_attributes=50):
        return self.costs.sa_time(function, n_attributes)

    def _open_session(self, protocol, run_id, rng_seed, faults=()):
        if faults:
            self.fabric.add_faults(run_id, faults)
        sid = session_id_for(run_id, rng_seed)
        if sid in self.sessions:
            raise ResiotError(f"session id collision for run {run_id!r}")
        s = Session(protocol, sid, run_id, self.clock.now)
        self.sessions[sid] = s
        return s

    def _drive(self, session):
        self.clock.run()
        if session.outcome is None:
            session.finish(FAILURE_OUTCOME[session.protocol], self.clock.now, step=session.step,
                           error="stalled", reason="no party could make progress")
        self.fabric.faults.pop(session.run_id, None)
        return RunResult.from_session(session, self.fabric.transcript.for_run(session.run_id))


def session_id_for(run_id, rng_seed):
    """The 16-byte session id a run with this id and seed will use."""
    return as_rng(rng_seed).fork(f"session/{run_id}").bytes(16)


@dataclass
class RunResult:
    run_id: str
    protocol: str
    outcome: str
    failed_step: int | None
    error: str | None
    reason: str
    started_at: float
    elapsed_ms: float
    session: Session = field(repr=False)
    transcript: object = field(repr=False)

    @classmethod
    def from_session(cls, s, transcript):
        return cls(s.run_id, s.protocol, s.outcome, s.failed_step, s.error, s.reason, s.started_at,
                   s.elapsed_ms, s, transcript)

    @property
    def keys_agree(self):
        keys = list(self.session.keys.values())
        return len(keys) == 2 and keys[0] == keys[1]


def _check_device(net, d, label):
    if not isinstance(d, Device) or net.principals.get(d.id) is not d:
        raise ValueError(f"{label} must be a device registered with the network")


def run_rsf_gs(network, initiator, responder, sa_i, sa_j, *, rng_seed=0, run_id="rsf-gs",
               nonce=None, faults=()):
    """Run one anonymous-authentication session to completion.

    ``sa_i`` verifies for the initiator; ``sa_j`` signs for the responder.
    Returns a ``RunResult`` whose outcome is ``accept`` or ``reject``.
    """
    _check_device(network, initiator, "initiator")
    _check_device(network, responder, "responder")
    responder.home_sa = sa_j
    session = network._open_session("rsf-gs", run_id, rng_seed, faults)
    party = _Party(network, session, initiator, _gs_initiator, responder=responder, sa=sa_i, nonce=nonce)
    initiator.parties[session.session_id] = party
    party.start()
    return network._drive(session)


def run_rsf_abe(network, sender, receiver, sa_i, sa_j, data, attributes, *, rng_seed=0,
                run_id="rsf-abe", ack=None, faults=()):
    """Run one attribute-based data transfer.

    Outcome is ``delivered``, ``denied`` (receiver SA's policy rejects the
    attributes) or ``protocol-failure``.
    """
    _check_device(network, sender, "sender")
    _check_device(network, receiver, "receiver")
    attributes = list(attributes)
    if not attributes:
        raise ValueError("attribute descriptor must be non-empty")
    receiver.home_sa = sa_j
    session = network._open_session("rsf-abe", run_id, rng_seed, faults)
    party = _Party(network, session, sender, _abe_sender, receiver=receiver, sa=sa_i,
                   data=bytes(data), attributes=attributes, ack=ack)
    sender.parties[session.session_id] = party
    party.start()
    return network._drive(session)


def gs_signature_of(result):
    """The σ carried in a finished rsf-gs transcript, decoded."""
    for e in result.transcript:
        if e.kind == "sign_resp" and "sigma" in e.fields:
            return GroupSignature.from_bytes(e.fields["sigma"])
    return None


__all__ = [
    "AAAStub", "Attachment", "Device", "KeyAuthority", "Network", "Principal", "ProtocolMessage",
    "RunResult", "SecurityAgent", "Session", "attach", "bind_nonce", "decode_fields", "detach",
    "encode_fields", "run_rsf_abe", "run_rsf_gs", "session_id_for", "KIND_CODES", "PUBLIC_FIELDS", "STEPS", "STEP_COUNT",
]
