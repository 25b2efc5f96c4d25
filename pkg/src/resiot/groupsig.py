"""BBS short group signatures (Boneh-Boyen-Shacham) over a Type-3 pairing.

Public key elements h, u, v live in G1 together with the signature
commitments; g2 and w = g2^gamma live in G2. The issuer keeps gamma (to
enroll members) and the linear-encryption exponents xi1, xi2 with
u^xi1 = v^xi2 = h (to open signatures).

Signing performs 9 G1 exponentiations, 3 G1 multiplications, 3 pairings
and 3 GT exponentiations (plus 2 GT multiplications to combine R3).
Verification performs 8 / 4 in G1, 4 pairings and 5 GT exponentiations,
with e(g1, g2) taken from the public key.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field

from .encoding import decode_int, decode_parts, encode_int, encode_parts
from .errors import (DuplicateMember, MalformedEncoding, ResiotError,
                     UnverifiableSignature)
from .suite import ORDER, BilinearSuite, as_rng, default_suite, to_scalar


@dataclass(frozen=True)
class GroupPublicKey:
    suite: BilinearSuite
    g1: object
    g2: object
    h: object
    u: object
    v: object
    w: object
    egg: object = field(repr=False, compare=False)

    @classmethod
    def build(cls, suite, g1, g2, h, u, v, w):
        return cls(suite, g1, g2, h, u, v, w, suite.raw_pair(g1, g2))

    def to_bytes(self):
        s = self.suite
        return encode_parts([b"gpk/v1", s.encode_g1(self.g1), s.encode_g2(self.g2), s.encode_g1(self.h),
                             s.encode_g1(self.u), s.encode_g1(self.v), s.encode_g2(self.w)])

    @classmethod
    def from_bytes(cls, data, suite=None):
        suite = suite or default_suite()
        parts = decode_parts(data, 7)
        if parts[0] != b"gpk/v1":
            raise MalformedEncoding("not a group public key")
        return cls.build(suite, suite.decode_g1(parts[1]), suite.decode_g2(parts[2]),
                         suite.decode_g1(parts[3]), suite.decode_g1(parts[4]),
                         suite.decode_g1(parts[5]), suite.decode_g2(parts[6]))

    def fingerprint(self):
        return hashlib.sha256(self.to_bytes()).hexdigest()[:16]


@dataclass(frozen=True)
class MemberKey:
    index: int
    a: object
    x: int

    def to_bytes(self, suite=None):
        suite = suite or default_suite()
        return encode_parts([b"gsk/v1", encode_int(self.index, 8), suite.encode_g1(self.a), encode_int(self.x)])

    @classmethod
    def from_bytes(cls, data, suite=None):
        suite = suite or default_suite()
        parts = decode_parts(data, 4)
        if parts[0] != b"gsk/v1":
            raise MalformedEncoding("not a group member key")
        return cls(decode_int(parts[1], 8), suite.decode_g1(parts[2]), decode_int(parts[3]))


@dataclass
class GroupIssuerKey:
    """Issuer (GKMS) secrets plus the registry of enrolled members.

    Enrollment mutates the registry under a lock; everything else is
    read-only.
    """

    gpk: GroupPublicKey
    gamma: int
    xi1: int
    xi2: int
    registry: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def to_bytes(self):
        s = self.gpk.suite
        entries = [encode_parts([encode_int(i, 8), s.encode_g1(a)]) for i, a in sorted(self.registry.items())]
        return encode_parts([b"gik/v1", self.gpk.to_bytes(), encode_int(self.gamma), encode_int(self.xi1),
                             encode_int(self.xi2), encode_parts(entries)])

    @classmethod
    def from_bytes(cls, data, suite=None):
        suite = suite or default_suite()
        parts = decode_parts(data, 6)
        if parts[0] != b"gik/v1":
            raise MalformedEncoding("not a group issuer key")
        registry = {}
        for entry in decode_parts(parts[5]):
            i, a = decode_parts(entry, 2)
            registry[decode_int(i, 8)] = suite.decode_g1(a)
        return cls(GroupPublicKey.from_bytes(parts[1], suite), decode_int(parts[2]),
                   decode_int(parts[3]), decode_int(parts[4]), registry)


@dataclass(frozen=True)
class GroupSignature:
    t1: object
    t2: object
    t3: object
    c: int
    s_alpha: int
    s_beta: int
    s_x: int
    s_delta1: int
    s_delta2: int

    def to_bytes(self, suite=None):
        suite = suite or default_suite()
        return encode_parts([b"gsig/v1", suite.encode_g1(self.t1), suite.encode_g1(self.t2), suite.encode_g1(self.t3)]
                            + [encode_int(v) for v in (self.c, self.s_alpha, self.s_beta, self.s_x,
                                                       self.s_delta1, self.s_delta2)])

    @classmethod
    def from_bytes(cls, data, suite=None):
        suite = suite or default_suite()
        parts = decode_parts(data, 10)
        if parts[0] != b"gsig/v1":
            raise MalformedEncoding("not a group signature")
        ints = [decode_int(p) for p in parts[4:]]
        if any(v >= ORDER for v in ints):
            raise MalformedEncoding("scalar out of range")
        return cls(suite.decode_g1(parts[1]), suite.decode_g1(parts[2]), suite.decode_g1(parts[3]), *ints)


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str = ""

    def __bool__(self):
        return self.ok


def gs_setup(suite=None, rng_seed=0):
    suite = suite or default_suite()
    rng = as_rng(rng_seed).fork("gs-setup")
    gamma, xi1, xi2 = rng.scalar(), rng.scalar(), rng.scalar()
    h = suite.g1_base(rng.scalar())
    u = h * _inv_scalar(xi1)
    v = h * _inv_scalar(xi2)
    w = suite.g2_base(gamma)
    gpk = GroupPublicKey.build(suite, suite.g1, suite.g2, h, u, v, w)
    return gpk, GroupIssuerKey(gpk, gamma, xi1, xi2)


def _inv_scalar(k):
    return to_scalar(pow(k, -1, ORDER))


def gs_enroll(issuer, index):
    """Issue the membership certificate A = g1^(1/(gamma+x)) for ``index``.

    The exponent x is derived from the issuer secret and the index, so
    re-running an enrollment sequence reproduces the same keys.
    """
    with issuer._lock:
        if index in issuer.registry:
            raise DuplicateMember(f"member {index} already enrolled")
        suite = issuer.gpk.suite
        ctr = 0
        while True:
            x = suite.hash_to_scalar(b"gs-enroll", encode_int(issuer.gamma), encode_int(index, 8), encode_int(ctr, 4))
            if x and (issuer.gamma + x) % ORDER:
                break
            ctr += 1
        a = issuer.gpk.g1 * _inv_scalar(issuer.gamma + x)
        issuer.registry[index] = a
        return MemberKey(index, a, x)


def membership_ok(gpk, member):
    """Check the BBS certificate equation e(A, w * g2^x) = e(g1, g2)."""
    lhs = gpk.suite.raw_pair(member.a, gpk.w + gpk.g2 * to_scalar(member.x))
    return lhs == gpk.egg


def _challenge(gpk, message, t1, t2, t3, r1, r2, r3, r4, r5):
    s = gpk.suite
    digest = hashlib.sha256(bytes(message)).digest()
    return s.hash_to_scalar(b"bbs-challenge", gpk.to_bytes(), digest,
                            s.encode_g1(t1), s.encode_g1(t2), s.encode_g1(t3),
                            s.encode_g1(r1), s.encode_g1(r2), s.encode_gt(r3),
                            s.encode_g1(r4), s.encode_g1(r5))


def gs_sign(gpk, member, message, rng_seed):
    s = gpk.suite
    rng = as_rng(rng_seed)
    alpha, beta = rng.scalar(), rng.scalar()
    ra, rb, rx, rd1, rd2 = (rng.scalar() for _ in range(5))

    t1 = s.exp_g1(gpk.u, alpha)
    t2 = s.exp_g1(gpk.v, beta)
    t3 = s.mul_g1(member.a, s.exp_g1(gpk.h, alpha + beta))
    d1 = member.x * alpha % ORDER
    d2 = member.x * beta % ORDER

    r1 = s.exp_g1(gpk.u, ra)
    r2 = s.exp_g1(gpk.v, rb)
    r3 = s.mul_gt(s.mul_gt(s.exp_gt(s.pair(t3, gpk.g2), rx),
                           s.exp_gt(s.pair(gpk.h, gpk.w), -ra - rb)),
                  s.exp_gt(s.pair(gpk.h, gpk.g2), -rd1 - rd2))
    r4 = s.mul_g1(s.exp_g1(t1, rx), s.exp_g1(gpk.u, -rd1))
    r5 = s.mul_g1(s.exp_g1(t2, rx), s.exp_g1(gpk.v, -rd2))

    c = _challenge(gpk, message, t1, t2, t3, r1, r2, r3, r4, r5)
    return GroupSignature(
        t1, t2, t3, c,
        (ra + c * alpha) % ORDER,
        (rb + c * beta) % ORDER,
        (rx + c * member.x) % ORDER,
        (rd1 + c * d1) % ORDER,
        (rd2 + c * d2) % ORDER,
    )


def gs_verify(gpk, message, sig):
    """Return a truthy ``Verdict`` for a valid signature on ``message``.

    ``sig`` may be a ``GroupSignature`` or its encoding; undecodable input
    is rejected with reason ``"malformed"`` rather than raising.
    """
    s = gpk.suite
    if not isinstance(sig, GroupSignature):
        try:
            sig = GroupSignature.from_bytes(sig, s)
        except MalformedEncoding as exc:
            return Verdict(False, f"malformed: {exc}")
    c = sig.c
    r1 = s.mul_g1(s.exp_g1(gpk.u, sig.s_alpha), s.exp_g1(sig.t1, -c))
    r2 = s.mul_g1(s.exp_g1(gpk.v, sig.s_beta), s.exp_g1(sig.t2, -c))
    r3 = s.exp_gt(s.pair(sig.t3, gpk.g2), sig.s_x)
    r3 = s.mul_gt(r3, s.exp_gt(s.pair(gpk.h, gpk.w), -sig.s_alpha - sig.s_beta))
    r3 = s.mul_gt(r3, s.exp_gt(s.pair(gpk.h, gpk.g2), -sig.s_delta1 - sig.s_delta2))
    r3 = s.mul_gt(r3, s.exp_gt(s.pair(sig.t3, gpk.w), c))
    r3 = s.mul_gt(r3, s.exp_gt(gpk.egg, -c))
    r4 = s.mul_g1(s.exp_g1(sig.t1, sig.s_x), s.exp_g1(gpk.u, -sig.s_delta1))
    r5 = s.mul_g1(s.exp_g1(sig.t2, sig.s_x), s.exp_g1(gpk.v, -sig.s_delta2))
    if _challenge(gpk, message, sig.t1, sig.t2, sig.t3, r1, r2, r3, r4, r5) != c:
        return Verdict(False, "challenge mismatch")
    return Verdict(True)


class UnknownSigner(ResiotError):
    pass


def gs_open(issuer, message, sig):
    """Trace a valid signature back to the enrolled member index."""
    verdict = gs_verify(issuer.gpk, message, sig)
    if not verdict:
        raise UnverifiableSignature(verdict.reason)
    if not isinstance(sig, GroupSignature):
        sig = GroupSignature.from_bytes(sig, issuer.gpk.suite)
    a = sig.t3 - (sig.t1 * to_scalar(issuer.xi1) + sig.t2 * to_scalar(issuer.xi2))
    for index, cert in issuer.registry.items():
        if cert == a:
            return index
    raise UnknownSigner("signature does not open to an enrolled member")
