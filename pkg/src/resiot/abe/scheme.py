"""Key-policy ABE in the style of Goyal-Pandey-Sahai-Waters (small universe).

Type-3 layout: per-attribute public elements T_a = g1^t_a and ciphertext
components T_a^s live in G1; key shares g2^(q_leaf(0)/t_a) live in G2, so a
leaf recombines as e(T_a^s, share) = e(g1, g2)^(s * q_leaf(0)).

The scheme is used as a KEM: a random GT element M is masked as M * Y^s,
and H(M) keys AES-GCM over the arbitrary-length payload.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from ..encoding import decode_int, decode_parts, decode_str, encode_int, encode_parts, encode_str
from ..errors import (AuthenticationFailed, MalformedCiphertext, MalformedEncoding,
                      PolicyError, PolicyUnsatisfied, UnknownAttribute)
from ..suite import (ORDER, BilinearSuite, Ciphertext, GtBytes, SessionKey, as_rng,
                     default_suite, sym_decrypt, sym_encrypt)
from .policy import Leaf, as_policy, attributes, leaves, parse_policy, policy_to_text, satisfies


@dataclass(frozen=True)
class AbePublicKey:
    suite: BilinearSuite
    universe: tuple
    attr_elems: tuple
    blind_g1: object
    mask_base: object

    @classmethod
    def build(cls, suite, universe, attr_elems, blind_g1):
        return cls(suite, tuple(universe), tuple(attr_elems), blind_g1, suite.raw_pair(blind_g1, suite.g2))

    def element(self, attr):
        try:
            return self.attr_elems[self.universe.index(attr)]
        except ValueError:
            raise UnknownAttribute(attr) from None

    def to_bytes(self):
        s = self.suite
        return encode_parts([b"abe-pk/v1", encode_parts(encode_str(a) for a in self.universe),
                             encode_parts(s.encode_g1(e) for e in self.attr_elems), s.encode_g1(self.blind_g1)])

    @classmethod
    def from_bytes(cls, data, suite=None):
        suite = suite or default_suite()
        tag, names, elems, blind = decode_parts(data, 4)
        if tag != b"abe-pk/v1":
            raise MalformedEncoding("not an ABE public key")
        universe = [decode_str(n) for n in decode_parts(names)]
        elems = [suite.decode_g1(e) for e in decode_parts(elems)]
        if len(universe) != len(elems):
            raise MalformedEncoding("universe and element counts differ")
        return cls.build(suite, universe, elems, suite.decode_g1(blind))


@dataclass(frozen=True)
class AbeMasterKey:
    pk: AbePublicKey
    attr_secrets: tuple
    y: int

    def to_bytes(self):
        return encode_parts([b"abe-msk/v1", self.pk.to_bytes(),
                             encode_parts(encode_int(t) for t in self.attr_secrets), encode_int(self.y)])

    @classmethod
    def from_bytes(cls, data, suite=None):
        tag, pk, secrets, y = decode_parts(data, 4)
        if tag != b"abe-msk/v1":
            raise MalformedEncoding("not an ABE master key")
        return cls(AbePublicKey.from_bytes(pk, suite), tuple(decode_int(t) for t in decode_parts(secrets)),
                   decode_int(y))


@dataclass(frozen=True)
class AbeDecryptionKey:
    suite: BilinearSuite
    policy: object
    shares: dict  # leaf path -> G2 element

    def to_bytes(self):
        s = self.suite
        return encode_parts([b"abe-sk/v1", encode_str(policy_to_text(self.policy)),
                             encode_parts(s.encode_g2(self.shares[p]) for p, _ in leaves(self.policy))])

    @classmethod
    def from_bytes(cls, data, suite=None):
        suite = suite or default_suite()
        tag, text, shares = decode_parts(data, 3)
        if tag != b"abe-sk/v1":
            raise MalformedEncoding("not an ABE decryption key")
        policy = parse_policy(decode_str(text))
        paths = [p for p, _ in leaves(policy)]
        elems = decode_parts(shares)
        if len(elems) != len(paths):
            raise MalformedEncoding("share count does not match policy")
        return cls(suite, policy, {p: suite.decode_g2(e) for p, e in zip(paths, elems)})


@dataclass(frozen=True)
class AbeCiphertext:
    attrs: tuple
    mask: bytes
    components: tuple
    body: Ciphertext

    def header(self, suite):
        return encode_parts([encode_parts(encode_str(a) for a in self.attrs),
                             encode_parts(suite.encode_g1(c) for c in self.components), self.mask])

    def to_bytes(self, suite=None):
        suite = suite or default_suite()
        return encode_parts([b"abe-ct/v1", self.header(suite), self.body.to_bytes()])

    @classmethod
    def from_bytes(cls, data, suite=None):
        suite = suite or default_suite()
        try:
            tag, header, body = decode_parts(data, 3)
            if tag != b"abe-ct/v1":
                raise MalformedEncoding("not an ABE ciphertext")
            names, comps, mask = decode_parts(header, 3)
            attrs = tuple(decode_str(n) for n in decode_parts(names))
            comps = tuple(suite.decode_g1(c) for c in decode_parts(comps))
            suite.decode_gt(mask)
            if len(attrs) != len(comps) or not attrs:
                raise MalformedEncoding("attribute/component mismatch")
            return cls(attrs, mask, comps, Ciphertext.from_bytes(body))
        except MalformedEncoding as exc:
            raise MalformedCiphertext(str(exc)) from exc


def _payload_key(suite, m):
    return SessionKey(hashlib.sha256(b"resiot/abe-kem/v1" + suite.encode_gt(m)).digest())


def abe_setup(suite=None, universe=4, rng_seed=0):
    """Create keys for a fixed attribute universe.

    ``universe`` is either a count (attributes named ``attr1..attrN``) or a
    sequence of distinct attribute names.
    """
    suite = suite or default_suite()
    if isinstance(universe, int):
        if universe < 1:
            raise ValueError("universe_size must be >= 1")
        universe = [f"attr{i}" for i in range(1, universe + 1)]
    universe = tuple(universe)
    if not universe or len(set(universe)) != len(universe):
        raise ValueError("universe must be non-empty with distinct names")
    rng = as_rng(rng_seed).fork("abe-setup")
    secrets = tuple(rng.scalar() for _ in universe)
    y = rng.scalar()
    pk = AbePublicKey.build(suite, universe, [suite.g1_base(t) for t in secrets], suite.g1_base(y))
    return pk, AbeMasterKey(pk, secrets, y)


def abe_keygen(msk, policy, rng_seed):
    """Secret-share the master exponent down ``policy``'s threshold tree."""
    policy = as_policy(policy)
    pk = msk.pk
    suite = pk.suite
    for attr in attributes(policy):
        if attr not in pk.universe:
            raise UnknownAttribute(attr)
    rng = as_rng(rng_seed)
    shares = {}

    def share(node, secret, path):
        if isinstance(node, Leaf):
            t = msk.attr_secrets[pk.universe.index(node.attr)]
            shares[path] = suite.exp_g2(suite.g2, secret * pow(t, -1, ORDER))
            return
        coeffs = [secret] + [rng.scalar() for _ in range(node.k - 1)]
        for i, child in enumerate(node.children, start=1):
            share(child, _poly_eval(coeffs, i), path + (i,))

    share(policy, msk.y, ())
    return AbeDecryptionKey(suite, policy, shares)


def _poly_eval(coeffs, x):
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % ORDER
    return acc


def lagrange_at_zero(i, points):
    num, den = 1, 1
    for j in points:
        if j != i:
            num = num * j % ORDER
            den = den * (j - i) % ORDER
    return num * pow(den, -1, ORDER) % ORDER


def abe_encrypt(pk, attrs, payload, rng_seed):
    suite = pk.suite
    attrs = tuple(dict.fromkeys(attrs))
    if not attrs:
        raise ValueError("attribute set must be non-empty")
    elems = [pk.element(a) for a in attrs]
    rng = as_rng(rng_seed)
    s = rng.scalar()
    m = suite.random_gt(rng)
    components = tuple(suite.exp_g1(e, s) for e in elems)
    mask = suite.encode_gt(suite.mul_gt(m, suite.exp_gt(pk.mask_base, s)))
    partial = AbeCiphertext(attrs, mask, components, None)
    body = sym_encrypt(_payload_key(suite, m), payload, rng, aad=partial.header(suite))
    return AbeCiphertext(attrs, mask, components, body)


def abe_decrypt(key, ct):
    """Recover the payload, or raise ``PolicyUnsatisfied``.

    Satisfying children are chosen smallest-index-first, so operation counts
    are reproducible. Leaves pair against negated ciphertext components,
    which makes the recombined root value Y^-s directly.
    """
    suite = key.suite
    if isinstance(ct, (bytes, bytearray)):
        ct = AbeCiphertext.from_bytes(ct, suite)
    attrs = set(ct.attrs)
    if not satisfies(key.policy, attrs):
        raise PolicyUnsatisfied("ciphertext attributes do not satisfy the key policy")
    comps = dict(zip(ct.attrs, ct.components))

    def recombine(node, path):
        if isinstance(node, Leaf):
            if path not in key.shares:
                raise MalformedCiphertext("key has no share for leaf")
            return suite.pair(suite.neg(comps[node.attr]), key.shares[path])
        chosen = [i for i, c in enumerate(node.children, start=1) if satisfies(c, attrs)][:node.k]
        acc = None
        for i in chosen:
            val = recombine(node.children[i - 1], path + (i,))
            coef = lagrange_at_zero(i, chosen)
            if coef != 1:
                val = suite.exp_gt(val, coef)
            acc = val if acc is None else suite.mul_gt(acc, val)
        return acc

    inv_blind = recombine(key.policy, ())
    m = suite.mul_gt(GtBytes(ct.mask), inv_blind)
    try:
        return sym_decrypt(_payload_key(suite, m), ct.body, aad=ct.header(suite))
    except AuthenticationFailed as exc:
        raise AuthenticationFailed("ABE payload failed authentication") from exc


def validate_policy(pk, policy):
    policy = as_policy(policy)
    unknown = attributes(policy) - set(pk.universe)
    if unknown:
        raise PolicyError(f"attributes outside universe: {sorted(unknown)}")
    return policy
