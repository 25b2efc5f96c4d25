"""Pairing groups, Diffie-Hellman, authenticated encryption and hashing.

The arithmetic backend is BLS12-381 via ``py_arkworks_bls12381`` (a Type-3
pairing at roughly 128-bit security). Scalars are plain Python ints reduced
mod the group order. Group operations are written multiplicatively in the
method names (``exp_g1`` is scalar multiplication, ``mul_g1`` point addition)
so that counts line up with the usual pairing-cost notation.
"""

from __future__ import annotations

import contextlib
import contextvars
import hashlib
import hmac
from collections import Counter
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from py_arkworks_bls12381 import GT, G1Point, G2Point, Scalar

from .encoding import decode_parts, encode_parts
from .errors import AuthenticationFailed, InvalidElement, MalformedEncoding

# BLS12-381 subgroup order and base field modulus.
ORDER = 0x73EDA753299D7D483339D80809A1D80553BDA402FFFE5BFEFFFFFFFF00000001
FIELD_P = int(
    "1a0111ea397fe69a4b1ba7b6434bacd764774b84f38512bf6730d2a0f6b0f6241"
    "eabfffeb153ffffb9feffffffffaaab", 16)

G1_BYTES = 48
G2_BYTES = 96
GT_BYTES = 576
SYM_KEY_BYTES = 32
SYM_NONCE_BYTES = 12
SYM_TAG_BYTES = 16
KDF_HASH = "sha256"

PRIMITIVES = ("pairing", "exp_g1", "mul_g1", "exp_g2", "mul_g2", "exp_gt", "mul_gt")

_active_counters: contextvars.ContextVar[tuple] = contextvars.ContextVar(
    "resiot_op_counters", default=())


def _bump(op, n=1):
    for c in _active_counters.get():
        c[op] += n


@contextlib.contextmanager
def count_ops():
    """Count group operations performed inside the block.

    Yields a ``collections.Counter`` keyed by primitive name. Nested blocks
    each see the operations performed while they are active.
    """
    counter = Counter()
    token = _active_counters.set(_active_counters.get() + (counter,))
    try:
        yield counter
    finally:
        _active_counters.reset(token)


class Rng:
    """Deterministic byte stream (HMAC-SHA256 in counter mode).

    Seeds may be ints, strings or bytes. ``fork`` derives an independent
    child stream from a label without consuming output from this one.
    """

    def __init__(self, seed=0):
        if isinstance(seed, Rng):
            key = seed._key
        else:
            if isinstance(seed, int):
                seed = str(seed).encode()
            elif isinstance(seed, str):
                seed = seed.encode()
            key = hashlib.sha256(b"resiot/rng/v1" + bytes(seed)).digest()
        self._key = key
        self._counter = 0

    def fork(self, label):
        if isinstance(label, str):
            label = label.encode()
        return Rng(self._key + b"/" + bytes(label))

    def bytes(self, n):
        out = bytearray()
        while len(out) < n:
            out += hmac.new(self._key, self._counter.to_bytes(8, "big"), hashlib.sha256).digest()
            self._counter += 1
        return bytes(out[:n])

    def randbelow(self, n):
        return int.from_bytes(self.bytes(64), "big") % n

    def scalar(self):
        """Uniform non-zero scalar."""
        return 1 + self.randbelow(ORDER - 1)

    def random(self):
        return int.from_bytes(self.bytes(7), "big") / float(1 << 56)


def as_rng(seed):
    return seed if isinstance(seed, Rng) else Rng(seed)


def to_scalar(k):
    return Scalar.from_le_bytes((k % ORDER).to_bytes(32, "little"))


# -- Fq12 multiplication on arkworks' canonical GT encoding -------------------
# The backend has no GT decoder, so decoded target-group values (received in
# ciphertexts) are multiplied here. Tower: u^2 = -1, v^3 = u + 1, w^2 = v;
# coefficients little-endian, c0 before c1 at every level.

def _f2mul(a, b):
    return ((a[0] * b[0] - a[1] * b[1]) % FIELD_P, (a[0] * b[1] + a[1] * b[0]) % FIELD_P)


def _f2add(a, b):
    return ((a[0] + b[0]) % FIELD_P, (a[1] + b[1]) % FIELD_P)


def _f2nr(a):
    return ((a[0] - a[1]) % FIELD_P, (a[0] + a[1]) % FIELD_P)


def _f6mul(a, b):
    a0, a1, a2 = a
    b0, b1, b2 = b
    c0 = _f2add(_f2mul(a0, b0), _f2nr(_f2add(_f2mul(a1, b2), _f2mul(a2, b1))))
    c1 = _f2add(_f2add(_f2mul(a0, b1), _f2mul(a1, b0)), _f2nr(_f2mul(a2, b2)))
    c2 = _f2add(_f2add(_f2mul(a0, b2), _f2mul(a1, b1)), _f2mul(a2, b0))
    return (c0, c1, c2)


def _f6add(a, b):
    return tuple(_f2add(x, y) for x, y in zip(a, b))


def _f6mulv(a):
    return (_f2nr(a[2]), a[0], a[1])


def _fq12_from_bytes(data):
    xs = [int.from_bytes(data[i * 48:(i + 1) * 48], "little") for i in range(12)]
    if any(x >= FIELD_P for x in xs):
        raise MalformedEncoding("GT coefficient out of range")
    f2 = [(xs[2 * i], xs[2 * i + 1]) for i in range(6)]
    return ((f2[0], f2[1], f2[2]), (f2[3], f2[4], f2[5]))


def _fq12_to_bytes(a):
    return b"".join(x.to_bytes(48, "little") for f6 in a for f2 in f6 for x in f2)


def _fq12_mul(a, b):
    a0, a1 = a
    b0, b1 = b
    return (_f6add(_f6mul(a0, b0), _f6mulv(_f6mul(a1, b1))),
            _f6add(_f6mul(a0, b1), _f6mul(a1, b0)))


@dataclass(frozen=True)
class GtBytes:
    """A target-group value known only through its canonical encoding."""

    data: bytes


class BilinearSuite:
    """G1 x G2 -> GT over BLS12-381 with instrumented group operations."""

    name = "BLS12-381"
    order = ORDER

    def __init__(self):
        self.g1 = G1Point()
        self.g2 = G2Point()
        self._egg = None

    @property
    def gt_generator(self):
        if self._egg is None:
            self._egg = GT.pairing(self.g1, self.g2)
        return self._egg

    # -- counted operations --------------------------------------------------
    def exp_g1(self, p, k):
        _bump("exp_g1")
        return p * to_scalar(k)

    def mul_g1(self, p, q):
        _bump("mul_g1")
        return p + q

    def exp_g2(self, p, k):
        _bump("exp_g2")
        return p * to_scalar(k)

    def mul_g2(self, p, q):
        _bump("mul_g2")
        return p + q

    def pair(self, p, q):
        _bump("pairing")
        return GT.pairing(p, q)

    def exp_gt(self, x, k):
        _bump("exp_gt")
        return self._gt_pow(x, k)

    def mul_gt(self, x, y):
        _bump("mul_gt")
        if isinstance(x, GtBytes) or isinstance(y, GtBytes):
            prod = _fq12_mul(_fq12_from_bytes(self.encode_gt(x)), _fq12_from_bytes(self.encode_gt(y)))
            return GtBytes(_fq12_to_bytes(prod))
        return x * y

    @staticmethod
    def _gt_pow(x, k):
        k %= ORDER
        acc = GT.one()
        if k == 0:
            return acc
        for bit in bin(k)[2:]:
            acc = acc * acc
            if bit == "1":
                acc = acc * x
        return acc

    def random_gt(self, rng):
        """Sample a uniform GT element (tracked as ``sample_gt``, not ``exp_gt``)."""
        _bump("sample_gt")
        return self._gt_pow(self.gt_generator, as_rng(rng).scalar())

    # -- uncounted helpers ---------------------------------------------------
    def g1_base(self, k):
        """g1^k, used for key generation outside instrumented paths."""
        return self.g1 * to_scalar(k)

    def g2_base(self, k):
        return self.g2 * to_scalar(k)

    @staticmethod
    def raw_pair(p, q):
        """Uncounted pairing for key material precomputation."""
        return GT.pairing(p, q)

    @staticmethod
    def neg(p):
        return -p

    @staticmethod
    def is_identity_g1(p):
        return p == G1Point.identity()

    # -- encodings -----------------------------------------------------------
    @staticmethod
    def encode_g1(p):
        return bytes(p.to_compressed_bytes())

    @staticmethod
    def decode_g1(data):
        if len(data) != G1_BYTES:
            raise MalformedEncoding("G1 element must be 48 bytes")
        try:
            return G1Point.from_compressed_bytes(bytes(data))
        except ValueError as exc:
            raise MalformedEncoding(f"invalid G1 element: {exc}") from exc

    @staticmethod
    def encode_g2(p):
        return bytes(p.to_compressed_bytes())

    @staticmethod
    def decode_g2(data):
        if len(data) != G2_BYTES:
            raise MalformedEncoding("G2 element must be 96 bytes")
        try:
            return G2Point.from_compressed_bytes(bytes(data))
        except ValueError as exc:
            raise MalformedEncoding(f"invalid G2 element: {exc}") from exc

    @staticmethod
    def encode_gt(x):
        if isinstance(x, GtBytes):
            return x.data
        return bytes.fromhex(str(x))

    @staticmethod
    def decode_gt(data):
        if len(data) != GT_BYTES:
            raise MalformedEncoding("GT element must be 576 bytes")
        _fq12_from_bytes(data)
        return GtBytes(bytes(data))

    @staticmethod
    def hash_to_scalar(*parts):
        digest = hashlib.sha512(b"resiot/h2s/v1" + encode_parts(parts)).digest()
        return int.from_bytes(digest, "big") % ORDER

    def __repr__(self):
        return f"BilinearSuite({self.name})"


_DEFAULT = None


def default_suite():
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = BilinearSuite()
    return _DEFAULT


# -- Diffie-Hellman in G1 -----------------------------------------------------

@dataclass(frozen=True)
class DhKeypair:
    secret: int
    public: G1Point

    @classmethod
    def from_secret(cls, secret, suite=None):
        suite = suite or default_suite()
        secret %= ORDER
        if secret == 0:
            raise InvalidElement("DH secret must be non-zero")
        return cls(secret, suite.g1_base(secret))

    @property
    def public_bytes(self):
        return BilinearSuite.encode_g1(self.public)


@dataclass(frozen=True)
class SessionKey:
    key_bytes: bytes

    def __post_init__(self):
        if len(self.key_bytes) != SYM_KEY_BYTES:
            raise ValueError(f"session key must be {SYM_KEY_BYTES} bytes")

    def __repr__(self):
        return "SessionKey(<redacted>)"


def derive_key(label, *parts):
    return SessionKey(hashlib.new(KDF_HASH, label + encode_parts(parts)).digest())


def dh_generate(rng_seed, suite=None):
    return DhKeypair.from_secret(as_rng(rng_seed).scalar(), suite)


def dh_agree(mine, theirs_public, suite=None):
    """Derive the shared session key from our secret and the peer's g^y."""
    suite = suite or default_suite()
    if isinstance(theirs_public, (bytes, bytearray)):
        theirs_public = suite.decode_g1(theirs_public)
    if suite.is_identity_g1(theirs_public):
        raise InvalidElement("peer DH public value is the identity")
    shared = suite.exp_g1(theirs_public, mine.secret)
    return derive_key(b"resiot/kdf/dh/v1", suite.encode_g1(shared))


# -- authenticated symmetric encryption (AES-256-GCM) ------------------------

@dataclass(frozen=True)
class Ciphertext:
    nonce: bytes
    body: bytes
    tag: bytes

    def to_bytes(self):
        return encode_parts([self.nonce, self.body, self.tag])

    @classmethod
    def from_bytes(cls, data):
        nonce, body, tag = decode_parts(data, 3)
        if len(nonce) != SYM_NONCE_BYTES or len(tag) != SYM_TAG_BYTES:
            raise MalformedEncoding("bad nonce or tag length")
        return cls(nonce, body, tag)


def _key_bytes(key):
    kb = key.key_bytes if isinstance(key, SessionKey) else bytes(key)
    if len(kb) != SYM_KEY_BYTES:
        raise ValueError(f"symmetric key must be {SYM_KEY_BYTES} bytes")
    return kb


def sym_encrypt(key, plaintext, rng_seed=None, *, nonce=None, aad=b""):
    """Encrypt under AES-256-GCM.

    Exactly one of ``rng_seed`` and ``nonce`` picks the nonce; a fixed nonce
    is only for values both endpoints must recompute byte-for-byte.
    """
    if nonce is None:
        if rng_seed is None:
            raise ValueError("sym_encrypt needs rng_seed or nonce")
        nonce = as_rng(rng_seed).bytes(SYM_NONCE_BYTES)
    if len(nonce) != SYM_NONCE_BYTES:
        raise ValueError("nonce must be 12 bytes")
    out = AESGCM(_key_bytes(key)).encrypt(nonce, bytes(plaintext), aad)
    return Ciphertext(bytes(nonce), out[:-SYM_TAG_BYTES], out[-SYM_TAG_BYTES:])


def sym_decrypt(key, ct, *, aad=b""):
    if isinstance(ct, (bytes, bytearray)):
        ct = Ciphertext.from_bytes(ct)
    try:
        return AESGCM(_key_bytes(key)).decrypt(ct.nonce, ct.body + ct.tag, aad)
    except InvalidTag as exc:
        raise AuthenticationFailed("symmetric authentication failed") from exc
