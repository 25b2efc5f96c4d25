import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from resiot.abe import (AbeCiphertext, AbeDecryptionKey, AbeMasterKey, AbePublicKey, abe_decrypt,
                        abe_encrypt, abe_keygen, abe_setup, lagrange_at_zero, validate_policy)
from resiot.errors import (AuthenticationFailed, MalformedCiphertext, PolicyError, PolicyUnsatisfied,
                           UnknownAttribute)
from resiot.suite import ORDER, count_ops


def oracle(tree, attrs):
    """Independent satisfiability check on the (k, children) / name form."""
    if isinstance(tree, str):
        return tree in attrs
    k, kids = tree
    return sum(oracle(c, attrs) for c in kids) >= k


def render(tree):
    if isinstance(tree, str):
        return tree
    k, kids = tree
    return f"thresh({k}, {', '.join(render(c) for c in kids)})"


def random_tree(rng, names, depth=2):
    if depth == 0 or rng.random() < 0.3:
        return rng.choice(names)
    kids = [random_tree(rng, names, depth - 1) for _ in range(rng.randint(2, 3))]
    return (rng.randint(1, len(kids)), kids)


def test_round_trip_with_satisfying_attributes(abe_keys):
    pk, msk = abe_keys
    key = abe_keygen(msk, "and(a, or(b, c))", 1)
    ct = abe_encrypt(pk, ["a", "c"], b"secret reading", 2)
    assert abe_decrypt(key, ct) == b"secret reading"
    assert abe_decrypt(key, ct.to_bytes()) == b"secret reading"


def test_unsatisfying_attributes_are_denied(abe_keys):
    pk, msk = abe_keys
    key = abe_keygen(msk, "and(a, b)", 1)
    with pytest.raises(PolicyUnsatisfied):
        abe_decrypt(key, abe_encrypt(pk, ["a", "c", "d"], b"x", 3))


@settings(max_examples=6)
@given(st.integers(0, 10_000))
def test_decrypt_agrees_with_independent_oracle(abe_keys, seed):
    pk, msk = abe_keys
    rng = random.Random(seed)
    tree = random_tree(rng, list(pk.universe))
    key = abe_keygen(msk, render(tree), seed)
    attrs = [a for a in pk.universe if rng.random() < 0.5] or ["a"]
    ct = abe_encrypt(pk, attrs, b"payload", seed)
    if oracle(tree, set(attrs)):
        assert abe_decrypt(key, ct) == b"payload"
    else:
        with pytest.raises(PolicyUnsatisfied):
            abe_decrypt(key, ct)


def test_components_cannot_be_mixed_across_ciphertexts(abe_keys):
    from dataclasses import replace
    pk, msk = abe_keys
    key = abe_keygen(msk, "and(a, b)", 1)
    c1 = abe_encrypt(pk, ["a", "b"], b"one", 5)
    c2 = abe_encrypt(pk, ["a", "b"], b"two", 6)
    mixed = replace(c1, components=(c1.components[0], c2.components[1]))
    with pytest.raises(AuthenticationFailed):
        abe_decrypt(key, mixed)


def test_keys_from_one_authority_fail_on_anothers_ciphertexts(abe_keys):
    pk, _ = abe_keys
    _, other_msk = abe_setup(universe=list(pk.universe), rng_seed=999)
    key = abe_keygen(other_msk, "a", 1)
    with pytest.raises(AuthenticationFailed):
        abe_decrypt(key, abe_encrypt(pk, ["a"], b"x", 1))


def test_tampered_ciphertext_bytes_are_rejected(abe_keys):
    pk, msk = abe_keys
    key = abe_keygen(msk, "a", 1)
    raw = bytearray(abe_encrypt(pk, ["a"], b"x", 1).to_bytes())
    raw[-5] ^= 0x10
    with pytest.raises((AuthenticationFailed, MalformedCiphertext)):
        abe_decrypt(key, bytes(raw))
    with pytest.raises(MalformedCiphertext):
        AbeCiphertext.from_bytes(b"junk")


def test_encrypt_operation_counts(abe_keys):
    pk, _ = abe_keys
    with count_ops() as ops:
        abe_encrypt(pk, ["a", "b", "c"], b"x", 1)
    # (N_a + 1) exponentiations and one multiplication, the last two in GT
    assert ops == {"exp_g1": 3, "exp_gt": 1, "mul_gt": 1, "sample_gt": 1}


def test_decrypt_pairs_once_per_used_leaf(abe_keys):
    pk, msk = abe_keys
    key = abe_keygen(msk, "thresh(2, a, b, c)", 1)
    ct = abe_encrypt(pk, ["a", "b", "c"], b"x", 1)
    with count_ops() as ops:
        abe_decrypt(key, ct)
    assert ops["pairing"] == 2
    assert ops["exp_gt"] == 2


def test_lagrange_coefficients_reconstruct_constant_term():
    coeffs = [1234, 55, 7]
    f = lambda x: sum(c * x**i for i, c in enumerate(coeffs)) % ORDER
    pts = [1, 3, 4]
    assert sum(lagrange_at_zero(i, pts) * f(i) for i in pts) % ORDER == 1234


def test_unknown_attributes_are_rejected(abe_keys):
    pk, msk = abe_keys
    with pytest.raises(UnknownAttribute):
        abe_encrypt(pk, ["z"], b"x", 1)
    with pytest.raises(UnknownAttribute):
        abe_keygen(msk, "and(a, z)", 1)
    with pytest.raises(PolicyError):
        validate_policy(pk, "or(a, zz)")


def test_setup_sizes_and_serialization():
    pk, msk = abe_setup(universe=50, rng_seed=4)
    assert len(pk.universe) == 50 and pk.universe[-1] == "attr50"
    assert AbePublicKey.from_bytes(pk.to_bytes()).to_bytes() == pk.to_bytes()
    assert AbeMasterKey.from_bytes(msk.to_bytes()).to_bytes() == msk.to_bytes()
    key = abe_keygen(msk, "thresh(2, attr1, attr7, attr50)", 3)
    again = AbeDecryptionKey.from_bytes(key.to_bytes())
    assert again.to_bytes() == key.to_bytes()
    ct = abe_encrypt(pk, ["attr7", "attr50"], b"z", 1)
    assert abe_decrypt(again, ct) == b"z"
    with pytest.raises(ValueError):
        abe_setup(universe=["a", "a"])


def test_exhaustive_subsets_for_fixed_policy(abe_keys):
    pk, msk = abe_keys
    tree = (2, ["a", (1, ["b", "c"]), "d"])
    key = abe_keygen(msk, render(tree), 8)
    for r in range(1, 5):
        for subset in itertools.combinations(pk.universe, r):
            ct = abe_encrypt(pk, subset, b"m", r)
            if oracle(tree, set(subset)):
                assert abe_decrypt(key, ct) == b"m"
            else:
                with pytest.raises(PolicyUnsatisfied):
                    abe_decrypt(key, ct)
