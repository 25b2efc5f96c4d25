"""Key-policy attribute-based encryption with threshold access trees."""

from .policy import Leaf, Threshold, attributes, leaves, parse_policy, policy_to_text, satisfies
from .scheme import (AbeCiphertext, AbeDecryptionKey, AbeMasterKey, AbePublicKey, abe_decrypt,
                     abe_encrypt, abe_keygen, abe_setup, lagrange_at_zero, validate_policy)

__all__ = [
    "Leaf", "Threshold", "attributes", "leaves", "parse_policy", "policy_to_text", "satisfies",
    "AbeCiphertext", "AbeDecryptionKey", "AbeMasterKey", "AbePublicKey", "abe_decrypt",
    "abe_encrypt", "abe_keygen", "abe_setup", "lagrange_at_zero", "validate_policy",
]
