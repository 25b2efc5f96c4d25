"""Threshold access trees and their text syntax.

Grammar::

    policy  := thresh(K, policy, ...) | and(policy, ...) | or(policy, ...) | NAME

``and`` is n-of-n, ``or`` is 1-of-n. Children are numbered 1..n in the order
written; those numbers are the interpolation points used for secret sharing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import PolicyError


@dataclass(frozen=True)
class Leaf:
    attr: str


@dataclass(frozen=True)
class Threshold:
    k: int
    children: tuple

    def __post_init__(self):
        n = len(self.children)
        if n == 0:
            raise PolicyError("threshold node needs at least one child")
        if not 1 <= self.k <= n:
            raise PolicyError(f"threshold {self.k} outside 1..{n}")


_TOKEN = re.compile(r"\s*(?:(?P<name>[A-Za-z_][A-Za-z0-9_.:-]*)|(?P<int>\d+)|(?P<punct>[(),]))")


def _tokenize(text):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            at = len(text) - len(text[pos:].lstrip())
            raise PolicyError(f"unexpected character {text[at]!r}", at)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind, value=None):
        tok = self.tokens[self.i]
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value or kind
            got = tok[1] or "end of input"
            raise PolicyError(f"expected {want!r}, got {got!r}", tok[2])
        self.i += 1
        return tok

    def parse(self):
        node = self.node()
        self.take("end")
        return node

    def node(self):
        kind, value, pos = self.peek()
        if kind != "name":
            raise PolicyError(f"expected attribute or operator, got {value or 'end of input'!r}", pos)
        self.i += 1
        nxt = self.peek()
        if not (nxt[0] == "punct" and nxt[1] == "(") or value not in ("and", "or", "thresh"):
            return Leaf(value)
        self.take("punct", "(")
        k = None
        if value == "thresh":
            k = int(self.take("int")[1])
            self.take("punct", ",")
        children = [self.node()]
        while self.peek()[1] == ",":
            self.take("punct", ",")
            children.append(self.node())
        self.take("punct", ")")
        if value == "and":
            k = len(children)
        elif value == "or":
            k = 1
        try:
            return Threshold(k, tuple(children))
        except PolicyError as exc:
            raise PolicyError(str(exc), pos) from None


def parse_policy(text):
    """Parse policy text into a tree; errors carry the offending position."""
    return _Parser(text).parse()


def as_policy(policy):
    return parse_policy(policy) if isinstance(policy, str) else policy


def policy_to_text(node):
    if isinstance(node, Leaf):
        return node.attr
    inner = ", ".join(policy_to_text(c) for c in node.children)
    if node.k == len(node.children) and len(node.children) > 1:
        return f"and({inner})"
    if node.k == 1 and len(node.children) > 1:
        return f"or({inner})"
    return f"thresh({node.k}, {inner})"


def leaves(node, path=()):
    """Yield ``(path, attr)`` for every leaf; path is the child-index trail."""
    if isinstance(node, Leaf):
        yield path, node.attr
        return
    for i, child in enumerate(node.children, start=1):
        yield from leaves(child, path + (i,))


def attributes(node):
    return {attr for _, attr in leaves(node)}


def satisfies(node, attrs):
    if isinstance(node, Leaf):
        return node.attr in attrs
    return sum(1 for c in node.children if satisfies(c, attrs)) >= node.k
