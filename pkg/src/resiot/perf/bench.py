"""Host microbenchmarks of the pairing primitives (informative only)."""

import statistics
import time

from ..suite import Rng, default_suite, dh_agree, dh_generate, sym_encrypt
from .costs import PrimitiveTimings


def _median_ms(fn, repeats):
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1000.0)
    return statistics.median(samples)


def microbench(suite=None, repeats=15, seed=0):
    """Median-of-``repeats`` wall-clock timings for each primitive."""
    suite = suite or default_suite()
    rng = Rng(seed)
    a, b = rng.scalar(), rng.scalar()
    p1, q1 = suite.g1_base(a), suite.g1_base(b)
    p2, q2 = suite.g2_base(a), suite.g2_base(b)
    x, y = suite.raw_pair(p1, p2), suite.raw_pair(q1, q2)
    mine, theirs = dh_generate(rng.fork("dh1"), suite), dh_generate(rng.fork("dh2"), suite)
    key = dh_agree(mine, theirs.public, suite)
    block = rng.bytes(20)  # 160-bit input
    return PrimitiveTimings(
        platform="host",
        pairing=_median_ms(lambda: suite.raw_pair(p1, q2), repeats),
        exp_g1=_median_ms(lambda: suite.exp_g1(p1, b), repeats),
        mul_g1=_median_ms(lambda: suite.mul_g1(p1, q1), repeats),
        exp_g2=_median_ms(lambda: suite.exp_g2(p2, b), repeats),
        mul_g2=_median_ms(lambda: suite.mul_g2(p2, q2), repeats),
        exp_gt=_median_ms(lambda: suite.exp_gt(x, b), repeats),
        mul_gt=_median_ms(lambda: suite.mul_gt(x, y), repeats),
        dh=_median_ms(lambda: dh_agree(mine, theirs.public, suite), repeats),
        enc=_median_ms(lambda: sym_encrypt(key, block, nonce=b"\0" * 12), repeats),
        provenance="host-measured",
    )
