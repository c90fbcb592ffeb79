"""Smoke test for the pywitten extension.

Build and run from the workspace root:

    cargo build --release -p witten-sampler-py --features extension-module
    cp target/release/libpywitten.so crates/python/python/pywitten.so
    python3 crates/python/python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pywitten as pw


def main():
    grid = pw.GridSpec(1, 64, 8.0)
    pot = pw.Potential("harmonic", gamma=1.0, dim=1)
    block = pw.BlockOperator.langevin(pot, 4.0, grid)
    report = block.spectral_report()
    assert abs(report["hamiltonian_gap"] - 1.0) < 1e-3, report

    psi = block.gibbs_state()
    re, im = block.apply(psi)
    residual = math.sqrt(sum(a * a + b * b for a, b in zip(re, im)))
    assert residual < 1e-6, residual

    filt = pw.FilterSpec(0.2, 0.3, 0.05, 200)
    _, _, sup = filt.validate()
    assert sup <= 1.0 + 1e-12
    assert abs(filt.evaluate(0.0) - 1.0) < 1e-2

    qc = pw.Potential("quartic-cosine-1d")
    g50 = pw.GridSpec(1, 50, 2.5)
    b50 = pw.BlockOperator.langevin(qc, 2.0, g50)
    sv = b50.spectral_report()["singular_values"]
    s1 = 0.25 * sv[1] / b50.alpha
    s2 = 0.75 * sv[1] / b50.alpha
    prep = pw.FilterSpec(s1, s2, 0.5 * (s2 - s1), 4000)
    warm = [math.exp(-0.25 * x * x) for x in g50.axis_points(0)]
    out, prob = b50.threshold(prep, warm)
    gibbs = b50.gibbs_state()
    fid = sum(a * b for a, b in zip(out, gibbs)) ** 2
    assert fid > 0.999, fid
    assert 0.0 < prob <= 1.0

    samples = pw.boost_and_measure(g50, out, 10, 20000, 7)
    assert len(samples) == 20000

    chain, acc = pw.sample_chain(qc, 2.0, 1e-2, 5000, [0.0], seed=1)
    assert len(chain) > 0 and 0.0 < acc <= 1.0
    print("pywitten smoke test passed")


if __name__ == "__main__":
    main()
