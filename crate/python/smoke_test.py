"""Smoke test for the adgap Python extension.

Build and install first:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/adgap-*.whl
"""

import math
import os
import sys
import tempfile

import adgap


def check(cond, msg):
    if not cond:
        print(f"FAIL: {msg}")
        sys.exit(1)
    print(f"ok: {msg}")


def main():
    g = adgap.Graph.line(2, 2)
    check(g.nodes == 4 and g.kind == "line", repr(g))

    value, seeds = adgap.opt(g, 2)
    check(math.isclose(value, 3.0) and seeds == [0, 2], f"non-adaptive optimum {value} at {seeds}")
    value, seeds = adgap.opt(g, 2, adaptive=True)
    check(math.isclose(value, 3.25) and seeds is None, f"adaptive optimum {value}")

    exact, se = adgap.spread(g, [0])
    mc, mc_se = adgap.spread(g, [0], method="mc", samples=20000, seed=1)
    check(se == 0.0 and abs(mc - exact) <= 4 * mc_se, f"spread exact {exact}, mc {mc:.4f} +- {mc_se:.4f}")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "g.json")
        g.save(path)
        check(adgap.Graph.load(path).edges == g.edges, "save and load round trip")

    tree = adgap.Graph.random("out-arborescence", n=7, seed=3)
    report = adgap.gap(tree, 2)
    ratio = next(r for r in report["rows"] if r["name"] == "ratio")
    check(ratio["pass"] is True, f"out-arborescence gap ratio {ratio['value']:.4f} within {ratio['bound']}")

    report = adgap.lowerbound(20, 20, samples=20000, seed=5)
    ratio = next(r for r in report["rows"] if r["name"] == "ratio")["value"]
    check(1.3 < ratio < adgap.E_OVER_E_MINUS_1, f"lower-bound ratio {ratio:.4f} at k=t=20")

    report = adgap.verify(seed=7, trials=5)
    check(all(r["pass"] for r in report["rows"]), f"invariant suite, {len(report['rows'])} properties")

    try:
        adgap.opt(adgap.Graph.random("general", n=12, m=40, seed=1), 2, adaptive=True)
    except OverflowError as e:
        check(True, f"enumeration cap reported: {e}")
    else:
        check(False, "enumeration cap not enforced")


if __name__ == "__main__":
    main()
