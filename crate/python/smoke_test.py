"""Smoke test for the detirs_py extension.

Build first, e.g.
    cargo build -p detirs-py --features extension-module --release
    cp target/release/libdetirs_py.so python/detirs_py.so
or install with maturin from crates/py.
"""
import math
import sys
from fractions import Fraction
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import detirs_py as d


def main():
    assert [d.ball_size(["x", "y"], 1, r) for r in range(3)] == [1, 4, 8]
    assert set(d.Game.corpus_names()) == {"all-accepting", "all-rejecting", "consistency", "triangle"}

    acc = d.Game.corpus("all-accepting")
    assert d.alpha(acc, 2) == ["1/1", "1/1"]
    assert d.alpha(d.Game.corpus("all-rejecting"), 1, mode="trace") == ["0/1"]

    tri = d.Game.corpus("triangle")
    alphas = [Fraction(a) for a in d.alpha(tri, 2, mode="trace")]
    best, action = d.beta(tri, max_degree=3)
    classical = Fraction(tri.classical_value(10_000))
    assert classical <= Fraction(best) <= alphas[1] <= alphas[0]
    assert tri.value(action) == best

    text = Path(__file__).resolve().parent.parent.joinpath("games", "consistency.game").read_text()
    game = d.Game.parse(text)
    a = d.Action.parse(game, "degree 2\nx.1: (1 2)\nJ: (1 2)\n")
    assert a.trace("J") == "0/1" and a.trace("e") == "1/1"
    nullity, coeff, ld = d.fk_logdet(game, a, "[[e + x{1}]]")
    assert (nullity, coeff) == (1, "4") and math.isclose(ld, math.log(2))

    assert d.lnplus_poly(1, "4", cap=32).startswith("level 1 interval 4")
    verdict, transcript = d.dovetail(acc, workers=2, budget=200)
    assert verdict == "accept" and transcript.endswith("verdict accept round 1\n")

    bad = d.Action.parse(game, "degree 2\nx.1: (1 2)\n")
    try:
        game.value(bad)
    except ValueError as e:
        assert "normalized" in str(e)
    else:
        raise AssertionError("expected a ValueError")

    print("alpha", [str(x) for x in alphas], "beta", best, "classical", classical)
    print("smoke test ok")


if __name__ == "__main__":
    main()
