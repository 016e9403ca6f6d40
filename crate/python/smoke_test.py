"""Smoke test for the conesq_py extension module.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install --no-build-isolation dist/conesq_py-*.whl
"""

import json
import math
import sys

import conesq_py


def main() -> int:
    names = conesq_py.suites()
    assert "lattice" in names and "czd" in names, names

    reports = conesq_py.run_suite("lattice", seed=5)
    assert len(reports) == 50 and all(r["pass"] for r in reports)

    scenario = json.dumps({
        "set": {"type": "segment", "a": [0, 0], "b": [1, 0]},
        "measure": {"type": "uniform", "mesh": 1 / 32},
    })
    filled = conesq_py.validate_scenario(scenario)
    assert filled["params"]["delta"] == 0.25, filled["params"]
    try:
        conesq_py.validate_scenario('{"bogus": 1}')
    except ValueError:
        pass
    else:
        raise AssertionError("malformed scenario accepted")

    values, stderr = conesq_py.square_function(scenario, budget=30)
    assert len(values) == len(stderr) == 33
    assert all(math.isfinite(v) and v > 0 for v in values)

    mass = conesq_py.ball_mass([[0, 0], [1, 0]], [0.5, 0.5], [0, 0], 1.0)
    assert mass == 1.0
    assert conesq_py.ball_mass([[0, 0], [1, 0]], [0.5, 0.5], [0, 0], 1.0, closed=False) == 0.5

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
