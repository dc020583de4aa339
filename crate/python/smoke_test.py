"""Smoke test for the compiled `simulacra` extension module.

Build first:  cargo build --release -p simulacra-py --features extension-module
Then run:     python3 python/smoke_test.py

The script imports an installed `simulacra` if there is one; otherwise it
loads the freshly built library from target/ (or $SIMULACRA_LIB).
"""

import importlib.util
import json
import os
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    explicit = os.environ.get("SIMULACRA_LIB")
    candidates = [pathlib.Path(explicit)] if explicit else [
        ROOT / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libsimulacra.so", "libsimulacra.dylib", "simulacra.dll")
    ]
    for path in candidates:
        if path.exists():
            spec = importlib.util.spec_from_file_location("simulacra", path)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            return module
    try:
        import simulacra  # noqa: F401
        return simulacra
    except ImportError:
        sys.exit("simulacra library not found; build it with cargo first")


def main():
    sim = load()

    profile = json.loads(sim.sample_profile(7))
    assert profile == json.loads(sim.sample_profile(7)), "sampling is deterministic"
    assert sim.validate_profile(json.dumps(profile)) == []
    broken = dict(profile, name="  ")
    assert sim.validate_profile(json.dumps(broken)), "blank name is reported"

    assert sim.kendall_tau([1, 2, 3, 4], [1, 2, 3, 4]) == 1.0
    assert sim.kendall_tau([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    other = sim.sample_profile(8)
    d = json.loads(sim.character_distance(json.dumps(profile), other))
    assert 0.0 <= d["total"] <= 1.0
    assert json.loads(sim.character_distance(other, other))["total"] == 0.0

    story = json.loads(sim.forge_story(json.dumps(profile), 7, iterations=2))
    assert len(story["iterations"]) == 2 and story["text"]

    q = json.loads(sim.generate_questionnaire(json.dumps(profile), 7))
    blank = json.loads(sim.score_self_report([""] * len(q["items"]), json.dumps(q)))
    assert blank["breakdown"]["sum"] == 0.0

    assert abs(sim.compute_icc([[1, 2, 3, 4], [1, 2, 3, 4]]) - 1.0) < 1e-12

    report = json.loads(sim.conformity_experiment([json.dumps(profile)], condition="control", scenario="always-correct"))
    assert report["overallRate"] == 1.0, report["overallRate"]

    try:
        sim.kendall_tau([1, 2], [1, 2, 3])
    except ValueError:
        pass
    else:
        raise AssertionError("length mismatch must raise")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
