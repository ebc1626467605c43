"""Smoke test for the sbrl extension module.

Build and run:
    cargo build -p sbrl-py --release --features extension-module
    cp target/release/libsbrl.so python/sbrl.so
    python3 python/smoke_test.py
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import sbrl  # noqa: E402


def main():
    w = sbrl.World(seed=3)
    h0 = w.state_hash()
    assert len(w.positions()) == 2
    assert sbrl.World(seed=3).state_hash() == h0
    events = w.step([(0.0, 1.0, False), (0.0, 0.0, False)])
    assert len(events) == 2 and w.step_count == 1
    assert w.state_hash() != h0
    assert len(w.observe(0)) > 0
    side = w.side
    hit = w.raycast((1.0, side / 2), (-1.0, 0.0), 100.0)
    assert hit is not None and abs(hit - 1.0) < 1e-9, hit

    env = sbrl.SkillEnv("flee", desk=True)
    obs = env.reset(7)
    assert len(obs) == env.observation_width
    obs, reward, done = env.step(0.0, 1.0)
    assert isinstance(reward, float) and isinstance(done, bool)

    adv, ret = sbrl.gae([1.0, 1.0], [0.0, 0.0], [False, True], 5.0, 0.9, 1.0)
    assert abs(adv[1] - 1.0) < 1e-12 and abs(adv[0] - 1.9) < 1e-12, adv

    tree = sbrl.parse_tree("(selector (sequence (in-sight) (task combat)) (task search))")
    assert "selector" in tree

    r = sbrl.evaluate("bt", "static", episodes=5, seed=1)
    assert r["win_rate"] == 1.0, r
    m = sbrl.run_match("bt", "static", seed=4)
    assert m["winner"] == 0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.trace")
        h = sbrl.trace_match("bt", "static", 4, path)
        assert h == m["trace_hash"] == sbrl.verify_trace(path)

        t = sbrl.train_skill("combat", steps=4000, seed=1, out=d)
        assert t["batches"] == 1 and t["model_path"]
        s = sbrl.evaluate_skill("combat", t["model_path"], episodes=3, seed=2)
        assert 0.0 <= s["kill_rate"] <= 1.0

    try:
        sbrl.SkillEnv("dance")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown skill accepted")

    b = sbrl.bench("no-model", agents=1, steps=2000, repeats=2)
    assert b["mean"] > 0
    print("sbrl smoke test ok")


if __name__ == "__main__":
    main()
