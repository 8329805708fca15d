import json
import math
import os
import tempfile

import pymincurvfg as m


def test_track_and_curvature():
    t = m.load("ring")
    assert t["closed"]
    assert abs(t["length"] - 2 * math.pi * 1.2) < 0.05
    pts = [(math.cos(a), math.sin(a)) for a in [i * 2 * math.pi / 400 for i in range(401)]]
    k = m.cumulative_curvature(pts)
    assert abs(k - 399.0) < 1.0, k


def test_sdf():
    s = m.Sdf("ring", 0.01)
    d, gx, gy = s.query(1.1, 0.0)
    assert abs(d - 0.1) < 0.02, d
    assert abs(gx - 1.0) < 0.1 and abs(gy) < 0.1
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "ring.sdf")
        s.save(path)
        r = m.Sdf.load(path)
        assert r.shape == s.shape
        assert r.query(1.1, 0.0) == (d, gx, gy)


def test_lap():
    cfg = json.dumps({"planner": {"max_steps": 40}})
    lap = m.run_lap("ring", config=cfg)
    assert lap["outcome"] == "step_limit"
    assert len(lap["states"]) == len(lap["controls"]) + 1 == 41
    assert lap["metrics"]["mean_speed"] > 0.0


if __name__ == "__main__":
    test_track_and_curvature()
    test_sdf()
    test_lap()
    print("ok")
