"""Smoke test for the oodsim Python extension.

Build and install first:  pip install --no-build-isolation -e .
Then run:                 python python/smoke_test.py
"""

import json
import math
import os
import tempfile

import oodsim


def check_math():
    kl = oodsim.kl_per_dim([0.0, 1.0], [0.0, math.log(4.0)])
    assert kl[0] == 0.0
    # 0.5 * (4 + 1 - 1 - ln 4)
    assert abs(kl[1] - 0.5 * (4.0 + 1.0 - 1.0 - math.log(4.0))) < 1e-6
    assert oodsim.ood_score([1.0, 2.0, 3.0], [0, 2]) == 4.0
    assert oodsim.nearest_rank(0.8, 620) == 496
    assert oodsim.calibrate_threshold([3.0, 1.0, 2.0, 5.0, 4.0], 0.8) == 4.0
    assert oodsim.select_detectors([[0.1, 0.9, 0.5], [0.2, 0.8, 0.4]], 2) == [1, 2]
    try:
        oodsim.ood_score([1.0], [3])
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range subset accepted")


def check_scenario():
    sc = oodsim.Scenario()
    assert sc.obstacle == "duck"
    frame = sc.render(0.2)
    assert len(frame) == 640 * 480 * 3
    angle, confidence = oodsim.estimate_steering(frame, 640, 480)
    assert abs(angle) < 5.0 and confidence == "BothLanes", (angle, confidence)
    assert sc.oracle_score(0.0) == 1.0
    assert sc.oracle_score(0.5) > 1.0

    log = sc.run()
    assert log.end_reason == "Stopped", log
    assert 0.0 < log.stopping_distance < sc.obstacle_distance
    again = oodsim.RunLog.from_json(log.to_json())
    assert again.to_json() == log.to_json()
    assert log.hop_csv().startswith("seq,topic,stage,timestamp_ns")

    toml = sc.replace(seed=11, obstacle="cone").to_toml()
    assert oodsim.Scenario(toml).seed == 11


def check_campaign():
    logs = oodsim.run_campaign(oodsim.Scenario(), 8)
    assert len(logs) == 8
    stats = oodsim.campaign_stats(logs)
    assert stats["runs"] == 8 and stats["collisions"] == 0
    rows = oodsim.threshold_sweep(logs, [0.0, 1.0, 100.0])
    assert [r["collisions"] for r in rows][-1] == 8
    for a, b in zip(rows, rows[1:]):
        assert all(x >= y for x, y in zip(a["distances"], b["distances"]))
    s = oodsim.stopping_stats([0.3])
    assert s["median"] == s["ci95_low"] == s["ci95_high"] == 0.3


def check_model():
    m = oodsim.Model.random(3, latent_dim=8)
    crop = bytes([128]) * (128 * 48 * 3)
    mu, logvar = m.encode(crop, 128, 48)
    assert len(mu) == len(logvar) == 8
    assert all(k >= 0.0 for k in m.kl(crop, 128, 48))
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "encoder.bin")
        m.save(path)
        assert oodsim.Model.load(path).encode(crop, 128, 48) == (mu, logvar)


if __name__ == "__main__":
    check_math()
    check_scenario()
    check_campaign()
    check_model()
    print(json.dumps({"smoke_test": "ok"}))
