"""Smoke test for the roadex extension module; run with pytest or directly."""

import json
import tempfile
from pathlib import Path

import roadex


def test_evaluate_identical_masks():
    mask = [[c == 5 for c in range(12)] for _ in range(12)]
    report = roadex.evaluate_masks(mask, mask, rho=2.0)
    assert report["q"] == 1.0
    assert report["tp"] == 12


def test_area_metrics_disjoint():
    a = [[c < 3 for c in range(6)] for _ in range(4)]
    b = [[c >= 3 for c in range(6)] for _ in range(4)]
    assert roadex.evaluate_area_masks(a, b)["q"] == 0.0


def test_synth_and_run():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        road, centerline = roadex.synth("straight", size=200, width=10.0, noise=5.0, seed=1, out_dir=tmp, id="s")
        assert len(road) == 200 and sum(map(sum, centerline)) > 0
        cfg = {"superpixel.ks": "700,900", "mjcr.samples_per_class": "20", "tv.road_width": "10"}
        report = roadex.run(
            tmp / "s.png", tmp / "out", road=tmp / "s_road.png", centerline=tmp / "s_centerline.png", config=cfg
        )
        assert report["q"] >= 0.9
        manifest = json.loads((tmp / "out" / "manifest.json").read_text())
        assert manifest["command"] == "python"


def test_bad_config_raises():
    try:
        roadex.run("missing.png", "out", config={"bogus": "1"})
    except ValueError as e:
        assert "[config]" in str(e)
    else:
        raise AssertionError("expected ValueError")


if __name__ == "__main__":
    test_evaluate_identical_masks()
    test_area_metrics_disjoint()
    test_synth_and_run()
    test_bad_config_raises()
    print("roadex", roadex.__version__, "smoke test ok")
