import itertools
import math
import subprocess

import numpy as np
import pytest

import flockdet


def brute_dtw(a, b):
    n, m = len(a), len(b)
    best = math.inf

    def walk(i, j, acc):
        nonlocal best
        acc += math.dist(a[i], b[j])
        if i == n - 1 and j == m - 1:
            best = min(best, acc)
            return
        if i + 1 < n:
            walk(i + 1, j, acc)
        if j + 1 < m:
            walk(i, j + 1, acc)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, acc)

    walk(0, 0, 0.0)
    return best


def test_dtw_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(30):
        a = rng.normal(size=(rng.integers(1, 6), 2))
        b = rng.normal(size=(rng.integers(1, 6), 2))
        assert flockdet.dtw_distance(a, b) == pytest.approx(brute_dtw(a, b), abs=1e-9)
        assert flockdet.fast_dtw_distance(a, b, radius=8) == pytest.approx(brute_dtw(a, b), abs=1e-9)


def test_dtw_rejects_bad_shape():
    with pytest.raises(ValueError):
        flockdet.dtw_distance(np.zeros((3, 3)), np.zeros((3, 2)))


def test_normalize_angle():
    assert flockdet.normalize_angle(math.pi) == pytest.approx(-math.pi)
    assert flockdet.normalize_angle(0.25) == 0.25


def test_aggregate_is_transitive():
    preds = [(1, 2, 0.95, 1), (2, 3, 0.97, 1), (1, 3, 0.1, 0), (4, 5, 0.2, 0)]
    flocks, singletons = flockdet.aggregate_flocks(preds, [1, 2, 3, 4, 5])
    assert flocks == [[1, 2, 3]]
    assert sorted(singletons) == [4, 5]


def test_synthetic_and_features():
    tracks, groups = flockdet.generate_synthetic({"n_flocks": "3", "n_singletons": "2", "rng_seed": "7"})
    assert len(groups) == 6
    (a, size, partners), *_ = groups
    assert size == 2 and len(partners) == 1
    ta, tb = tracks[a][:10], tracks[partners[0]][:10]
    m = flockdet.featurize_pair(ta, tb)
    assert m.shape == (10, len(flockdet.FEATURE_NAMES))
    assert list(flockdet.FEATURE_NAMES)[0] == "interDistance"
    assert np.all(m[:, 0] >= 0)


def test_checkpoint_from_cli(tmp_path):
    import shutil

    exe = shutil.which("flockctl")
    if exe is None:
        pytest.skip("flockctl not on PATH")
    run = lambda *args: subprocess.run([exe, *args], check=True, capture_output=True)
    run("synth", "--out", str(tmp_path / "s"), "--flocks", "6", "--singletons", "12", "--duration-ms", "8000")
    run("prepare", "--input", str(tmp_path / "s/trajectories.csv"), "--groups", str(tmp_path / "s/groups.dat"),
        "-L", "10", "--out", str(tmp_path / "p"))
    run("train", "--data", str(tmp_path / "p/pairs"), "--epochs", "2", "--hidden", "4", "--out", str(tmp_path / "m.ckpt"))
    model = flockdet.Model.load(tmp_path / "m.ckpt")
    assert model.sequence_length == 10
    tracks, _ = flockdet.generate_synthetic({"n_flocks": "1", "n_singletons": "0"})
    a, b = (t[:10] for t in tracks.values())
    p, label = model.predict_pair(a, b, threshold=0.9)
    assert 0.0 < p < 1.0 and label == int(p >= 0.9)
    assert model.forward(flockdet.featurize_pair(a, b)) == pytest.approx(p, abs=0)
    with pytest.raises(flockdet.FlockError):
        flockdet.Model.load(tmp_path / "missing.ckpt")
