import os
from pathlib import Path

import numpy as np
import pytest

import pdl1

DATA = Path(os.environ.get("PDL1_TEST_DATA", Path(__file__).resolve().parents[1] / "data"))


def test_version():
    assert pdl1.__version__


def test_lab_white_and_black():
    L, a, b = pdl1.srgb_to_lab(255, 255, 255)
    assert L == pytest.approx(100.0, abs=1e-9)
    assert abs(a) < 1e-9 and abs(b) < 1e-9
    assert pdl1.srgb_to_lab(0, 0, 0) == (0.0, 0.0, 0.0)


def test_ciede2000_pairs():
    rows = [line.split() for line in (DATA / "ciede2000_pairs.txt").read_text().splitlines()
            if line and not line.startswith("#")]
    assert len(rows) == 34
    for r in rows:
        v = [float(x) for x in r]
        assert pdl1.ciede2000(v[0:3], v[3:6]) == pytest.approx(v[6], abs=1e-4)
        assert pdl1.ciede2000(v[3:6], v[0:3]) == pytest.approx(v[6], abs=1e-4)


def test_distances():
    assert pdl1.distance_to_white(238, 238, 238) == pytest.approx(0.0, abs=1e-9)
    assert pdl1.distance_to_white(255, 255, 255) == pytest.approx(3.4666, abs=1e-4)
    assert pdl1.distance_to_white(0, 0, 0) == pytest.approx(91.8583, abs=1e-4)


def test_input_domain_error():
    with pytest.raises(ValueError):
        pdl1.srgb_to_lab(300, 0, 0)


def test_slide_roi_and_histogram(tmp_path):
    pixels, truth = pdl1.generate_slide(seed=3, stain_fraction=0.05)
    assert pixels.dtype == np.uint8 and pixels.shape[2] == 3
    assert truth["label"] == 1

    path = tmp_path / "s.ppm"
    pdl1.save_slide(pixels, path)
    assert np.array_equal(pdl1.load_slide(path), pixels)

    mask, fractions = pdl1.identify_roi(pixels, truth["artifact_mask"])
    assert mask.shape == truth["roi"].shape == fractions.shape
    inter = np.logical_and(mask, truth["roi"]).sum()
    union = np.logical_or(mask, truth["roi"]).sum()
    assert inter / union >= 0.9

    counts, features = pdl1.brown_histogram(pixels, mask)
    assert len(counts) == 100 and len(features) == 100
    assert sum(counts) == int(mask.sum()) * 64 * 64


def test_baseline_separates_stain():
    counts, labels = [], []
    for i in range(6):
        stain = 0.05 if i % 2 else 0.0
        pixels, truth = pdl1.generate_slide(seed=40 + i, stain_fraction=stain)
        mask, _ = pdl1.identify_roi(pixels, truth["artifact_mask"])
        counts.append(pdl1.brown_histogram(pixels, mask)[0])
        labels.append(truth["label"])
    t_bin, t_cls, acc = pdl1.baseline_train(counts, labels)
    assert 0 <= t_bin < 100 and 0.0 <= t_cls <= 1.0
    assert acc == 1.0


def test_kmeans_two_clouds():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(-5, 0.1, (50, 2)), rng.normal(5, 0.1, (50, 2))])
    centroids, assignment, inertia = pdl1.kmeans(x, 2, seed=1)
    assert sorted(np.round(centroids[:, 0]).tolist()) == [-5.0, 5.0]
    assert len(set(assignment[:50])) == 1 and len(set(assignment[50:])) == 1
    assert inertia < 5.0


@pytest.mark.parametrize("family", ["rf", "svm"])
def test_classifier(family):
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (60, 2))
    y = (x[:, 0] + x[:, 1] > 0).astype(int).tolist()
    model = pdl1.train_classifier(x, y, family=family, folds=3, seed=2)
    assert model.chosen
    assert len(model.cv_accuracy) == 12
    pred = model.predict(x)
    assert np.mean(np.array(pred) == np.array(y)) >= 0.95


def test_render_metrics():
    assert pdl1.render_metrics(3, 1, 4, 0) == "87.50% (tp:3 fn:1 tn:4 fp:0)"


def test_set_threads_deterministic():
    pdl1.set_threads(1)
    try:
        a = pdl1.generate_slide(seed=9)[0]
        b = pdl1.generate_slide(seed=9)[0]
        assert np.array_equal(a, b)
    finally:
        pdl1.set_threads(0)
