"""Smoke tests for the native _dtb module.

Run against the build tree: DTB_MODULE_DIR must point at the directory
holding the freshly built extension (ctest sets it automatically).
"""

import math
import os
import sys

import numpy as np
import pytest

module_dir = os.environ.get("DTB_MODULE_DIR")
if module_dir:
    sys.path.insert(0, module_dir)

dtb = pytest.importorskip("_dtb")


def test_version_string():
    assert dtb.version().startswith("dtb ")


def test_count_combinations_exact_values():
    assert dtb.count_combinations(23, 2, 2) == 253
    assert dtb.count_combinations(88, 2, 5) == 41_621_206
    assert dtb.count_combinations(88, 2, 6) == 583_552_442
    # Sum over all subset sizes is 2^n.
    assert dtb.count_combinations(20, 0, 20) == 2**20


def test_render_combination_shape_and_energy():
    samples = dtb.render_combination([60, 64], duration=0.2, sample_rate=8000.0)
    assert samples.dtype == np.float64
    assert samples.shape == (1600,)
    assert np.all(np.isfinite(samples))
    assert np.sqrt(np.mean(samples**2)) > 0.01
    assert np.max(np.abs(samples)) <= 1.0


def test_extract_features_shape():
    samples = dtb.render_combination([60], duration=0.3, sample_rate=44100.0)
    feats = dtb.extract_features(samples, 44100.0)
    assert feats.dtype == np.float32
    assert feats.ndim == 2
    assert feats.shape[1] == 229
    assert feats.shape[0] > 0
    assert np.all(np.isfinite(feats))
    assert np.all(feats >= 0.0)  # log(1 + magnitude) compression


def test_architecture_totals():
    assert dtb.total_params("CONVNET") == 1_877_880
    assert dtb.total_params("SMALLCONVNET") == 5_327
    assert dtb.total_params("AUNET") == 964_673
    for name in ("CONVNET", "SMALLCONVNET", "AUNET"):
        rows = dtb.architecture_table(name)
        assert sum(params for _, _, params in rows) == dtb.total_params(name)


def test_nmf_factorize_monotone():
    rng = np.random.default_rng(5)
    x = rng.uniform(0.0, 1.0, size=(20, 8)).astype(np.float32)
    result = dtb.nmf_factorize(x, rank=2, max_iters=200, tolerance=1e-12)
    assert result["w"].shape == (8, 2)
    assert result["h"].shape == (2, 20)
    history = result["error_history"]
    assert np.all(np.diff(history) <= 1e-9)
    assert np.all(result["w"] >= 0.0)
    assert np.all(result["h"] >= 0.0)


def test_nmf_rejects_negative_input():
    x = np.full((4, 3), -1.0, dtype=np.float32)
    with pytest.raises(dtb.DtbError):
        dtb.nmf_factorize(x, rank=1)


def test_framewise_prf_hand_counts():
    truth = np.array([[1, 0, 0], [0, 1, 0]], dtype=bool)
    pred = np.array([[1, 1, 0], [0, 0, 0]], dtype=bool)
    prf = dtb.framewise_prf(pred, truth)
    assert (prf["tp"], prf["fp"], prf["fn"]) == (1, 1, 1)
    assert prf["precision"] == pytest.approx(0.5)
    assert prf["recall"] == pytest.approx(0.5)
    assert prf["f_measure"] == pytest.approx(0.5)


def test_combination_stats_proportions():
    # Ground truth holds {60, 64} on every frame; the predictions realize
    # exact / addition / omission / both in turn.
    truth = np.zeros((4, 8), dtype=bool)
    truth[:, 0] = True
    truth[:, 4] = True
    pred = np.zeros((4, 8), dtype=bool)
    pred[0, [0, 4]] = True
    pred[1, [0, 4, 7]] = True
    pred[2, 0] = True
    pred[3, [0, 7]] = True
    stats = dtb.combination_stats(pred, truth, pitch_lo=60, min_frames=1)
    assert len(stats) == 1
    row = stats[0]
    assert row["combination"] == [60, 64]
    assert row["n_frames"] == 4
    assert row["p_exact"] == pytest.approx(0.25)
    assert row["p_additions"] == pytest.approx(0.5)
    assert row["p_omissions"] == pytest.approx(0.5)
    # Independent counts: the three proportions may exceed 1 in total.
    assert row["p_exact"] + row["p_additions"] + row["p_omissions"] > 1.0


def test_error_type_is_importable():
    assert issubclass(dtb.DtbError, Exception)
    with pytest.raises(dtb.DtbError):
        dtb.extract_features(np.zeros(10, dtype=np.float64), 44100.0, fft_size=1000)
