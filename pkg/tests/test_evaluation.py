import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vaeinfocgan import io
from vaeinfocgan.evaluation import (MODEL_ORDER, EvaluationError, apnd, apnd_terms, compare_models,
                                    copy_predictor, render_table, write_report, zero_predictor)


def _pairs(xs, fn):
    return [(x, fn(x)) for x in xs]


@pytest.fixture
def rasters():
    rng = np.random.default_rng(0)
    return [rng.poisson(3.0, size=(8, 8, 1)).astype(float) + 1 for _ in range(5)]


def test_analytic_cases(rasters):
    assert apnd(_pairs(rasters, lambda x: x)) == 0.0
    assert apnd(_pairs(rasters, np.zeros_like)) == pytest.approx(100.0, abs=1e-12)
    assert apnd(_pairs(rasters, lambda x: 2 * x)) == pytest.approx(100.0, abs=1e-12)


def test_hand_computed_three_pairs():
    x1, x2, x3 = np.array([3.0, 4.0]), np.array([1.0, 0.0, 0.0]), np.array([[2.0]])
    # ||x1||=5, error (1.5, 2) has norm 2.5 -> 0.5; x2 error norm 1 -> 1.0; x3 error 3 -> 1.5
    pairs = [(x1, x1 * 1.5), (x2, np.array([2.0, 0.0, 0.0])), (x3, np.array([[5.0]]))]
    res = apnd_terms(pairs)
    assert res.terms == pytest.approx([0.5, 1.0, 1.5], abs=1e-12)
    assert res.value == pytest.approx(100.0, abs=1e-6)


@pytest.mark.parametrize("k", [2.0, 10.0])
def test_scale_invariance_exact(rasters, k):
    rng = np.random.default_rng(1)
    gen = [x + rng.integers(-1, 2, size=x.shape) for x in rasters]
    base = apnd(list(zip(rasters, gen)))
    scaled = apnd([(k * x, k * g) for x, g in zip(rasters, gen)])
    assert scaled == base


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(0.1, 100)), st.floats(1e-6, 10))
def test_relative_deviation_property(x, eps):
    assert apnd([(x, (1 + eps) * x)]) == pytest.approx(100 * eps, rel=1e-9)


def test_zero_ground_truth_skipped():
    res = apnd_terms([(np.zeros(4), np.ones(4)), (np.ones(4), np.ones(4))])
    assert res.skipped == 1 and res.evaluated == 1 and res.value == 0.0
    with pytest.raises(EvaluationError):
        apnd([(np.zeros(4), np.ones(4))])


def test_shape_mismatch():
    with pytest.raises(EvaluationError):
        apnd([(np.ones(4), np.ones(5))])


def test_hcrm_norm_spans_all_channels():
    x = np.zeros((2, 2, 12))
    x[0, 0, 3] = 3.0
    x[1, 1, 7] = 4.0
    g = x.copy()
    g[1, 1, 7] = 0.0
    assert apnd([(x, g)]) == pytest.approx(80.0)


def test_compare_models_report(toy_dataset, toy_runs):
    ckpts = {"CRM": dict(toy_runs)}
    report = compare_models(ckpts, toy_dataset, seed=0,
                            extra={"perfect-copy": copy_predictor, "all-zero-stub": zero_predictor})
    test_size = len(toy_dataset.split("test"))
    assert report["test_size"] == test_size
    for name in MODEL_ORDER:
        crm = report["results"][name]["CRM"]
        assert crm["apnd"] >= 0 and crm["evaluated"] + crm["skipped"] == test_size
        assert report["results"][name]["HCRM"] is None
    assert report["references"]["perfect-copy"]["CRM"]["apnd"] == 0.0
    assert report["references"]["all-zero-stub"]["CRM"]["apnd"] == pytest.approx(100.0)
    table = render_table(report)
    assert all(name in table for name in MODEL_ORDER)
    assert "CRM" in table and "HCRM" in table
    assert compare_models(ckpts, toy_dataset, seed=0) == compare_models(ckpts, toy_dataset, seed=0)


def test_report_files_are_deterministic(toy_dataset, toy_runs, tmp_path):
    ckpts = {"CRM": {"VAE-Info-cGAN": toy_runs["VAE-Info-cGAN"]}}
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        write_report(compare_models(ckpts, toy_dataset, seed=3), tmp_path / d)
    assert io.tree_hashes(tmp_path / "a") == io.tree_hashes(tmp_path / "b")


def test_compare_models_rejects_other_dataset(toy_runs, tmp_path):
    from vaeinfocgan.dataset import Dataset, SimConfig, simgen

    other = Dataset(simgen(SimConfig(patches=12, n=16), 5, tmp_path / "other"))
    with pytest.raises(EvaluationError):
        compare_models({"CRM": {"VAE-Info-cGAN": toy_runs["VAE-Info-cGAN"]}}, other)


def test_compare_models_rejects_kind_mismatch(toy_dataset, toy_runs):
    with pytest.raises(EvaluationError):
        compare_models({"CRM": {"cVAE-PLC": toy_runs["cGAN-PLC"]}}, toy_dataset)
