# SPDX-License-Identifier: Apache-2.0
import json
import math
import pathlib

import numpy as np
import pytest

import mfss

ROOT = pathlib.Path(__file__).resolve().parents[2]


def test_estimator_examples():
    assert mfss.optimal_a(0.96, 0.04, 0.01) == pytest.approx(1.92)
    assert mfss.optimal_ratio(1.0, 0.01, 0.0) == 0.0
    assert mfss.mfmc_variance(0.09, 10, 9.0, 0.9) == pytest.approx(0.00252)
    n = mfss.equivalent_count(11, 3998 / 11, 0.9640)
    assert abs(n.rounded - 150) <= 1
    assert mfss.speedup(150, 11, 13, 3998, 1e4) == pytest.approx(6.15, abs=0.01)
    al = mfss.budget_allocation(100.0, 1.0, 0.01, 9.0)
    assert (al.n_hf, al.n_lf) == (91, 819)


def test_degenerate_equalities():
    h = [0.0, 1.0, 0.0, 0.0, 1.0]
    g = mfss.gss_estimate([h], [1.0])
    assert g.estimate == sum(h) / len(h)
    e = mfss.mfmc_stratum_estimate([0.2, 0.4], [0.1, 0.5], [0.1, 0.5, 0.9], 0.0)
    assert e.estimate == pytest.approx(0.3)
    assert mfss.consequence(0.3, 0.3, "kernel", 0.1) == 0.5
    assert mfss.consequence(0.31, 0.3) == 1.0


def test_errors_carry_exit_codes():
    with pytest.raises(mfss.Error) as info:
        mfss.optimal_ratio(1.0, 0.01, 1.0)
    assert info.value.exit_code == 2
    with pytest.raises(mfss.Error):
        mfss.mfss_aggregate([0.1], [0.0], [0.5, 0.5])


def test_strata_bookkeeping():
    counts = [9214, 409884, 1727907, 1992292, 1149570, 472190, 164928, 52417, 15599, 5999]
    p = mfss.probabilities_from_counts(counts, 6_000_000)
    assert [round(v, 4) for v in p] == [0.0015, 0.0683, 0.2880, 0.3320, 0.1916, 0.0787, 0.0275, 0.0087, 0.0026, 0.0010]


def test_wavelet_round_trip():
    x = list(np.sin(np.linspace(0, 20, 600)) + 0.1 * np.cos(np.arange(600)))
    bands = mfss.wavedec(x, 3)
    assert len(bands) == 4
    back = mfss.waverec(bands, len(x), 3)
    assert np.max(np.abs(np.array(back) - x)) < 1e-10


def test_wavelet_matches_pywt():
    pywt = pytest.importorskip("pywt")
    x = np.random.default_rng(3).standard_normal(256)
    ours = mfss.wavedec(list(x), 2)
    ref = pywt.wavedec(x, "db4", mode="symmetric", level=2)
    for a, b in zip(ours, ref):
        assert np.allclose(a, b, atol=1e-12)


def test_pod_basis():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((6, 3)) @ rng.standard_normal((3, 40))
    phi, sv, energy = mfss.pod_basis(x, 0.999)
    assert phi.shape[0] == 6 and phi.shape[1] <= 3
    assert np.allclose(phi.T @ phi, np.eye(phi.shape[1]), atol=1e-10)
    assert energy >= 0.999


def test_simulate_sample():
    load, disp, sv = mfss.simulate(str(ROOT / "configs" / "cheap.json"), 0)
    assert load.shape[0] == 3 and disp.shape[0] == 3
    assert math.isfinite(sv) and sv > 0


def test_cheap_pipeline(tmp_path):
    cfg = str(ROOT / "configs" / "cheap.json")
    out = str(tmp_path / "run")
    mfss.run_phase1(cfg, out)
    mfss.run_train(cfg, out)
    mfss.run_estimate(cfg, out, workers=2)
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert report["method"] == "mfss"
    assert len(report["limit_states"]) == 2
    assert all(ls["estimate"] >= 0 for ls in report["limit_states"])
