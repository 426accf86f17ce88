import json
import math

import numpy as np
import pytest

from choquard.analysis import (COVERAGE, appendix_decay_suite, check, consistency_suite, far_field_error,
                               kkstar_decay_of_convolution, write_checks)
from choquard.radial import RadialMesh, RadialProfile, UnreliableWindow


def model_profile(values_fn, r_max=30.0, m=3000, lam=1.0, p=2.0):
    mesh = RadialMesh(r_max, m)
    return RadialProfile(mesh.r, values_fn(mesh.r), lam, 3, 1.0, p, r_max, 0, 0, 0, 0, 0, True, 0)


def by_name(results):
    return {c.name: c for c in results}


def test_check_window_semantics():
    assert check("a", 1.0, 0.0, 1.0).passed
    assert not check("a", 1.0 + 1e-15, 0.0, 1.0).passed
    with pytest.raises(ValueError):
        check("a", 0.5, 1.0, 0.0)
    assert check("a", 1, 0, 2, {"x": 1}).context_hash == check("b", 3, 0, 4, {"x": 1}).context_hash


def test_synthetic_profile_passes_all():
    prof = model_profile(lambda r: np.exp(-r) / r, p=2.5)
    res = appendix_decay_suite(prof)
    assert len(res) == 4 and all(c.passed for c in res)


def test_p_above_two_ground_state_window(ground_p25):
    res = by_name(appendix_decay_suite(ground_p25))
    assert res["decay_rate_u"].passed and res["decay_rate_grad_u"].passed
    assert res["decay_rate_u"].lo == pytest.approx(0.98) and res["decay_rate_u"].hi == pytest.approx(1.05)


def test_p_two_rate_window(ground_p2):
    res = by_name(appendix_decay_suite(ground_p2))
    assert res["decay_rate_u"].lo == pytest.approx(math.sqrt(0.9))
    assert res["decay_rate_u"].passed and res["decay_rate_grad_u"].passed


def test_short_domain_rejected():
    prof = model_profile(lambda r: np.exp(-r) / r, r_max=5.0, m=500)
    with pytest.raises(UnreliableWindow, match="window outside reliable tail"):
        appendix_decay_suite(prof)


def test_unconverged_rejected(ground_p2):
    bad = RadialProfile(ground_p2.r, ground_p2.values, 1.0, 3, 1.0, 2.0, 30.0, 0, 0, 0, 1, 1, False, 5)
    with pytest.raises(ValueError):
        appendix_decay_suite(bad)


def test_convolution_tail_of_ground_state(ground_p2):
    res = by_name(kkstar_decay_of_convolution(ground_p2))
    assert res["kkstar_tail_power"].passed
    assert res["kkstar_tail_max_increment"].passed


def test_zero_profile_convolution():
    res = kkstar_decay_of_convolution(model_profile(np.zeros_like))
    assert len(res) == 1 and res[0].passed and res[0].measured == 0.0


def test_compact_source_far_field():
    prof = model_profile(lambda r: np.where(r < 1, (1 - r * r) ** 2, 0.0), r_max=10.0, m=4000)
    assert far_field_error(prof, support=1.0) <= 1e-6


def test_consistency_suite_and_outputs(tmp_path):
    res = consistency_suite(seed=3)
    assert all(c.passed for c in res), [(c.name, c.measured) for c in res]
    assert res == consistency_suite(seed=3)
    write_checks(res, tmp_path)
    rows = (tmp_path / "checks.csv").read_text().splitlines()
    assert rows[0] == "name,measured,lo,hi,pass" and len(rows) == len(res) + 1
    payload = json.loads((tmp_path / "checks.json").read_text())
    assert set(payload["coverage"]) <= set(COVERAGE)
