import numpy as np
import pytest

import spdmlr.core.constants as constants
from spdmlr.core.error import ConfigurationError, DimensionError
from spdmlr.geometry.metrics import MetricSpec
from spdmlr.harness.checks import equivalence_check, gradcheck, random_spd, relative_error


def test_random_spd(rng):
    S = random_spd(rng, 4, 10, condition=8.0)
    values = np.linalg.eigvalsh(S)
    assert S.shape == (10, 4, 4)
    assert np.all(values > 1.0 - 1e-9)
    assert np.all(values < 8.0 + 1e-9)


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)


def test_gradcheck_passes_for_every_head():
    report = gradcheck(seed=0)
    assert report.passed, report.failures
    assert report.heads() == sorted(
        [constants.HEAD_LOGEIG, constants.METRIC_LEM, constants.METRIC_LCM]
    )
    params = {entry.param for entry in report.entries}
    assert {"input", "bimap.0", "bimap.1", "head.shifts", "head.normals"} <= params
    assert all(error < constants.GRADCHECK_TOLERANCE for error in report.max_errors().values())


def test_gradcheck_flags_corrupted_gradient():
    report = gradcheck(seed=0, corrupt="head.normals")
    assert not report.passed
    assert {entry.param for entry in report.failures} == {"head.normals"}
    assert {entry.head for entry in report.failures} == {constants.METRIC_LEM, constants.METRIC_LCM}


def test_gradcheck_dimension_limit():
    with pytest.raises(DimensionError):
        gradcheck(widths=(16, 8))


def test_equivalence_at_start():
    report = equivalence_check(steps=0)
    assert len(report.spd_losses) == 1
    assert report.max_gap < 1e-12


def test_equivalence_under_lem_holds_over_training():
    report = equivalence_check(steps=100, seed=0)
    assert report.metric == "LEM(alpha=1,beta=0)"
    assert len(report.gaps) == 101
    assert report.max_gap < 1e-8
    assert report.spd_losses[-1] < report.spd_losses[0]


def test_equivalence_breaks_under_lcm():
    report = equivalence_check(steps=20, seed=0, metric=MetricSpec.lcm(1.0))
    assert report.max_gap > 1e-2


def test_equivalence_rejects_negative_steps():
    with pytest.raises(ConfigurationError):
        equivalence_check(steps=-1)
