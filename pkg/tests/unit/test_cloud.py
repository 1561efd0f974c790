import os

import numpy as np
import pytest

from spdmlr.core.error import DimensionError, NotPositiveDefiniteError, ValidationError
from spdmlr.geometry.metrics import MetricSpec
from spdmlr.harness.cloud import (
    cloud_header,
    format_cloud,
    parse_cloud,
    parse_matrix_2x2,
    write_cloud,
)
from spdmlr.models.classifier import CloudPoint, Hyperplane

SHIFT = np.array([[1.5, 0.3], [0.3, 1.0]])
NORMAL = np.array([[1.0, 0.0], [0.0, -1.0]])


def test_parse_matrix_2x2():
    np.testing.assert_array_equal(
        parse_matrix_2x2(["1", "2", "3"], "shift"), [[1.0, 2.0], [2.0, 3.0]]
    )
    np.testing.assert_array_equal(parse_matrix_2x2([1, 2, 2, 3], "shift"), [[1.0, 2.0], [2.0, 3.0]])
    with pytest.raises(DimensionError) as excinfo:
        parse_matrix_2x2([1, 0, 0, 0, 1, 0, 0, 0, 1], "normal")
    assert "normal" in str(excinfo.value)
    with pytest.raises(ValidationError) as excinfo:
        parse_matrix_2x2(["a", "0", "1"], "--shift")
    assert "--shift" in str(excinfo.value)


def test_cloud_header():
    lem = Hyperplane(MetricSpec.lem(1.0, 0.5), SHIFT, NORMAL)
    assert cloud_header(lem) == "# n=2 metric=lem params=alpha=1,beta=0.5"
    lcm = Hyperplane(MetricSpec.lcm(0.5), SHIFT, NORMAL)
    assert cloud_header(lcm) == "# n=2 metric=lcm params=theta=0.5"


def test_format_and_parse_cloud():
    H = Hyperplane(MetricSpec.lem(), SHIFT, NORMAL)
    points = [CloudPoint(1.5, 0.3, 1.0, True), CloudPoint(2.0, -0.25, 0.5, False)]
    header, rows = parse_cloud(format_cloud(H, points))
    assert header == cloud_header(H)
    np.testing.assert_array_equal(rows, [[1.5, 0.3, 1.0, 1.0], [2.0, -0.25, 0.5, 0.0]])


def test_write_cloud(test_dir):
    path = os.path.join(test_dir, "cloud.txt")
    H, points = write_cloud(path, MetricSpec.lcm(0.5), SHIFT, NORMAL, resolution=15, band=0.1)
    with open(path) as f:
        header, rows = parse_cloud(f.read())
    assert header == "# n=2 metric=lcm params=theta=0.5"
    assert rows.shape == (len(points), 4)
    np.testing.assert_array_equal(rows[0, :3], [1.5, 0.3, 1.0])
    assert rows[0, 3] == 1.0
    assert np.all(rows[:, 0] > 0)
    assert np.all(rows[:, 0] * rows[:, 2] > rows[:, 1] ** 2)


def test_write_cloud_rejects_non_spd_shift(test_dir):
    with pytest.raises(NotPositiveDefiniteError):
        write_cloud(
            os.path.join(test_dir, "cloud.txt"), MetricSpec.lem(), np.diag([1.0, -1.0]), NORMAL
        )
