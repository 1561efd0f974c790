import numpy as np

from spdmlr.core.error import DimensionError, ValidationError
from spdmlr.models.classifier import Hyperplane, hyperplane_cloud


def parse_matrix_2x2(values, what):
    """
    A symmetric 2x2 matrix from ``x y z`` (upper triangle) or four row-major entries.
    """
    try:
        values = [float(value) for value in values]
    except ValueError as e:
        raise ValidationError(f"{what} needs numeric values: {e}")
    if len(values) == 3:
        x, y, z = values
        return np.array([[x, y], [y, z]])
    if len(values) == 4:
        return np.array(values).reshape(2, 2)
    raise DimensionError(f"{what} needs 3 values (x y z) or 4 row-major entries, got {len(values)}")


def cloud_header(H):
    return f"# n=2 metric={H.metric.kind} params={H.metric.describe()}"


def format_cloud(H, points):
    lines = [cloud_header(H)]
    for point in points:
        lines.append(f"{point.x!r} {point.y!r} {point.z!r} {int(point.on_plane)}")
    return "\n".join(lines) + "\n"


def parse_cloud(content):
    """Parse cloud text back into ``(header, (N, 4) array)``."""
    lines = content.splitlines()
    header = lines[0]
    rows = [[float(value) for value in line.split()] for line in lines[1:] if line.strip()]
    return header, np.array(rows).reshape(len(rows), 4)


def write_cloud(path, metric, shift, normal, **grid):
    H = Hyperplane(metric, shift, normal)
    points = hyperplane_cloud(H, **grid)
    with open(path, "w") as f:
        f.write(format_cloud(H, points))
    return H, points
