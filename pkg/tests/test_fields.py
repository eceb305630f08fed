"""Point location, field evaluation helpers and post-processing transforms."""
import numpy as np
import pytest

from igacohom import fixtures as F
from igacohom.fields import (
    PointNotFoundError,
    at_time,
    inverse_map,
    line_points,
    locate,
    signed_magnitude,
)
from igacohom.splinecore import greville_points


class TestInverseMap:
    @pytest.mark.parametrize("name", ["quarter", "washer"])
    def test_greville_round_trip(self, name):
        geom = (F.quarter_annulus_geometry() if name == "quarter" else F.circular_washer()).discretize(2, 2)
        for q in range(min(geom.num_patches, 6)):
            patch = geom.patches[q]
            g = [greville_points(kv) for kv in geom.kvs[q]]
            z, y, x = np.meshgrid(g[2], g[1], g[0], indexing="ij")
            xi = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
            X, _, _ = patch.point_geometry(xi)
            for a, b in zip(xi, X):
                np.testing.assert_allclose(inverse_map(patch, b), a, atol=1e-12)

    def test_outside_point(self):
        patch = F.unit_cube().patches[0]
        assert inverse_map(patch, [1.5, 0.5, 0.5]) is None

    def test_locate_prefers_lowest_patch(self):
        geom = F.two_patch_cube()
        q, xi = locate(geom, [1.0, 0.5, 0.5])  # on the shared face
        assert q == 0
        np.testing.assert_allclose(xi, [1.0, 0.5, 0.5], atol=1e-12)
        q, xi = locate(geom, [1.5, 0.5, 0.5])
        assert q == 1

    def test_point_not_found(self):
        with pytest.raises(PointNotFoundError):
            locate(F.unit_cube(), [2.0, 0.0, 0.0])


class TestTransforms:
    def test_signed_magnitude(self):
        z = np.array([3 + 4j, -3 + 4j, 1j, 0.0, -2.0])
        np.testing.assert_allclose(signed_magnitude(z), [5, -5, 1, 0, -2])

    def test_imaginary_input_counts_as_positive(self):
        assert signed_magnitude(2.5j) == 2.5

    def test_at_time(self):
        z, w = 2.0 + 3.0j, 100.0
        assert at_time(z, w, 0.0) == 2.0
        assert at_time(z, w, np.pi / (2 * w)) == pytest.approx(-3.0, rel=1e-14)

    def test_line_points(self):
        p = line_points([0, 0, 0], [1, 2, 3], 3)
        np.testing.assert_allclose(p, [[0, 0, 0], [0.5, 1, 1.5], [1, 2, 3]])
        with pytest.raises(ValueError, match="at least 2"):
            line_points([0, 0, 0], [1, 0, 0], 1)
