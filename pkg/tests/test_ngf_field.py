import numpy as np
import pytest

from sqnreg.grid_image import Grid, Image
from sqnreg.ngf_field import (
    EdgeParameter,
    VectorField,
    gradient,
    gradient_matrix,
    normalize,
    normalize_array,
)
from sqnreg.schatten import spectrum


def image_from_function(dims, fn, spacing=(1.0, 1.0)):
    grid = Grid(dims, spacing, (0.0, 0.0))
    pts = grid.node_coords()
    return Image(grid, fn(pts))


class TestGradient:
    def test_constant_is_zero(self):
        img = Image.from_array(np.full((5, 5), 42.0))
        fld = gradient(img)
        np.testing.assert_array_equal(fld.vectors, np.zeros((25, 2)))

    def test_ramp(self):
        img = image_from_function((6, 6), lambda p: 3.0 * p[:, 0])
        g = gradient(img).vectors.reshape(6, 6, 2)
        np.testing.assert_allclose(g[..., 0], 3.0, atol=1e-12)
        np.testing.assert_allclose(g[..., 1], 0.0, atol=1e-12)

    def test_quadratic_exact_on_interior(self):
        img = image_from_function((7, 5), lambda p: p[:, 0] ** 2)
        g = gradient(img).vectors.reshape(7, 5, 2)
        x = img.grid.axis_coords(0)
        # central difference of x^2 equals 2x exactly on interior nodes
        for i in range(1, 6):
            np.testing.assert_allclose(g[i, :, 0], 2.0 * x[i], atol=1e-10)

    def test_spacing_respected(self):
        img = image_from_function((5, 5), lambda p: p[:, 1], spacing=(0.25, 0.25))
        g = gradient(img).vectors.reshape(5, 5, 2)
        np.testing.assert_allclose(g[..., 1], 1.0, atol=1e-12)


class TestNormalize:
    def test_zero_gradient_stays_zero(self):
        out = normalize_array(np.array([[0.0, 0.0]]), 0.5)
        np.testing.assert_array_equal(out, [[0.0, 0.0]])

    def test_unit_direction_limit(self):
        out = normalize_array(np.array([[3.0, 4.0]]), 1e-5)
        np.testing.assert_allclose(out, [[0.6, 0.8]], atol=1e-9)
        assert abs(np.linalg.norm(out) - 1.0) < 1e-9

    def test_norm_equals_eta_case(self):
        out = normalize_array(np.array([[1.0, 0.0]]), 1.0)
        np.testing.assert_allclose(out, [[1.0 / np.sqrt(2.0), 0.0]])

    def test_norms_below_one(self, rng):
        g = rng.normal(scale=100.0, size=(500, 2))
        out = normalize_array(g, 1e-5)
        norms = np.linalg.norm(out, axis=1)
        assert np.all(norms < 1.0)

    def test_scale_directional_identity(self, rng):
        g = rng.normal(size=(50, 2))
        a = normalize_array(3.0 * g, 3.0 * 0.7)
        b = normalize_array(g, 0.7)
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)

    def test_field_wrapper(self):
        grid = Grid.unit((2, 2))
        fld = VectorField(grid, np.tile([3.0, 4.0], (4, 1)))
        out = normalize(fld, EdgeParameter(1e-8))
        np.testing.assert_allclose(out.vectors, np.tile([0.6, 0.8], (4, 1)), atol=1e-9)

    def test_eta_must_be_positive(self):
        with pytest.raises(ValueError):
            EdgeParameter(0.0)


class TestGradientMatrix:
    def test_identical_fields_rank_one(self, rng):
        grid = Grid.unit((3, 3))
        vecs = normalize_array(rng.normal(size=(9, 2)), 1e-5)
        fld = VectorField(grid, vecs)
        A = gradient_matrix([fld, fld, fld])
        assert A.shape == (9, 2, 3)
        for node in range(9):
            sig = spectrum(A[node]).sigma
            # Gram-side eigensolve resolves a zero singular value only to
            # the square root of machine precision
            assert sig[1] < 1e-7

    def test_orthogonal_unit_columns(self):
        grid = Grid.unit((2, 2))
        a = VectorField(grid, np.tile([1.0, 0.0], (4, 1)))
        b = VectorField(grid, np.tile([0.0, 1.0], (4, 1)))
        A = gradient_matrix([a, b])
        np.testing.assert_allclose(spectrum(A[0]).sigma, [1.0, 1.0], atol=1e-12)

    def test_collinear_columns(self):
        grid = Grid.unit((2, 2))
        v = VectorField(grid, np.tile([0.6, 0.8], (4, 1)))
        A = gradient_matrix([v, v])
        np.testing.assert_allclose(spectrum(A[0]).sigma, [np.sqrt(2.0), 0.0], atol=1e-12)

    def test_grid_mismatch(self):
        a = VectorField(Grid.unit((2, 2)), np.zeros((4, 2)))
        b = VectorField(Grid.unit((3, 3)), np.zeros((9, 2)))
        with pytest.raises(ValueError):
            gradient_matrix([a, b])
