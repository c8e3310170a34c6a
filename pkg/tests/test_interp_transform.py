import numpy as np
import pytest

from sqnreg.grid_image import Grid, Image
from sqnreg.interp_transform import (
    DisplacementField,
    TranslationParams,
    interp,
    load_dfield,
    prolong,
    save_dfield,
    translation_to_field,
    warp,
)


def ramp_image(dims, slope=(1.0, 0.0), spacing=(1.0, 1.0)):
    grid = Grid(dims, spacing, (0.0, 0.0))
    pts = grid.node_coords()
    return Image(grid, pts @ np.asarray(slope))


class TestInterp:
    def test_reproduces_samples(self, rng):
        img = Image.from_array(rng.uniform(0, 255, size=(6, 5)))
        pts = img.grid.node_coords()
        vals, jacs = interp(img, pts)
        np.testing.assert_allclose(vals, img.values, atol=1e-12)
        assert jacs.shape == (30, 2)

    def test_midpoint_linear(self):
        img = Image.from_array(np.array([[0.0, 0.0], [1.0, 1.0]]))
        vals, jacs = interp(img, [[1.0, 0.5]])  # halfway between the two rows
        np.testing.assert_allclose(vals, [0.5])
        np.testing.assert_allclose(jacs[0], [1.0, 0.0])

    def test_jacobian_scales_with_spacing(self):
        img = ramp_image((4, 4), slope=(3.0, 0.0), spacing=(0.5, 0.5))
        vals, jacs = interp(img, [[1.0, 1.0]])
        np.testing.assert_allclose(jacs[0], [3.0, 0.0])

    def test_far_outside_is_zero(self):
        img = Image.from_array(np.full((4, 4), 9.0))
        vals, jacs = interp(img, [[-50.0, 2.0], [2.0, 1e6]])
        np.testing.assert_array_equal(vals, [0.0, 0.0])
        np.testing.assert_array_equal(jacs, np.zeros((2, 2)))

    def test_non_finite_point_rejected(self):
        img = Image.from_array(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            interp(img, [[np.nan, 1.0]])

    def test_jacobians_match_finite_differences(self, rng):
        img = Image.from_array(rng.uniform(0, 255, size=(8, 8)))
        pts = rng.uniform(1.5, 6.5, size=(20, 2))
        vals, jacs = interp(img, pts)
        step = 1e-5
        for ax in range(2):
            e = np.zeros(2)
            e[ax] = step
            hi, _ = interp(img, pts + e)
            lo, _ = interp(img, pts - e)
            fd = (hi - lo) / (2 * step)
            denom = np.maximum(np.abs(fd), 1e-6)
            assert np.max(np.abs(fd - jacs[:, ax]) / denom) < 1e-6


class TestWarp:
    def test_zero_field_is_identity(self, rng):
        img = Image.from_array(rng.uniform(0, 255, size=(6, 6)))
        warped, _ = warp(img, DisplacementField.zero(img.grid))
        np.testing.assert_allclose(warped, img.values, atol=1e-12)

    def test_constant_shift_on_ramp(self):
        img = ramp_image((6, 6), slope=(2.0, 0.0))
        fld = translation_to_field(TranslationParams((1.0, 0.0)), img.grid)
        warped, _ = warp(img, fld)
        inner = warped.reshape(6, 6)[:5, :]
        expected = img.array[1:, :]
        np.testing.assert_allclose(inner, expected, atol=1e-12)

    def test_everything_outside_gives_zeros(self):
        img = Image.from_array(np.full((4, 4), 7.0))
        fld = translation_to_field(TranslationParams((100.0, 0.0)), img.grid)
        warped, jacs = warp(img, fld)
        np.testing.assert_array_equal(warped, np.zeros(16))
        np.testing.assert_array_equal(jacs, np.zeros((16, 2)))

    def test_grid_mismatch(self):
        img = Image.from_array(np.zeros((4, 4)))
        fld = DisplacementField.zero(Grid.unit((5, 5)))
        with pytest.raises(ValueError):
            warp(img, fld)


class TestTranslation:
    def test_zero(self):
        fld = translation_to_field(TranslationParams((0.0, 0.0)), Grid.unit((3, 3)))
        np.testing.assert_array_equal(fld.u, np.zeros((9, 2)))

    def test_constant(self):
        fld = translation_to_field(TranslationParams((1.5, -2.0)), Grid.unit((3, 3)))
        np.testing.assert_array_equal(fld.u, np.tile([1.5, -2.0], (9, 1)))

    def test_additive(self):
        g = Grid.unit((3, 3))
        a = translation_to_field(TranslationParams((1.0, 2.0)), g)
        b = translation_to_field(TranslationParams((0.5, -1.0)), g)
        c = translation_to_field(TranslationParams((1.5, 1.0)), g)
        np.testing.assert_allclose(a.u + b.u, c.u)

    def test_mean_displacement(self):
        fld = translation_to_field(TranslationParams((2.0, -1.0)), Grid.unit((4, 4)))
        np.testing.assert_allclose(fld.mean_displacement(), [2.0, -1.0])


class TestProlong:
    @staticmethod
    def grids():
        coarse = Grid((4, 4), (2.0, 2.0), (0.0, 0.0))
        fine = Grid((8, 8), (1.0, 1.0), (0.0, 0.0))
        return coarse, fine

    def test_zero(self):
        coarse, fine = self.grids()
        out = prolong(DisplacementField.zero(coarse), fine)
        np.testing.assert_array_equal(out.u, np.zeros((64, 2)))

    def test_constant_preserved(self):
        coarse, fine = self.grids()
        fld = DisplacementField(coarse, np.tile([0.7, -0.3], (16, 1)))
        out = prolong(fld, fine)
        np.testing.assert_allclose(out.u, np.tile([0.7, -0.3], (64, 1)), atol=1e-12)

    def test_linear_reproduced_in_interior(self):
        coarse, fine = self.grids()
        u = coarse.node_coords().copy()
        out = prolong(DisplacementField(coarse, u), fine)
        pts = fine.node_coords()
        inner = np.all((pts > 1.0) & (pts < 7.0), axis=1)
        np.testing.assert_allclose(out.u[inner], pts[inner], atol=1e-12)

    def test_odd_dims(self):
        coarse = Grid((3, 4), (2.0, 2.0), (0.0, 0.0))
        fine = Grid((5, 8), (1.0, 1.0), (0.0, 0.0))
        fld = DisplacementField(coarse, np.tile([1.0, 1.0], (12, 1)))
        out = prolong(fld, fine)
        np.testing.assert_allclose(out.u, np.ones((40, 2)), atol=1e-12)

    def test_incompatible(self):
        coarse, _ = self.grids()
        with pytest.raises(ValueError):
            prolong(DisplacementField.zero(coarse), Grid.unit((11, 8)))


class TestDfieldIO:
    def test_round_trip(self, tmp_path, rng):
        grid = Grid((5, 3), (1.0, 2.0), (0.0, 0.0))
        fld = DisplacementField(grid, rng.normal(size=(15, 2)))
        save_dfield(fld, tmp_path / "f.dfield")
        back = load_dfield(tmp_path / "f.dfield")
        np.testing.assert_array_equal(back.u, fld.u)
        assert back.grid.dims == (5, 3)

    def test_header(self, tmp_path):
        fld = DisplacementField.zero(Grid.unit((4, 6)))
        save_dfield(fld, tmp_path / "f.dfield")
        data = (tmp_path / "f.dfield").read_bytes()
        header, payload = data.split(b"\n", 1)
        assert header == b"DFIELD 2 4 6"
        assert len(payload) == 4 * 6 * 2 * 8

    def test_corrupt_header(self, tmp_path):
        (tmp_path / "f.dfield").write_bytes(b"DFIELD x y\n")
        with pytest.raises(ValueError):
            load_dfield(tmp_path / "f.dfield")
