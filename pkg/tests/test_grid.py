"""Grid geometry, normalized DFT, spectral operators, products and field files."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import random_band_field, raw_noise
from lpsw.errors import ConfigurationError
from lpsw.grid import (
    Field,
    Grid,
    SpectralField,
    band_limit,
    compose,
    dft_forward,
    dft_inverse,
    divergence,
    gradient,
    laplacian,
    pointwise_product,
    read_field,
    read_field_csv,
    translate,
    write_field,
    write_field_csv,
)


class TestGrid:
    def test_geometry(self):
        g = Grid(64, 8 * math.pi)
        assert g.spacing == pytest.approx(8 * math.pi / 64)
        assert g.k_unit == pytest.approx(0.25)
        assert g.k_nyquist == pytest.approx(8.0)
        assert g.modes.shape == (2, 64, 64)
        assert g.coords.shape == (2, 64, 64)

    def test_default_length(self):
        assert Grid(32).length == pytest.approx(32 * math.pi)

    @pytest.mark.parametrize("n", [0, 8, 15, 48, 100])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ConfigurationError, match="power of two"):
            Grid(n)

    @pytest.mark.parametrize("length", [0.0, -1.0, math.inf])
    def test_rejects_bad_lengths(self, length):
        with pytest.raises(ConfigurationError):
            Grid(16, length)

    def test_dealias_mask_keeps_two_thirds(self):
        g = Grid(16, 2 * math.pi)
        kept = np.unique(g.modes[0][g.dealias_mask])
        assert kept.min() == -5 and kept.max() == 5

    def test_field_shape_mismatch(self, grid16):
        with pytest.raises(ConfigurationError, match="does not match"):
            Field(grid16, np.zeros((8, 8)))


class TestTransforms:
    def test_constant_field(self, grid16):
        F = dft_forward(Field(grid16, np.full(grid16.shape, 2.5))).coeffs
        assert F[0, 0] == pytest.approx(2.5)
        F[0, 0] = 0
        assert np.max(np.abs(F)) < 1e-15

    def test_single_cosine(self, grid16):
        f = Field(grid16, oracles.cos_mode(16, grid16.length, (1, 0)))
        F = f.spectrum
        nz = np.argwhere(np.abs(F) > 1e-12)
        assert sorted(map(tuple, nz)) == [(1, 0), (15, 0)]
        assert F[1, 0] == pytest.approx(0.5) and F[15, 0] == pytest.approx(0.5)

    def test_matches_dense_dft(self, grid16):
        f = raw_noise(grid16, 1)
        np.testing.assert_allclose(f.spectrum, oracles.dense_dft(f.values), atol=1e-14)

    @given(st.integers(0, 2**31 - 1))
    def test_roundtrip(self, seed):
        g = Grid(32, 8 * math.pi)
        f = raw_noise(g, seed)
        back = dft_inverse(dft_forward(f)).values
        assert np.max(np.abs(back - f.values)) < 1e-12 * np.max(np.abs(f.values))

    def test_parseval_100_fields(self, grid32):
        g = grid32
        for seed in range(100):
            f = raw_noise(g, seed)
            phys = g.cell_area * np.sum(f.values**2)
            spec = g.length**2 * np.sum(np.abs(f.spectrum) ** 2)
            assert spec == pytest.approx(phys, rel=1e-11)

    def test_inverse_size_mismatch(self, grid16):
        with pytest.raises(ConfigurationError):
            dft_inverse(SpectralField(grid16, np.zeros((8, 8))))


class TestDerivatives:
    def test_gradient_of_sine(self, grid16):
        L = grid16.length
        f = Field.from_function(grid16, lambda x1, x2: np.sin(2 * np.pi * x1 / L))
        grad = gradient(f).values
        np.testing.assert_allclose(grad[0], (2 * np.pi / L) * np.cos(2 * np.pi * grid16.coords[0] / L), atol=1e-13)
        np.testing.assert_allclose(grad[1], 0.0, atol=1e-13)

    @given(st.integers(0, 10_000))
    def test_div_grad_is_laplacian(self, seed):
        g = Grid(32, 8 * math.pi)
        f = band_limit(raw_noise(g, seed))
        lhs = divergence(gradient(f)).values
        rhs = laplacian(f).values
        assert np.linalg.norm(lhs - rhs) <= 1e-11 * np.linalg.norm(rhs)

    @pytest.mark.parametrize("m", [(1, 0), (2, 3), (-4, 1)])
    def test_laplacian_eigenvalue(self, grid16, m):
        f = Field(grid16, oracles.cos_mode(16, grid16.length, m))
        k2 = (grid16.k_unit**2) * (m[0] ** 2 + m[1] ** 2)
        np.testing.assert_allclose(laplacian(f).values, -k2 * f.values, atol=1e-12)

    def test_gradient_rejects_vectors(self, grid16):
        with pytest.raises(ConfigurationError):
            gradient(Field.zeros(grid16, 2))

    def test_divergence_rejects_scalars(self, grid16):
        with pytest.raises(ConfigurationError):
            divergence(Field.zeros(grid16))

    def test_translate_matches_direct_sum(self, grid16):
        f = band_limit(raw_noise(grid16, 3))
        shift = (0.37, -1.1)
        expected = oracles.evaluate_trig(f.spectrum, grid16.length, shift)
        np.testing.assert_allclose(translate(f, shift).values, expected, atol=1e-12)


class TestProducts:
    def test_product_with_one(self, grid32):
        f = band_limit(raw_noise(grid32, 0))
        one = Field(grid32, np.ones(grid32.shape))
        np.testing.assert_allclose(pointwise_product(f, one).values, f.values, atol=1e-13)

    def test_cos_squared(self, grid32):
        L = grid32.length
        a = Field.from_function(grid32, lambda x1, x2: np.cos(2 * np.pi * (3 * x1 + 2 * x2) / L))
        x1, x2 = grid32.coords
        expected = 0.5 * (1 + np.cos(2 * np.pi * (6 * x1 + 4 * x2) / L))
        np.testing.assert_allclose(pointwise_product(a, a).values, expected, atol=1e-11)

    def test_matches_direct_convolution(self, grid16):
        a, b = raw_noise(grid16, 11), raw_noise(grid16, 12)
        expected = oracles.dealiased_product(a.values, b.values)
        np.testing.assert_allclose(pointwise_product(a, b).values, expected, atol=1e-12)

    def test_vector_times_scalar(self, grid16):
        v, s = raw_noise(grid16, 1, components=2), raw_noise(grid16, 2)
        out = pointwise_product(v, s).values
        for c in range(2):
            expected = pointwise_product(Field(grid16, v.values[c]), s).values
            np.testing.assert_allclose(out[c], expected, atol=1e-13)

    def test_grid_mismatch(self, grid16, grid32):
        with pytest.raises(ConfigurationError, match="grid mismatch"):
            pointwise_product(Field.zeros(grid16), Field.zeros(grid32))

    def test_compose_reproduces_polynomials(self, grid32, P32):
        # u^2 is exactly representable on the 4x grid, so composition equals the dealiased product
        u = random_band_field(P32, 5, amplitude=0.3)
        squared = compose(u, lambda x: x * x)
        np.testing.assert_allclose(squared.values, pointwise_product(u, u).values, atol=1e-13)

    def test_compose_rejects_bad_oversample(self, grid16):
        with pytest.raises(ConfigurationError):
            compose(Field.zeros(grid16), np.exp, oversample=3)


class TestFieldFiles:
    @pytest.mark.parametrize("components", [1, 2])
    def test_binary_roundtrip(self, tmp_path, grid16, components):
        f = raw_noise(grid16, 4, components)
        write_field(tmp_path / "f.bin", f)
        g = read_field(tmp_path / "f.bin")
        assert g.grid == grid16
        np.testing.assert_array_equal(g.values, f.values)

    def test_binary_layout(self, tmp_path, grid16):
        f = raw_noise(grid16, 4)
        write_field(tmp_path / "f.bin", f)
        data = (tmp_path / "f.bin").read_bytes()
        assert data[:4] == b"BSWF"
        assert len(data) == 4 + 4 + 8 + 4 + 8 * 16 * 16
        np.testing.assert_array_equal(np.frombuffer(data[20:], "<f8").reshape(16, 16), f.values)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "f.bin").write_bytes(b"XXXX" + bytes(100))
        with pytest.raises(ConfigurationError, match="magic"):
            read_field(tmp_path / "f.bin")

    def test_truncated_payload(self, tmp_path, grid16):
        write_field(tmp_path / "f.bin", raw_noise(grid16, 0))
        data = (tmp_path / "f.bin").read_bytes()
        (tmp_path / "f.bin").write_bytes(data[:-8])
        with pytest.raises(ConfigurationError, match="expected"):
            read_field(tmp_path / "f.bin")

    def test_csv_roundtrip(self, tmp_path, grid16):
        f = raw_noise(grid16, 9, 2)
        write_field_csv(tmp_path / "f.csv", f)
        g = read_field_csv(tmp_path / "f.csv")
        np.testing.assert_array_equal(g.values, f.values)
        assert g.grid == grid16
