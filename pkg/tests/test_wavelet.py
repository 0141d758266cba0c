import numpy as np
import pytest

from dpawno import wavelet as wv
from dpawno.errors import InconsistentCoeffLengths, SignalTooShort


def transform_matrix(n, spec):
    """Explicit transform matrix from unit-vector responses."""
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append(wv.dwt_multilevel(e, spec).ravel())
    return np.column_stack(cols)


class TestFilters:
    @pytest.mark.parametrize("family", wv.FAMILIES)
    def test_orthonormality_identities(self, family):
        h, g = wv.filters(family)
        taps = len(h)
        assert abs(np.sum(h) - np.sqrt(2)) < 1e-12
        assert abs(np.sum(h * h) - 1.0) < 1e-12
        for k in range(1, taps // 2):
            assert abs(np.dot(h[2 * k:], h[:-2 * k])) < 1e-12
        # analysis/synthesis pair reconstructs: checked as matrix identity
        lo, hi = wv.level_analysis(32, family, "periodic")
        s_lo, s_hi = wv.level_synthesis(32, family, "periodic")
        assert np.max(np.abs(s_lo @ lo + s_hi @ hi - np.eye(32))) < 1e-12

    def test_db6_has_twelve_taps(self):
        h, _ = wv.filters("db6")
        assert len(h) == 12


class TestDwt1d:
    def test_constant_signal_details_vanish(self):
        spec = wv.WaveletSpec("db6", 4, "periodic")
        c = wv.dwt_multilevel(np.full(64, 3.7), spec)
        for d in c.details:
            assert np.max(np.abs(d)) < 1e-13 * 3.7
        # approximation picks up 2^(levels/2) per coefficient
        assert np.allclose(c.approx, 3.7 * 2 ** (4 / 2), atol=1e-12)

    def test_zero_signal(self):
        spec = wv.WaveletSpec("db6", 3, "periodic")
        c = wv.dwt_multilevel(np.zeros(32), spec)
        assert np.all(c.approx == 0.0)
        assert all(np.all(d == 0.0) for d in c.details)

    def test_matches_matrix_oracle(self):
        spec = wv.WaveletSpec("db6", 4, "periodic")
        mat = transform_matrix(64, spec)
        x = np.random.default_rng(0).standard_normal(64)
        assert np.max(np.abs(wv.dwt_multilevel(x, spec).ravel() - mat @ x)) < 1e-12

    def test_too_short_raises(self):
        with pytest.raises(SignalTooShort):
            wv.dwt_multilevel(np.zeros(8), wv.WaveletSpec("db6", 4, "periodic"))

    def test_odd_length_periodic_raises(self):
        with pytest.raises(SignalTooShort):
            wv.dwt_multilevel(np.zeros(18), wv.WaveletSpec("db6", 2, "periodic"))


class TestIdwt1d:
    def test_round_trip_length_112(self):
        spec = wv.WaveletSpec("db6", 4, "periodic")
        x = np.random.default_rng(1).standard_normal(112)
        xr = wv.idwt_multilevel(wv.dwt_multilevel(x, spec), spec)
        assert np.max(np.abs(xr - x)) < 1e-10

    def test_zero_coeffs_give_zero_signal(self):
        spec = wv.WaveletSpec("db6", 2, "periodic")
        c = wv.dwt_multilevel(np.zeros(32), spec)
        assert np.all(wv.idwt_multilevel(c, spec) == 0.0)

    def test_delta_approx_reproduces_inverse_matrix_column(self):
        spec = wv.WaveletSpec("db4", 3, "periodic")
        n = 64
        mat = transform_matrix(n, spec)
        inv = np.linalg.inv(mat)
        c = wv.dwt_multilevel(np.zeros(n), spec)
        delta = np.zeros_like(c.approx)
        delta[2] = 1.0
        c = wv.WaveletCoeffs(delta, [np.zeros_like(d) for d in c.details],
                             c.original_lengths)
        assert np.max(np.abs(wv.idwt_multilevel(c, spec) - inv[:, 2])) < 1e-11

    def test_inconsistent_lengths_raise(self):
        spec = wv.WaveletSpec("db6", 2, "periodic")
        c = wv.dwt_multilevel(np.random.default_rng(2).standard_normal(32), spec)
        broken = wv.WaveletCoeffs(c.approx[:-1], c.details, c.original_lengths)
        with pytest.raises(InconsistentCoeffLengths):
            wv.idwt_multilevel(broken, spec)


class TestDwt2d:
    def test_constant_field_detail_bands_vanish(self):
        spec = wv.WaveletSpec("db2", 2, "periodic")
        c = wv.dwt2d_multilevel(np.full((8, 8), 2.0), spec)
        for lh, hl, hh in c.details:
            assert max(np.max(np.abs(b)) for b in (lh, hl, hh)) < 1e-13

    def test_round_trip_64x64(self):
        spec = wv.WaveletSpec("db6", 4, "periodic")
        f = np.random.default_rng(3).standard_normal((64, 64))
        fr = wv.idwt2d_multilevel(wv.dwt2d_multilevel(f, spec), spec)
        assert np.max(np.abs(fr - f)) < 1e-10

    def test_separability_on_outer_product(self):
        spec = wv.WaveletSpec("db6", 3, "periodic")
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal(64), rng.standard_normal(64)
        c2 = wv.dwt2d_multilevel(np.outer(a, b), spec)
        ca, cb = wv.dwt_multilevel(a, spec), wv.dwt_multilevel(b, spec)
        assert np.max(np.abs(c2.approx - np.outer(ca.approx, cb.approx))) < 1e-11

    def test_channel_dims_pass_through(self):
        spec = wv.WaveletSpec("db2", 2, "periodic")
        f = np.random.default_rng(5).standard_normal((3, 2, 16, 16))
        c = wv.dwt2d_multilevel(f, spec)
        assert c.approx.shape[:2] == (3, 2)
        assert np.max(np.abs(wv.idwt2d_multilevel(c, spec) - f)) < 1e-10


class TestInvariants:
    @pytest.mark.parametrize("n,family,levels", [(64, "db6", 4), (112, "db6", 4),
                                                 (64, "db2", 3), (112, "db4", 4)])
    def test_perfect_reconstruction_and_energy(self, n, family, levels):
        spec = wv.WaveletSpec(family, levels, "periodic")
        rng = np.random.default_rng(n + levels)
        for _ in range(25):
            x = rng.standard_normal(n)
            c = wv.dwt_multilevel(x, spec)
            assert np.max(np.abs(wv.idwt_multilevel(c, spec) - x)) < 1e-10
            e_sig = float(np.sum(x * x))
            e_coef = float(np.sum(c.ravel() ** 2))
            assert abs(e_sig - e_coef) < 1e-9 * e_sig

    def test_linearity(self):
        spec = wv.WaveletSpec("db6", 4, "periodic")
        rng = np.random.default_rng(9)
        x, y = rng.standard_normal(112), rng.standard_normal(112)
        lhs = wv.dwt_multilevel(2.5 * x - 1.25 * y, spec).ravel()
        rhs = 2.5 * wv.dwt_multilevel(x, spec).ravel() \
            - 1.25 * wv.dwt_multilevel(y, spec).ravel()
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    @pytest.mark.parametrize("extension", wv.EXTENSIONS)
    def test_adjoint_identity(self, extension):
        spec = wv.WaveletSpec("db6", 3, extension)
        rng = np.random.default_rng(10)
        for _ in range(20):
            x = rng.standard_normal(64)
            c = wv.dwt_multilevel(x, spec)
            y = wv.WaveletCoeffs(rng.standard_normal(c.approx.shape),
                                 [rng.standard_normal(d.shape) for d in c.details],
                                 c.original_lengths)
            lhs = float(np.dot(c.ravel(), y.ravel()))
            rhs = float(np.dot(x, wv.dwt_multilevel_adjoint(y, spec)))
            assert abs(lhs - rhs) < 1e-10

    def test_adjoint_equals_inverse_when_periodic(self):
        spec = wv.WaveletSpec("db6", 4, "periodic")
        rng = np.random.default_rng(11)
        x = rng.standard_normal(64)
        c = wv.dwt_multilevel(x, spec)
        assert np.max(np.abs(wv.dwt_multilevel_adjoint(c, spec)
                             - wv.idwt_multilevel(c, spec))) < 1e-12


class TestSymmetricExtension:
    @pytest.mark.parametrize("n", [21, 64, 112])
    def test_round_trip(self, n):
        spec = wv.WaveletSpec("db6", 2, "symmetric")
        x = np.random.default_rng(n).standard_normal(n)
        xr = wv.idwt_multilevel(wv.dwt_multilevel(x, spec), spec)
        assert np.max(np.abs(xr - x)) < 1e-10

    def test_coefficient_lengths(self):
        # symmetric extension stores floor((n + taps - 1) / 2) per level
        assert wv.coeff_length(64, "db6", "symmetric") == (64 + 11) // 2
        assert wv.coeff_length(64, "db6", "periodic") == 32

    def test_2d_round_trip(self):
        spec = wv.WaveletSpec("db4", 2, "symmetric")
        f = np.random.default_rng(12).standard_normal((24, 40))
        fr = wv.idwt2d_multilevel(wv.dwt2d_multilevel(f, spec), spec)
        assert np.max(np.abs(fr - f)) < 1e-10


class TestSpecValidation:
    def test_unknown_family(self):
        with pytest.raises(ValueError):
            wv.WaveletSpec("haar", 2, "periodic")

    def test_bad_levels(self):
        with pytest.raises(ValueError):
            wv.WaveletSpec("db6", 0, "periodic")

    def test_coefficient_length_rule(self):
        # ceil(n / 2^k) per level for the periodic lengths used here
        spec = wv.WaveletSpec("db6", 4, "periodic")
        c = wv.dwt_multilevel(np.zeros(112), spec)
        assert [d.shape[-1] for d in c.details] == [7, 14, 28, 56]
        assert c.approx.shape[-1] == 7
