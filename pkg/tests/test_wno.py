import numpy as np
import pytest

from dpawno import autodiff as ad
from dpawno import wavelet as wv
from dpawno import wno
from dpawno.errors import FormatVersionMismatch, ShapeMismatch


def small_config(**kw):
    defaults = dict(width=4, layers=2,
                    wavelet=wv.WaveletSpec("db6", 2, "periodic"),
                    fc1_dim=8, in_channels=2, out_channels=1, spatial_dims=1)
    defaults.update(kw)
    return wno.WnoConfig(**defaults)


def randomized(config, seed=0, scale=0.3):
    model = wno.WnoModel.initialize(config, seed)
    rng = np.random.default_rng(seed + 17)
    for name in model.params:
        model.params[name] = scale * rng.standard_normal(model.params[name].shape)
    return model


GRID16 = np.linspace(-1.0, 1.0, 16)


class TestLift:
    def test_zero_weights_give_bias(self):
        cfg = small_config()
        m = wno.WnoModel.initialize(cfg, 0)
        m.params["lift.weight"][:] = 0.0
        m.params["lift.bias"][:] = 2.5
        u = np.random.default_rng(1).standard_normal((3, 1, 16))
        out = wno.lift(u, GRID16, m)
        assert np.all(out == 2.5)

    def test_identity_weights_copy_channels(self):
        cfg = small_config(width=2)
        m = wno.WnoModel.initialize(cfg, 0)
        m.params["lift.weight"] = np.eye(2)
        m.params["lift.bias"][:] = 0.0
        u = np.random.default_rng(2).standard_normal((1, 1, 16))
        out = wno.lift(u, GRID16, m)
        assert np.array_equal(out[:, 0], u[:, 0])
        assert np.allclose(out[:, 1], GRID16)

    def test_matches_pointwise_matmul(self):
        cfg = small_config()
        m = randomized(cfg, 3)
        u = np.random.default_rng(4).standard_normal((2, 1, 16))
        out = wno.lift(u, GRID16, m)
        stacked = np.concatenate(
            [u, np.broadcast_to(GRID16, (2, 1, 16))], axis=1)
        expected = np.einsum("wc,bcx->bwx", m.params["lift.weight"], stacked) \
            + m.params["lift.bias"][None, :, None]
        assert np.max(np.abs(out - expected)) < 1e-12

    def test_grid_shape_mismatch(self):
        cfg = small_config()
        m = wno.WnoModel.initialize(cfg, 0)
        with pytest.raises(ShapeMismatch):
            wno.lift(np.zeros((1, 1, 16)), np.linspace(0, 1, 8), m)


class TestKernelLayer:
    def test_all_zero_weights_give_zero(self):
        cfg = small_config()
        m = wno.WnoModel.initialize(cfg, 0)
        for name in m.params:
            if name.startswith("layer0."):
                m.params[name] = np.zeros_like(m.params[name])
        v = np.random.default_rng(5).standard_normal((2, 4, 16))
        out = wno.kernel_layer(v, 0, m)
        assert np.all(out.data if isinstance(out, ad.Tensor) else out == 0.0)

    def test_zero_kernel_identity_pointwise_no_activation_is_identity(self):
        cfg = small_config()
        m = wno.WnoModel.initialize(cfg, 0)
        for band in cfg.kernel_bands():
            m.params[f"layer0.kernel.{band}"] = np.zeros((4, 4))
        m.params["layer0.pointwise.weight"] = np.eye(4)
        m.params["layer0.pointwise.bias"] = np.zeros(4)
        v = np.random.default_rng(6).standard_normal((2, 4, 16))
        out = wno.kernel_layer(v, 0, m, final=True)
        assert np.array_equal(out, v)

    def test_layer_linear_without_activation(self):
        cfg = small_config()
        m = randomized(cfg, 7)
        m.params["layer0.pointwise.bias"] = np.zeros(4)
        rng = np.random.default_rng(8)
        x, y = rng.standard_normal((2, 4, 16)), rng.standard_normal((2, 4, 16))
        lhs = wno.kernel_layer(1.5 * x - 2.0 * y, 0, m, final=True)
        rhs = 1.5 * wno.kernel_layer(x, 0, m, final=True) \
            - 2.0 * wno.kernel_layer(y, 0, m, final=True)
        assert np.max(np.abs(lhs - rhs)) < 1e-11

    def test_untouched_bands_truncated_from_kernel_path(self):
        # with zero pointwise path, the layer output lives entirely in the
        # mixed (coarsest) sub-bands: finer detail bands of the output vanish
        cfg = small_config(layers=1)
        m = randomized(cfg, 9)
        m.params["layer0.pointwise.weight"] = np.zeros((4, 4))
        m.params["layer0.pointwise.bias"] = np.zeros(4)
        v = np.random.default_rng(10).standard_normal((1, 4, 16))
        out = wno.kernel_layer(v, 0, m, final=True)
        coeffs = wv.dwt_multilevel(out, cfg.wavelet)
        finest = coeffs.details[-1]
        assert np.max(np.abs(finest)) < 1e-12


class TestWnoForward:
    def test_fresh_model_outputs_zero(self):
        cfg = small_config()
        m = wno.WnoModel.initialize(cfg, 1)
        u = np.random.default_rng(11).standard_normal((4, 1, 16))
        assert np.all(wno.wno_forward(u, GRID16, m) == 0.0)

    @pytest.mark.parametrize("nx", [112, 64])
    def test_shape_contract_1d(self, nx):
        cfg = wno.WnoConfig(width=6, layers=2,
                            wavelet=wv.WaveletSpec("db6", 4, "periodic"),
                            fc1_dim=8, in_channels=2, out_channels=1,
                            spatial_dims=1)
        m = randomized(cfg, 12)
        u = np.random.default_rng(nx).standard_normal((2, 1, nx))
        out = wno.wno_forward(u, np.linspace(-1, 1, nx), m)
        assert out.shape == u.shape

    def test_shape_contract_2d(self):
        cfg = wno.WnoConfig(width=3, layers=2,
                            wavelet=wv.WaveletSpec("db6", 2, "periodic"),
                            fc1_dim=6, in_channels=4, out_channels=2,
                            spatial_dims=2)
        m = randomized(cfg, 13)
        u = np.random.default_rng(14).standard_normal((2, 2, 64, 64))
        g = (np.linspace(0, 2, 64), np.linspace(0, 2, 64))
        assert wno.wno_forward(u, g, m).shape == u.shape

    def test_one_euler_step_mse_through_wno_gradient(self):
        from dpawno import physics as ph

        spec = ph.PdeSpec("burgers1d", {"nu": 0.3 / np.pi},
                          ("advection",), "dirichlet", 0.0, (-1.0, 1.0),
                          nx=8, dt=3e-4)
        cfg = small_config()
        m = randomized(cfg, 30)
        grid = spec.grid()
        rng = np.random.default_rng(31)
        u0 = rng.uniform(0.5, 1.5, size=(1, 1, 8))
        target = rng.standard_normal((1, 1, 8))

        def loss_wrt_param(t):
            stepped = ph.euler_step_values(
                u0, spec, wno.wno_forward(u0, grid, m, params={
                    **m.params, "downlift2.weight": t}))
            return ad.total_mean(ad.square(ad.sub(stepped, target)))

        def loss_wrt_state(t):
            stepped = ph.euler_step_values(t, spec, wno.wno_forward(t, grid, m))
            return ad.total_mean(ad.square(ad.sub(stepped, target)))

        # parameter influence is dt-suppressed through a single step; the
        # larger probe keeps the central-difference oracle above its own
        # roundoff floor
        assert ad.check_gradient(loss_wrt_param,
                                 m.params["downlift2.weight"], 1e-4) < 1e-5
        assert ad.check_gradient(loss_wrt_state, u0, 1e-5) < 1e-5

    def test_gradients_match_finite_differences(self):
        cfg = small_config()
        m = randomized(cfg, 15)
        rng = np.random.default_rng(16)
        u = rng.standard_normal((2, 1, 16))
        target = rng.standard_normal((2, 1, 16))
        worst = 0.0
        for name in m.params:
            def loss_fn(t, name=name):
                p = dict(m.params)
                p[name] = t
                out = wno.wno_forward(u, GRID16, m, params=p)
                return ad.total_mean(ad.square(ad.sub(out, target)))
            worst = max(worst, ad.check_gradient(loss_fn, m.params[name], 1e-5))
        def loss_u(t):
            out = wno.wno_forward(t, GRID16, m)
            return ad.total_mean(ad.square(ad.sub(out, target)))
        worst = max(worst, ad.check_gradient(loss_u, u, 1e-5))
        assert worst < 1e-5


class TestInvariants:
    def test_parameter_count_resolution_independent(self):
        cfg = small_config()
        m = randomized(cfg, 17)
        for nx in (64, 112):
            u = np.zeros((1, 1, nx))
            out = wno.wno_forward(u, np.linspace(-1, 1, nx), m)
            assert out.shape == u.shape
        assert cfg.parameter_count() == sum(v.size for v in m.params.values())

    def test_bands_all_count_independent_of_resolution(self):
        cfg = small_config(bands="all")
        assert len(cfg.kernel_bands()) == 1 + cfg.wavelet.levels
        assert cfg.parameter_count() > small_config().parameter_count()

    def test_same_seed_same_init_same_forward(self):
        cfg = small_config()
        a = wno.WnoModel.initialize(cfg, 5)
        b = wno.WnoModel.initialize(cfg, 5)
        assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
        a.params["downlift2.weight"] += 0.5  # same perturbation both sides
        b.params["downlift2.weight"] += 0.5
        u = np.random.default_rng(18).standard_normal((2, 1, 16))
        out_a = wno.wno_forward(u, GRID16, a)
        out_b = wno.wno_forward(u, GRID16, b)
        assert np.array_equal(out_a, out_b)

    def test_taped_forward_matches_plain(self):
        cfg = small_config()
        m = randomized(cfg, 19)
        u = np.random.default_rng(20).standard_normal((2, 1, 16))
        plain = wno.wno_forward(u, GRID16, m)
        tape = ad.Tape()
        staged = {k: tape.leaf(v) for k, v in m.params.items()}
        taped = wno.wno_forward(tape.leaf(u), GRID16, m, params=staged)
        assert np.array_equal(plain, taped.data)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        cfg = small_config(bands="all")
        m = randomized(cfg, 21)
        path = tmp_path / "model.dpaw"
        m.save(path)
        loaded = wno.WnoModel.load(path)
        assert loaded.config == cfg
        assert all(np.array_equal(m.params[k], loaded.params[k]) for k in m.params)

    def test_newer_version_rejected(self, tmp_path):
        cfg = small_config()
        m = wno.WnoModel.initialize(cfg, 0)
        path = tmp_path / "model.dpaw"
        m.save(path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99  # bump the little-endian version field
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatVersionMismatch):
            wno.WnoModel.load(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.dpaw"
        path.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(FormatVersionMismatch):
            wno.WnoModel.load(path)

    def test_wrong_shape_rejected(self):
        cfg = small_config()
        m = wno.WnoModel.initialize(cfg, 0)
        params = dict(m.params)
        params["lift.weight"] = np.zeros((3, 3))
        with pytest.raises(ShapeMismatch):
            wno.WnoModel(cfg, params)
