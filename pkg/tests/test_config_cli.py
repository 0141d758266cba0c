import json
import os

import numpy as np
import pytest

from dpawno import cli
from dpawno import config as cf
from dpawno.errors import UsageError

FAST_TRAIN = [
    "--set", "train.epochs=2",
    "--set", "train.schedule=pairs: 0:3",
]
SMALL_DATA = [
    "--set", "data.n_train=4",
    "--set", "data.n_test=6",
    "--set", "data.nt_test=30",
    "--set", "ic.train.1.count=2", "--set", "ic.train.2.count=2",
    "--set", "ic.test.1.count=3", "--set", "ic.test.2.count=3",
    "--set", "eval.steps=20",
    "--set", "eval.snapshots=5, 20",
    "--set", "probe.t=5, 20",
    "--set", "limit_state.horizon=20",
    "--set", "reliability.n=40",
]
DESK = "burgers1d-missing-diffusion-desk"


class TestConfig:
    @pytest.mark.parametrize("name", cf.PRESETS)
    def test_presets_parse_and_build(self, name):
        c = cf.load_config(preset=name)
        full = c.full_spec()
        partial = c.partial_spec()
        assert set(partial.terms) < set(full.terms)
        assert c.data_only_spec().terms == ()
        assert c.wno_config().parameter_count() > 0
        assert c.train_config().epochs > 0
        assert c.families("train") and c.families("test")
        assert c.grf_spec().alpha > 0
        assert c.limit_state().threshold > 0
        assert c.probes()

    def test_unknown_preset(self):
        with pytest.raises(UsageError):
            cf.load_config(preset="nonexistent")

    def test_overrides(self):
        c = cf.load_config(preset=DESK, overrides=("pde.nx=32", "run.seed=5"))
        assert c.partial_spec().nx == 32
        assert c.seed == 5

    def test_bad_override(self):
        with pytest.raises(UsageError):
            cf.load_config(preset=DESK, overrides=("garbage",))

    def test_empty_test_family_rejected(self, tmp_path):
        text = cf.preset_text(DESK)
        path = tmp_path / "truncated.ini"
        path.write_text(text[:text.index("[ic.test.1]")])
        c = cf.load_config(path=str(path))
        assert c.families("train")
        with pytest.raises(UsageError):
            c.families("test")

    def test_schedule_grammar(self):
        auto = cf.parse_schedule("auto: 10 @ 100, 50 @ 400")
        assert auto[0] == (0, 10) and auto[-1][1] == 50
        pairs = cf.parse_schedule("pairs: 0:10 100:20")
        assert pairs == ((0, 10), (100, 20))
        with pytest.raises(UsageError):
            cf.parse_schedule("every 10 epochs")

    def test_amplitude_grammar(self):
        assert cf.parse_amplitudes("-8 .. 8") == tuple(
            float(a) for a in range(-8, 9) if a)
        assert cf.parse_amplitudes("uniform: -10, 10") == ("uniform", -10.0, 10.0)
        assert cf.parse_amplitudes("1, 2.5, -3") == (1.0, 2.5, -3.0)

    def test_full_scale_preset_values(self):
        c = cf.load_config(preset="burgers1d-missing-diffusion")
        spec = c.full_spec()
        assert spec.nx == 112 and c.nt_train == 50
        assert abs(spec.params["nu"] - 0.3 / np.pi) < 1e-15
        assert abs(spec.dt - 3e-4) < 1e-18
        n = cf.load_config(preset="nagumo-missing-reaction")
        ns = n.full_spec()
        assert ns.nx == 64 and abs(ns.dt - 1e-4) < 1e-18
        assert n.train_config().learning_rate == 0.002
        b2 = cf.load_config(preset="burgers2d-missing-xdiff")
        s2 = b2.full_spec()
        assert s2.ny == 64 and s2.bc_value == 1.0
        assert b2.partial_spec().terms == ("advection", "diffusion_y")


class TestCliPipeline:
    def run(self, *argv):
        return cli.main(list(argv))

    def test_full_pipeline(self, tmp_path):
        data = str(tmp_path / "data")
        assert self.run("gen-data", "--preset", DESK, "--out", data,
                        *SMALL_DATA) == 0
        assert os.path.exists(os.path.join(data, "train.dpds"))
        assert os.path.exists(os.path.join(data, "test.dpds"))

        dpa = str(tmp_path / "dpa")
        assert self.run("train", "--preset", DESK, "--data", data, "--out",
                        dpa, "--mode", "dpa", *SMALL_DATA, *FAST_TRAIN) == 0
        donly = str(tmp_path / "donly")
        assert self.run("train", "--preset", DESK, "--data", data, "--out",
                        donly, "--mode", "data-only", *SMALL_DATA,
                        *FAST_TRAIN) == 0
        ponly = str(tmp_path / "ponly")
        assert self.run("train", "--preset", DESK, "--data", data, "--out",
                        ponly, "--mode", "physics-only", *SMALL_DATA) == 0

        ev = str(tmp_path / "eval")
        assert self.run("evaluate", "--preset", DESK, "--data", data,
                        "--dpa", f"{dpa}/model.dpaw",
                        "--data-only", f"{donly}/model.dpaw",
                        "--out", ev, *SMALL_DATA) == 0
        lines = open(os.path.join(ev, "metrics.csv")).read().splitlines()
        assert lines[0] == "model,er1_mse,er2_mean_hellinger,diverged"
        assert len(lines) == 4
        assert os.path.exists(os.path.join(ev, "snapshot_t20.csv"))

        uqd = str(tmp_path / "uq")
        assert self.run("uq", "--preset", DESK, "--data", data,
                        "--dpa", f"{dpa}/model.dpaw",
                        "--data-only", f"{donly}/model.dpaw",
                        "--out", uqd, *SMALL_DATA) == 0
        header = open(os.path.join(uqd, "pdf_probe0.csv")).readline().strip()
        assert header == "support,mass_model,mass_truth,mass_partial,mass_dataonly"

        reld = str(tmp_path / "rel")
        assert self.run("reliability", "--preset", DESK,
                        "--dpa", f"{dpa}/model.dpaw",
                        "--out", reld, *SMALL_DATA) == 0
        records = [json.loads(line) for line in
                   open(os.path.join(reld, "reliability.jsonl"))]
        assert {r["model"] for r in records} == {"dpa-wno", "exact"}
        for r in records:
            assert r["n"] == 40
            assert 0.0 <= r["reliability"] <= 1.0

    def test_usage_error_exit_code(self, capsys):
        assert self.run("gen-data", "--preset", DESK, "--out", "") == 2

    def test_io_error_exit_code(self, tmp_path):
        missing = str(tmp_path / "noexist")
        code = self.run("train", "--preset", DESK, "--data", missing,
                        "--out", str(tmp_path / "o"), *FAST_TRAIN)
        assert code == 4

    def test_numerical_error_exit_code(self, tmp_path):
        data = str(tmp_path / "data")
        # CFL-violating dt makes generation blow up -> exit 3
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code = self.run("gen-data", "--preset", DESK, "--out", data,
                            "--set", "pde.dt=0.05", *SMALL_DATA)
        assert code == 3

    def test_invalid_kernel_params_rejected_before_compute(self, tmp_path):
        code = self.run("reliability", "--preset", DESK,
                        "--out", str(tmp_path / "r"),
                        "--set", "grf.length_scale=-1")
        assert code != 0

    def test_help_mentions_config_keys(self, capsys):
        with pytest.raises(SystemExit):
            cli.main(["gen-data", "--help"])
        out = capsys.readouterr().out
        for key in ("partial_terms", "schedule", "threshold", "amplitudes"):
            assert key in out


class TestGradcheckCommand:
    def test_single_preset(self, capsys):
        assert cli.main(["gradcheck", "--preset", DESK]) == 0
        assert "max relative gradient error" in capsys.readouterr().out
