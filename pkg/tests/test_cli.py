"""On-disk formats and the command pipeline."""

import json
import subprocess
import sys

import numpy as np
import pytest

from lfsal import cli, image_io
from lfsal.checkpoint import load_checkpoint, save_checkpoint
from lfsal.config import Manifest, RunConfig
from lfsal.errors import ConfigurationError, DataError
from lfsal.lightfield import assemble_microlens_array, disassemble_microlens_array
from lfsal.synthetic import textured_scene, write_toy_dataset
from lfsal.tensor import set_default_dtype


def desk_config(**overrides) -> RunConfig:
    base = dict(angular_res=3, channels=(4, 8, 8, 8, 8), aspp_channels=8,
                aspp_rates=(1, 2), max_iter=40, checkpoint_interval=10,
                base_lr=0.01, seed=3, precision="float32",
                crop_fraction_x=0.75, crop_fraction_y=0.75)
    base.update(overrides)
    return RunConfig(**base).validate()


@pytest.fixture
def toy(tmp_path):
    """Toy dataset: views on disk, converted arrays, and a manifest."""
    data = tmp_path / "views"
    write_toy_dataset(data, n_samples=4, a=3, n_y=24, n_x=32, seed=7)
    arrays = tmp_path / "arrays"
    entries = []
    for i in range(4):
        sample_dir = data / f"sample{i:02d}"
        arr_path = arrays / f"sample{i:02d}.png"
        cli.cmd_convert(sample_dir, arr_path, 3)
        entries.append((arr_path, sample_dir / "mask.png"))
    manifest = tmp_path / "toy.manifest"
    Manifest.write(manifest, 3, entries)
    return tmp_path, manifest


class TestConvert:
    def test_toy_grid_to_array_shape(self, tmp_path):
        gen = np.random.default_rng(0)
        d = tmp_path / "grid"
        for v in range(3):
            for u in range(3):
                image_io.save_image(d / f"view_{v}_{u}.png", gen.random((4, 4, 3)))
        out = tmp_path / "arr.png"
        cli.cmd_convert(d, out, 3)
        assert image_io.load_image(out).shape == (12, 12, 3)

    def test_centered_sampling_from_larger_grid(self, tmp_path):
        d = tmp_path / "grid14"
        for v in range(14):
            for u in range(14):
                img = np.full((2, 2, 3), (v * 14 + u) / 255.0)
                image_io.save_image(d / f"view_{v}_{u}.png", img)
        out = tmp_path / "arr.png"
        cli.cmd_convert(d, out, 9)
        lf = disassemble_microlens_array(image_io.load_image(out), 9)
        # view (0,0) of the sampled grid is on-disk view (2,2)
        assert lf.views[0, 0, 0, 0, 0] == pytest.approx((2 * 14 + 2) / 255.0, abs=1e-9)
        assert lf.views[8, 8, 0, 0, 0] == pytest.approx((10 * 14 + 10) / 255.0, abs=1e-9)

    def test_central_view_round_trip_exact(self, tmp_path):
        gen = np.random.default_rng(1)
        d = tmp_path / "grid3"
        views = gen.random((3, 3, 6, 8, 3))
        for v in range(3):
            for u in range(3):
                image_io.save_image(d / f"view_{v}_{u}.png", views[v, u])
        out = tmp_path / "arr.png"
        cli.cmd_convert(d, out, 3)
        lf = disassemble_microlens_array(image_io.load_image(out), 3)
        central_file = image_io.load_image(d / "view_1_1.png")
        np.testing.assert_array_equal(lf.views[1, 1], central_file)

    def test_missing_view_reported(self, tmp_path):
        d = tmp_path / "gappy"
        image_io.save_image(d / "view_0_0.png", np.zeros((2, 2, 3)))
        image_io.save_image(d / "view_1_1.png", np.zeros((2, 2, 3)))
        with pytest.raises(DataError, match="view_0_1"):
            cli.cmd_convert(d, tmp_path / "x.png", 2)


class TestSplit:
    def test_fold_sizes(self, toy, tmp_path):
        _, manifest = toy
        out = tmp_path / "folds"
        written = cli.cmd_split(manifest, out, 2, seed=0)
        assert len(written) == 2
        for train_p, val_p, cfg_p in written:
            train = Manifest.load(train_p)
            val = Manifest.load(val_p)
            assert len(train) + len(val) == 4
            assert len(val) == 2
            cfg = RunConfig.load(cfg_p)
            assert 0.0 < cfg.input_mean[0] < 1.0

    def test_same_seed_same_folds(self, toy, tmp_path):
        _, manifest = toy
        a = cli.cmd_split(manifest, tmp_path / "fa", 2, seed=5)
        b = cli.cmd_split(manifest, tmp_path / "fb", 2, seed=5)
        for (ta, _, _), (tb, _, _) in zip(a, b):
            assert ta.read_text() == tb.read_text()

    def test_too_few_entries(self, toy, tmp_path):
        _, manifest = toy
        with pytest.raises(DataError):
            cli.cmd_split(manifest, tmp_path / "f", 9, seed=0)


class TestCheckpointFormat:
    def test_round_trip_byte_identical(self, tmp_path):
        cfg = desk_config()
        gen = np.random.default_rng(2)
        tensors = {
            "a.value": gen.standard_normal((2, 3)).astype(np.float32),
            "a.velocity": gen.standard_normal((2, 3)).astype(np.float32),
            "b.value": gen.standard_normal(4).astype(np.float32),
        }
        p1 = tmp_path / "c1.ckpt"
        save_checkpoint(p1, cfg, 17, tensors)
        cfg2, it, loaded = load_checkpoint(p1)
        assert it == 17
        p2 = tmp_path / "c2.ckpt"
        save_checkpoint(p2, cfg2, it, loaded)
        assert p1.read_bytes() == p2.read_bytes()

    def test_values_preserved(self, tmp_path):
        cfg = desk_config()
        arr = np.arange(6, dtype=np.float32).reshape(2, 3)
        save_checkpoint(tmp_path / "c.ckpt", cfg, 0, {"x.value": arr})
        _, _, loaded = load_checkpoint(tmp_path / "c.ckpt")
        np.testing.assert_array_equal(loaded["x.value"], arr)

    def test_truncated_blob_rejected(self, tmp_path):
        cfg = desk_config()
        p = tmp_path / "c.ckpt"
        save_checkpoint(p, cfg, 0, {"x.value": np.ones(8, dtype=np.float32)})
        p.write_bytes(p.read_bytes()[:-4])
        with pytest.raises(DataError):
            load_checkpoint(p)


class TestRunConfigText:
    def test_text_round_trip(self):
        cfg = desk_config()
        again = RunConfig.from_text(cfg.to_text())
        assert again == cfg
        assert again.to_text() == cfg.to_text()

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig.from_text("angular_res=9\nbogus_key=1\n")

    def test_comments_and_blanks_ignored(self):
        cfg = RunConfig.from_text("# comment\n\nangular_res=3\nchannels=4,8,8,8,8\n"
                                  "aspp_channels=8\n")
        assert cfg.angular_res == 3
        assert cfg.channels == (4, 8, 8, 8, 8)


class TestTrainPredictEval:
    def test_pipeline_and_loss_log(self, toy, tmp_path):
        root, manifest = toy
        cfg = desk_config(max_iter=20)
        run = tmp_path / "run"
        ckpt = cli.cmd_train(cfg, manifest, run)
        log_lines = (run / "loss.log").read_text().strip().splitlines()
        assert len(log_lines) == 20
        first = log_lines[0].split(",")
        assert first[0] == "0" and len(first) == 3

        preds = tmp_path / "preds"
        written = cli.cmd_predict(ckpt, manifest, preds)
        assert len(written) == 4
        for p in written:
            assert image_io.load_gray(p).shape == (24, 32)

        report_path = tmp_path / "report.json"
        scalars = cli.cmd_eval(preds, manifest, report_path)
        data = json.loads(report_path.read_text())
        assert set(data) == {"f_measure", "f_max", "wf_measure", "mae", "ap"}
        assert all(0.0 <= v <= 1.0 for v in data.values())
        curve = (tmp_path / "report_pr.csv").read_text().strip().splitlines()
        assert curve[0] == "threshold,precision,recall"
        assert len(curve) == 1 + 256

    def test_same_seed_bit_identical_loss_log(self, toy, tmp_path):
        _, manifest = toy
        logs = []
        for name in ("r1", "r2"):
            cfg = desk_config(max_iter=8)
            cli.cmd_train(cfg, manifest, tmp_path / name)
            logs.append((tmp_path / name / "loss.log").read_text())
        assert logs[0] == logs[1]

    def test_resume_matches_uninterrupted(self, toy, tmp_path):
        _, manifest = toy
        cfg = desk_config(max_iter=20, checkpoint_interval=10)
        full = tmp_path / "full"
        cli.cmd_train(cfg, manifest, full)

        half = tmp_path / "half"
        cli.cmd_train(desk_config(max_iter=20, checkpoint_interval=10),
                      manifest, half, iterations=10)
        cli.cmd_train(desk_config(max_iter=20, checkpoint_interval=10),
                      manifest, half, resume=half / "checkpoint_0000010.ckpt")

        full_log = (full / "loss.log").read_text().splitlines()
        half_log = (half / "loss.log").read_text().splitlines()
        assert half_log == full_log
        assert ((full / "checkpoint_0000020.ckpt").read_bytes()
                == (half / "checkpoint_0000020.ckpt").read_bytes())

    def test_predictions_deterministic(self, toy, tmp_path):
        _, manifest = toy
        cfg = desk_config(max_iter=5)
        ckpt = cli.cmd_train(cfg, manifest, tmp_path / "run")
        a = cli.cmd_predict(ckpt, manifest, tmp_path / "p1")
        b = cli.cmd_predict(ckpt, manifest, tmp_path / "p2")
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_eval_on_copied_masks_is_perfect(self, toy, tmp_path):
        _, manifest = toy
        m = Manifest.load(manifest)
        preds = tmp_path / "copied"
        preds.mkdir()
        for arr_p, mask_p in m.entries:
            mask = image_io.load_mask(mask_p)
            image_io.save_saliency_map(preds / f"{arr_p.stem}.png", mask.astype(float))
        scalars = cli.cmd_eval(preds, manifest, tmp_path / "rep.json")
        assert scalars["f_measure"] == 1.0
        assert scalars["mae"] == 0.0

    def test_angular_mismatch_rejected(self, toy, tmp_path):
        _, manifest = toy
        cfg = desk_config(angular_res=9)
        with pytest.raises(ConfigurationError):
            cli.cmd_train(cfg, manifest, tmp_path / "bad")


class TestAugmentCommand:
    def test_materializes_48_variants(self, toy, tmp_path):
        _, manifest = toy
        out = tmp_path / "aug"
        n = cli.cmd_augment(manifest, out, desk_config(), seed=0)
        assert n == 4 * 48
        assert len(list(out.glob("sample00_v*.png"))) == 2 * 48  # images + masks
        assert (out / "sample00_v47_mask.png").is_file()


class TestCliEntryPoint:
    def test_error_line_machine_parsable(self, tmp_path):
        rc = cli.main(["predict", "--checkpoint", str(tmp_path / "nope.ckpt"),
                       "--manifest", str(tmp_path / "nope.manifest"),
                       "--out", str(tmp_path / "o")])
        assert rc == 1

    def test_subprocess_error_format(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "lfsal.cli", "eval", "--pred", str(tmp_path),
             "--manifest", str(tmp_path / "missing.manifest"),
             "--report", str(tmp_path / "r.json")],
            capture_output=True, text=True)
        assert proc.returncode == 1
        line = proc.stderr.strip().splitlines()[-1]
        assert line.startswith("lfsal-error: data: ")
