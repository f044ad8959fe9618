import json

import numpy as np
import pytest

from safepaint import cli
from safepaint.data import Corpus
from safepaint.imgio import load_image, save_image
from safepaint.masks import generate_irregular, load_mask, save_mask, MaskBucket
from safepaint.train import TrainConfig, save_config


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny trained checkpoint plus a corpus directory and one image+mask."""
    root = tmp_path_factory.mktemp("cli")
    corpus = Corpus.synthetic(3, 10, size=32)
    data_dir = root / "data"
    corpus.write_dir(data_dir)

    cfg = TrainConfig(
        batch=2,
        steps=4,
        image_size=32,
        base_width=8,
        disc_width=8,
        extractor_width=8,
        residual_blocks=2,
        eval_fraction=0.3,
    )
    cfg_path = root / "cfg.txt"
    save_config(cfg_path, cfg)
    run_dir = root / "run"
    code = cli.main(
        ["train", "--config", str(cfg_path), "--data", str(data_dir), "--out", str(run_dir)]
    )
    assert code == 0

    image_path = root / "image.png"
    save_image(image_path, corpus.images[0])
    mask_path = root / "mask.png"
    save_mask(mask_path, generate_irregular(5, MaskBucket(20, 30), 32, 32))
    return {
        "root": root,
        "data": data_dir,
        "ckpt": run_dir / "ckpt_final.pt",
        "image": image_path,
        "mask": mask_path,
        "cfg": cfg_path,
    }


class TestMakeMasks:
    def test_writes_mask_in_bucket(self, workspace, tmp_path):
        out = tmp_path / "m.png"
        code = cli.main(
            ["make-masks", "--seed", "4", "--bucket", "30-40", "--size", "64", "--out", str(out)]
        )
        assert code == 0
        mask = load_mask(out)
        assert 0.30 <= mask.mean() < 0.40

    def test_idempotent_byte_identical(self, tmp_path):
        outs = [tmp_path / "a.png", tmp_path / "b.png"]
        for out in outs:
            cli.main(
                ["make-masks", "--seed", "9", "--bucket", "10-20", "--size", "48", "--out", str(out)]
            )
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_invalid_bucket_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["make-masks", "--seed", "1", "--bucket", "nope", "--size", "64",
                      "--out", str(tmp_path / "m.png")])
        assert exc.value.code == 2
        assert "bucket" in capsys.readouterr().err

    def test_unknown_flag_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["make-masks", "--wat", "1"])
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err


class TestInpaint:
    @pytest.mark.parametrize("method", ["diffusion", "exemplar"])
    def test_classical_methods_preserve_background(self, workspace, tmp_path, method):
        out = tmp_path / f"{method}.png"
        code = cli.main(
            ["inpaint", "--image", str(workspace["image"]), "--mask", str(workspace["mask"]),
             "--method", method, "--out", str(out)]
        )
        assert code == 0
        result = load_image(out)
        original = load_image(workspace["image"])
        mask = load_mask(workspace["mask"])
        known = mask < 0.5
        assert np.array_equal(result[known], original[known])

    @pytest.mark.parametrize("method", ["safepaint", "stage1"])
    def test_learned_methods(self, workspace, tmp_path, method):
        out = tmp_path / f"{method}.png"
        code = cli.main(
            ["inpaint", "--ckpt", str(workspace["ckpt"]), "--image", str(workspace["image"]),
             "--mask", str(workspace["mask"]), "--method", method, "--out", str(out)]
        )
        assert code == 0
        result = load_image(out)
        original = load_image(workspace["image"])
        mask = load_mask(workspace["mask"])
        known = mask < 0.5
        assert np.array_equal(result[known], original[known])

    def test_missing_ckpt_is_runtime_error(self, workspace, tmp_path, capsys):
        code = cli.main(
            ["inpaint", "--image", str(workspace["image"]), "--mask", str(workspace["mask"]),
             "--method", "safepaint", "--out", str(tmp_path / "x.png")]
        )
        assert code == 1
        assert "ckpt" in capsys.readouterr().err

    def test_idempotent_and_inputs_untouched(self, workspace, tmp_path):
        before = workspace["image"].read_bytes(), workspace["mask"].read_bytes()
        outs = [tmp_path / "a.png", tmp_path / "b.png"]
        for out in outs:
            cli.main(
                ["inpaint", "--image", str(workspace["image"]), "--mask", str(workspace["mask"]),
                 "--method", "diffusion", "--out", str(out)]
            )
        assert outs[0].read_bytes() == outs[1].read_bytes()
        assert (workspace["image"].read_bytes(), workspace["mask"].read_bytes()) == before


class TestDetect:
    def test_kl_probe_report(self, workspace, tmp_path):
        report_path = tmp_path / "kl.json"
        code = cli.main(
            ["detect", "--image", str(workspace["image"]), "--mask", str(workspace["mask"]),
             "--probe", "kl", "--out-report", str(report_path)]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["probe"] == "kl"
        # untouched image with an arbitrary mask: small recorded baseline
        assert 0.0 <= report["kl_gap"] < 2.0

    @pytest.mark.parametrize("probe", ["variance", "similarity"])
    def test_heatmap_probes(self, workspace, tmp_path, probe):
        report_path = tmp_path / f"{probe}.json"
        heat_path = tmp_path / f"{probe}.png"
        code = cli.main(
            ["detect", "--image", str(workspace["image"]), "--mask", str(workspace["mask"]),
             "--probe", probe, "--out-heatmap", str(heat_path), "--out-report", str(report_path)]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert {"probe", "auc", "f1", "flagged"} <= set(report)
        assert heat_path.exists()

    def test_learned_probe_needs_detector(self, workspace, tmp_path, capsys):
        code = cli.main(
            ["detect", "--image", str(workspace["image"]), "--mask", str(workspace["mask"]),
             "--probe", "learned", "--out-report", str(tmp_path / "r.json")]
        )
        assert code == 1
        assert "detector" in capsys.readouterr().err


class TestEvaluate:
    def test_report_and_detector_output(self, workspace, tmp_path):
        report_path = tmp_path / "report.json"
        detector_path = tmp_path / "detector.pt"
        code = cli.main(
            ["evaluate", "--ckpt", str(workspace["ckpt"]), "--data", str(workspace["data"]),
             "--buckets", "20-30", "--max-images", "2",
             "--out-report", str(report_path), "--out-detector", str(detector_path)]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert set(report["summary"]) == {"safepaint", "stage1", "diffusion", "exemplar"}
        assert detector_path.exists()

        heat_path = tmp_path / "learned.png"
        learned_report = tmp_path / "learned.json"
        code = cli.main(
            ["detect", "--image", str(workspace["image"]), "--mask", str(workspace["mask"]),
             "--probe", "learned", "--detector-ckpt", str(detector_path),
             "--out-heatmap", str(heat_path), "--out-report", str(learned_report)]
        )
        assert code == 0
        assert json.loads(learned_report.read_text())["probe"] == "learned"


def test_resume_flow(workspace, tmp_path):
    resumed = tmp_path / "resumed"
    code = cli.main(
        ["train", "--config", str(workspace["cfg"]), "--data", str(workspace["data"]),
         "--out", str(resumed), "--resume", str(workspace["ckpt"])]
    )
    assert code == 0  # already at final step: saves final checkpoint again
    assert (resumed / "ckpt_final.pt").exists()
