"""
Tests for configuration resolution and the command-line entry point.
"""

import json
import os

import pytest

from errors import ConfigurationError, DivergenceError
from run_experiment import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from settings import RESOLVED_NAME, Settings, load_settings, parse_assignments


TINY_FLAGS = [
    "--set", "num_classes=2", "--set", "paintings_per_class=3", "--set", "num_contents=4",
    "--set", "image_size=16", "--set", "embed_dim=16", "--set", "channels=8", "--set", "state_size=2",
    "--set", "fusion_depth=1", "--set", "proj_dim=8", "--set", "stage1_iterations=3",
    "--set", "stage2_iterations=2", "--set", "classifier_steps=50", "--set", "checkpoint_every=0",
]


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in list(os.environ):
        if name.startswith("CLAST_"):
            monkeypatch.delenv(name)


# =============================================================================
# Settings
# =============================================================================

class TestSettings:

    def test_precedence(self, tmp_path):
        config = tmp_path / "run.env"
        config.write_text("SEED=1\nCHANNELS=16\nLAMBDA_STY=10\n")
        settings = load_settings(config, {"seed": 3}, environ={"CLAST_CHANNELS": "32", "OTHER": "x"})
        assert settings.seed == 3
        assert settings.channels == 32
        assert settings.lambda_sty == 10.0
        assert settings.state_size == Settings().state_size

    def test_coercion(self):
        settings = load_settings(overrides={"deterministic": "yes", "bench_lengths": "16,64", "lr": "5e-4"}, environ={})
        assert settings.deterministic is True
        assert settings.bench_lengths == (16, 64)
        assert settings.lr == pytest.approx(5e-4)
        assert settings.effective_workers() == 1

    @pytest.mark.parametrize("overrides", [{"no_such_key": "1"}, {"channels": "many"}, {"deterministic": "maybe"}])
    def test_bad_values(self, overrides):
        with pytest.raises(ConfigurationError):
            load_settings(overrides=overrides, environ={})

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_settings(tmp_path / "absent.env", environ={})

    def test_assignments(self):
        assert parse_assignments(["seed=4", " lr = 0.1 "]) == {"seed": "4", "lr": "0.1"}
        with pytest.raises(ConfigurationError):
            parse_assignments(["seed"])

    def test_resolved_file_and_hash(self, tmp_path):
        settings = load_settings(overrides={"seed": 5}, environ={})
        path = settings.write_resolved(tmp_path)
        text = path.read_text()
        assert "seed=5\n" in text
        assert "bench_lengths=256,1024,4096,16384\n" in text
        assert settings.config_hash == load_settings(overrides={"seed": 5}, environ={}).config_hash
        assert settings.config_hash != load_settings(overrides={"seed": 6}, environ={}).config_hash


# =============================================================================
# Exit codes
# =============================================================================

class TestExitCodes:

    def test_help(self):
        assert main(["--help"]) == EXIT_OK

    def test_no_command(self):
        assert main([]) == EXIT_USAGE

    def test_unknown_command(self):
        assert main(["paint"]) == EXIT_USAGE

    def test_stylize_needs_a_style(self, tmp_path):
        assert main(["stylize", "--content", "in.png", "--out", "out.png", "--run-dir", str(tmp_path)]) == EXIT_USAGE

    def test_bad_set_key(self, tmp_path):
        assert main(["--run-dir", str(tmp_path), "--set", "colour=red", "gradcheck"]) == EXIT_USAGE

    def test_eval_without_checkpoint(self, tmp_path):
        assert main(["eval", "--run-dir", str(tmp_path / "run"), "--quiet"]) == EXIT_USAGE

    def test_train_without_dataset(self, tmp_path):
        code = main(["train", "--stage", "1", "--quiet", "--run-dir", str(tmp_path / "run"),
                     "--dataset-dir", str(tmp_path / "absent")])
        assert code == EXIT_USAGE

    def test_gradcheck_subset(self, tmp_path):
        assert main(["gradcheck", "--ops", "add,softmax", "--instances", "2", "--quiet", "--run-dir", str(tmp_path)]) == EXIT_OK
        results = json.loads((tmp_path / "gradcheck.json").read_text())
        assert set(results) == {"add", "softmax"}
        assert all(r["passed"] for r in results.values())
        assert (tmp_path / RESOLVED_NAME).is_file()

    def test_gradcheck_unknown_case(self, tmp_path):
        assert main(["gradcheck", "--ops", "nope", "--quiet", "--run-dir", str(tmp_path)]) == EXIT_USAGE

    def test_runtime_failure(self, tmp_path, monkeypatch):
        def diverge(self, names=None, instances=20):
            raise DivergenceError("diverged at step 4", checkpoint_path=tmp_path / "last.json", step=4)

        monkeypatch.setattr("clast.ClastExperiment.gradcheck", diverge)
        assert main(["gradcheck", "--quiet", "--run-dir", str(tmp_path)]) == EXIT_FAILURE

    def test_flags_before_and_after_command(self, tmp_path):
        before, after = tmp_path / "before", tmp_path / "after"
        assert main(["--seed", "7", "--run-dir", str(before), "--quiet", "gradcheck", "--ops", "add", "--instances", "1"]) == EXIT_OK
        assert main(["gradcheck", "--ops", "add", "--instances", "1", "--seed", "7", "--run-dir", str(after), "--quiet"]) == EXIT_OK
        assert (before / RESOLVED_NAME).read_text() == (after / RESOLVED_NAME).read_text().replace(str(after), str(before))
        assert "seed=7\n" in (before / RESOLVED_NAME).read_text()


# =============================================================================
# Full pipeline
# =============================================================================

@pytest.mark.slow
class TestPipeline:

    def test_toy_protocol_end_to_end(self, tmp_path):
        run, data = tmp_path / "run", tmp_path / "dataset"
        base = ["--quiet", "--deterministic", "--run-dir", str(run), "--dataset-dir", str(data)] + TINY_FLAGS

        assert main(base + ["build-dataset"]) == EXIT_OK
        assert (data / "manifest.json").is_file()
        assert main(base + ["train", "--stage", "1"]) == EXIT_OK
        assert main(base + ["train", "--stage", "2"]) == EXIT_OK
        assert (run / "checkpoints" / "stage2.json").is_file()
        assert main(base + ["eval"]) == EXIT_OK
        report = json.loads((run / "eval.json").read_text())
        assert 0.0 <= report["deception_rate"] <= 1.0
        assert main(base + ["analyze-correlation"]) == EXIT_OK
        assert (run / "correlation.csv").is_file()

        out = tmp_path / "out.png"
        assert main(base + ["stylize", "--content", str(data / "content_0.png"), "--text", "style-1", "--out", str(out)]) == EXIT_OK
        assert out.is_file()
        code = main(base + ["stylize", "--content", str(data / "content_0.png"), "--text", "style-9", "--out", str(out)])
        assert code == EXIT_USAGE

        assert main(base + ["ablate", "--presets", "baseline,clip"]) == EXIT_OK
        ablation = json.loads((run / "ablation.json").read_text())
        assert set(ablation["presets"]) == {"baseline", "clip"}
        assert main(base + ["plot"]) == EXIT_OK

    def test_stage2_logs_are_reproducible(self, tmp_path):
        logs = []
        for name in ("a", "b"):
            run, data = tmp_path / name / "run", tmp_path / name / "dataset"
            base = ["--quiet", "--deterministic", "--run-dir", str(run), "--dataset-dir", str(data)] + TINY_FLAGS
            for command in (["build-dataset"], ["train", "--stage", "1"], ["train", "--stage", "2"]):
                assert main(base + command) == EXIT_OK
            logs.append((run / "losses.csv").read_bytes())
        assert logs[0] == logs[1]
