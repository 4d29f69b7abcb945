import json

import pytest
from click.testing import CliRunner

from bwpipe.cli import main
from tests.test_pipeline import LIGHT_CONFIG


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, **overrides):
    raw = json.loads(json.dumps(LIGHT_CONFIG))
    raw["output_dir"] = str(tmp_path / "out")
    raw["models"] = [
        {"name": "gbr", "kind": "gbr", "params": {"n_iterations": 25, "max_depth": 2}}
    ]
    raw["evaluation"] = {"test_fraction": 0.25, "pdp_features": 1, "pdp_points": 8}
    raw.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(raw))
    return path


class TestValidate:
    def test_good_config(self, runner, tmp_path):
        path = write_config(tmp_path)
        result = runner.invoke(main, ["validate", "--config", str(path)])
        assert result.exit_code == 0
        assert "config hash" in result.output

    def test_bad_config_exits_two(self, runner, tmp_path):
        path = write_config(tmp_path, selection={"methods": ["bogus"]})
        result = runner.invoke(main, ["validate", "--config", str(path)])
        assert result.exit_code == 2

    def test_malformed_json_exits_two(self, runner, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        result = runner.invoke(main, ["validate", "--config", str(path)])
        assert result.exit_code == 2


class TestStageCommands:
    def test_report_without_model_exits_three(self, runner, tmp_path):
        path = write_config(tmp_path)
        result = runner.invoke(main, ["report", "--config", str(path)])
        assert result.exit_code == 3
        assert "missing upstream" in result.output

    def test_full_sequence(self, runner, tmp_path):
        path = write_config(tmp_path)
        for stage in ("synth", "filter", "profile", "impute", "select", "train", "explain", "report"):
            result = runner.invoke(main, [stage, "--config", str(path)])
            assert result.exit_code == 0, f"{stage}: {result.output}"
        out = tmp_path / "out"
        assert (out / "report" / "comparison.csv").exists()
        selected = json.loads((out / "select" / "selected.json").read_text())
        assert len(selected["features"]) == 5

    def test_train_emits_posterior_with_configured_trees(self, runner, tmp_path):
        path = write_config(
            tmp_path,
            models=[
                {"name": "bart", "kind": "bart", "params": {"n_trees": 9, "n_iterations": 24, "burn_in": 12, "thin": 3}}
            ],
        )
        for stage in ("synth", "filter", "impute", "select", "train"):
            result = runner.invoke(main, [stage, "--config", str(path)])
            assert result.exit_code == 0, result.output
        from bwpipe.models import load_model

        post = load_model(tmp_path / "out" / "train" / "model_bart.json")
        assert post.n_draws == (24 - 12 + 2) // 3
        assert all(len(post.draw(i).trees) == 9 for i in range(post.n_draws))


class TestRun:
    def test_run_and_init_config(self, runner, tmp_path):
        cfg_path = tmp_path / "default.json"
        result = runner.invoke(main, ["init-config", "--out", str(cfg_path)])
        assert result.exit_code == 0
        assert json.loads(cfg_path.read_text())["selection"]["budget"] == 20

        path = write_config(tmp_path)
        result = runner.invoke(main, ["run", "--config", str(path)])
        assert result.exit_code == 0
        assert (tmp_path / "out" / "report" / "metrics.json").exists()
