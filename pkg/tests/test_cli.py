"""
Validates: the command-line surface.

- subcommands write a run and exit 0
- usage and configuration errors exit 2, numerical aborts exit 3
- replay of a stored run reports bit-identical outputs
"""

import json

import pytest

import cli
from src.services import ExperimentService
from src.utils.exceptions import NumericalAbortException
from src.utils.run_store import RunStore


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "runs"


def run_cli(out_dir, *argv):
    return cli.main(["--out-dir", str(out_dir), *argv])


class TestCommands:
    def test_counting_with_instance_file(self, out_dir, tmp_path):
        path = tmp_path / "instances.json"
        path.write_text(json.dumps([{"signs": [1, -1], "sizes": [2, 2], "alpha": 1.0}]))
        assert run_cli(out_dir, "counting", "--instances", str(path)) == 0
        (manifest,) = RunStore(out_dir).list_runs()
        assert manifest.kind == "counting"
        assert (out_dir / manifest.run_id / "counts.csv").exists()

    def test_sample_gff(self, out_dir):
        assert run_cli(out_dir, "--seed", "7", "sample-gff", "--N", "2", "--count", "2") == 0
        (manifest,) = RunStore(out_dir).list_runs()
        assert manifest.seed == 7
        assert "gff_0001.wnls" in manifest.digests()

    def test_replay(self, out_dir):
        assert run_cli(out_dir, "counting", "--count", "3", "--n", "2", "--max-size", "2") == 0
        (original,) = RunStore(out_dir).list_runs()
        assert run_cli(out_dir, "replay", original.run_id) == 0
        replays = [m for m in RunStore(out_dir).list_runs() if m.replay_of == original.run_id]
        assert len(replays) == 1

    def test_config_sets_command_flags(self, out_dir, tmp_path):
        config = tmp_path / "lab.toml"
        config.write_text("[counting]\ncount = 2\nn = 2\nmax-size = 2\n")
        assert run_cli(out_dir, "--config", str(config), "counting") == 0
        (manifest,) = RunStore(out_dir).list_runs()
        assert manifest.params["count"] == 2
        assert manifest.params["max_size"] == 2


class TestExitCodes:
    def test_unknown_flag(self, out_dir):
        assert run_cli(out_dir, "counting", "--bogus") == 2

    def test_missing_subcommand(self, out_dir):
        assert run_cli(out_dir) == 2

    def test_loose_config_keys(self, out_dir, tmp_path):
        config = tmp_path / "lab.toml"
        config.write_text("seed = 3\n")
        assert run_cli(out_dir, "--config", str(config), "counting") == 2

    def test_unknown_option_in_section(self, out_dir, tmp_path):
        config = tmp_path / "lab.toml"
        config.write_text("[counting]\nwidth = 4\n")
        assert run_cli(out_dir, "--config", str(config), "counting") == 2

    def test_unknown_lab_setting(self, out_dir, tmp_path):
        config = tmp_path / "lab.toml"
        config.write_text("[lab]\nno_such_setting = 1\n")
        assert run_cli(out_dir, "--config", str(config), "counting") == 2

    def test_missing_config_file(self, out_dir, tmp_path):
        assert run_cli(out_dir, "--config", str(tmp_path / "absent.toml"), "counting") == 2

    def test_invalid_instance(self, out_dir, tmp_path):
        path = tmp_path / "instances.json"
        path.write_text(json.dumps({"signs": [1, 1], "sizes": [2]}))
        assert run_cli(out_dir, "counting", "--instances", str(path)) == 2

    def test_step_too_large(self, out_dir):
        assert run_cli(out_dir, "evolve", "--N", "8", "--t", "0.5", "--dt", "1.0") == 2

    def test_numerical_abort(self, out_dir, monkeypatch):
        def abort(self, *args, **kwargs):
            raise NumericalAbortException("norm grew")

        monkeypatch.setattr(ExperimentService, "evolve", abort)
        assert run_cli(out_dir, "evolve", "--N", "2") == 3

    def test_unknown_run(self, out_dir):
        assert run_cli(out_dir, "replay", "no-such-run") == 1
