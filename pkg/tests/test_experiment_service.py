"""
Validates: run recording and replay.

- every run leaves a manifest with a settings snapshot and digested outputs
- a failing run leaves a "failed" manifest before the error propagates
- replays under the stored settings reproduce outputs bit for bit
- settings overrides are validated and restored
"""

import pytest

from src.config import settings
from src.services.experiment_service import (
    VOLATILE_SETTINGS,
    ExperimentService,
    apply_settings,
    load_instances,
    overridden_settings,
    settings_snapshot,
)
from src.utils.exceptions import ConfigException


INSTANCE = {"signs": [1, -1, 1], "sizes": [2, 2, 1], "centers": [[0, 0], [1, 0], [0, 1]], "alpha": 2.0}


@pytest.fixture
def service(store):
    return ExperimentService(store, workers=1)


class TestSettingsOverrides:
    def test_snapshot_skips_volatile_fields(self):
        snapshot = settings_snapshot()
        assert not VOLATILE_SETTINGS & set(snapshot)
        assert snapshot["dt_factor"] == settings.dt_factor

    def test_unknown_key(self):
        with pytest.raises(ConfigException, match="unknown settings"):
            apply_settings({"no_such_setting": 1})

    def test_invalid_value(self):
        with pytest.raises(ConfigException, match="invalid settings"):
            apply_settings({"workers": "many"})

    def test_override_is_restored(self):
        before = settings.enumeration_budget
        with overridden_settings({"enumeration_budget": 123.0, "out_dir": "elsewhere"}):
            assert settings.enumeration_budget == 123.0
        assert settings.enumeration_budget == before


class TestRecording:
    def test_sample_gff_outputs(self, service, store):
        result = service.sample_gff(2, seed=3, count=2)
        manifest = store.read_manifest(result.manifest.run_id)
        assert manifest.status == "ok"
        assert manifest.params == {"N": 2, "count": 2}
        names = set(manifest.digests())
        assert {"gff_0000.wnls", "gff_0001.wnls", "samples.csv", "samples.summary.json"} <= names
        assert result.summary["samples"] == 2
        field = store.read_field(manifest.run_id, "gff_0001")
        assert field.cutoff == 2

    def test_counting_inline_instances(self, service, store):
        result = service.counting(seed=0, instances=[INSTANCE])
        rows = store.read_table(result.manifest.run_id, "counts")
        assert len(rows) == 1
        assert result.manifest.params["instances"] == [INSTANCE]

    def test_invalid_instance(self, service):
        with pytest.raises(ConfigException, match="invalid counting instance"):
            service.counting(seed=0, instances=[{"signs": [1, 2], "sizes": [2, 2]}])

    def test_failed_run_keeps_manifest(self, service, store):
        with pytest.raises(ValueError):
            service.evolve(8, 1, 0.5, seed=0, dt=1.0)
        manifest = store.list_runs()[0]
        assert manifest.kind == "evolve"
        assert manifest.status == "failed"
        assert manifest.message

    def test_unknown_kind(self, service):
        with pytest.raises(ConfigException, match="unknown experiment kind"):
            service.run("forecast", seed=0)

    def test_run_dispatches_dashed_kinds(self, service):
        result = service.run("sample-gff", seed=1, N=2)
        assert result.manifest.kind == "sample-gff"


class TestReplay:
    def test_counting_replay_is_identical(self, service, store):
        original = service.counting(seed=5, count=3, n=2, max_size=2)
        report = service.replay(original.manifest.run_id)
        assert report.identical
        replayed = store.read_manifest(report.replay_id)
        assert replayed.replay_of == original.manifest.run_id

    def test_evolve_replay_is_identical(self, service):
        original = service.evolve(2, 1, 0.1, seed=2, save_stride=1)
        report = service.replay(original.manifest.run_id)
        assert report.identical
        assert "trajectory.wnls" in report.matches

    def test_replay_uses_stored_settings(self, service, store, monkeypatch):
        original = service.sample_gff(2, seed=4)
        monkeypatch.setattr(settings, "dt_factor", settings.dt_factor / 2)
        changed = settings.dt_factor
        report = service.replay(original.manifest.run_id)
        assert report.identical
        assert settings.dt_factor == changed
        assert store.read_manifest(report.replay_id).settings["dt_factor"] == 2 * changed


class TestLoadInstances:
    def test_single_object(self, tmp_path):
        path = tmp_path / "one.json"
        path.write_text('{"signs": [1, 1], "sizes": [2, 2]}')
        assert load_instances(path) == [{"signs": [1, 1], "sizes": [2, 2]}]

    def test_unreadable(self, tmp_path):
        with pytest.raises(ConfigException, match="cannot read"):
            load_instances(tmp_path / "missing.json")
