import json

import numpy as np
import pytest

from gkdv_blowup.cli import (
    EXIT_CONFIG,
    PIPELINE_SCHEMA,
    RunConfig,
    RunManifest,
    content_hash,
    emit_report,
    load_profiles,
    main,
    parse_config_file,
    run_pipeline,
    save_profiles,
    validate_parameters,
)
from gkdv_blowup.errors import ConfigError, MissingArtifactError
from gkdv_blowup.grid import line_grid, write_csv

SMOKE = {
    "n": "81", "domain_left": "-48", "domain_right": "16",
    "t_end": "0.38", "dt_divisor": "2", "snapshots": "24",
}


class TestConfigHandling:
    def test_parse_config_file(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# comment\nn = 50\n\ngamma = 0.95  # inline\n")
        assert parse_config_file(p) == {"n": "50", "gamma": "0.95"}

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("n 50\n")
        with pytest.raises(ConfigError):
            parse_config_file(p)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            validate_parameters({"ggamma": "0.9"}, PIPELINE_SCHEMA)

    def test_type_coercion(self):
        params = validate_parameters({"n": "64", "gamma": "0.95"}, PIPELINE_SCHEMA)
        assert params["n"] == 64 and params["gamma"] == 0.95

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            validate_parameters({"n": "many"}, PIPELINE_SCHEMA)

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        code = main(["pipeline", "--output-dir", str(tmp_path),
                     "--set", "ggamma", "0.9"])
        assert code == EXIT_CONFIG


class TestSubcommands:
    def test_constants_json(self, capsys):
        assert main(["constants"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert set(out) == {"mass_L2_sq", "l1_norm", "pq_pairing", "tail_coefficient"}
        assert out["mass_L2_sq"] == pytest.approx(np.sqrt(3.0) * np.pi / 2.0)

    def test_spectrum_json(self, capsys):
        assert main(["spectrum", "--set", "spacing", "0.05"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["n_negative"] == 1
        assert out["kernel_dim"] == 1

    def test_profiles_roundtrip(self, tmp_path, capsys):
        assert main(["profiles", "--output-dir", str(tmp_path),
                     "--set", "K", "2", "--set", "grid_left", "-80"]) == 0
        summary = json.loads((tmp_path / "profile_summary.json").read_text())
        assert summary["K"] == 2
        ps = load_profiles(tmp_path)
        assert ps.betas[2] == pytest.approx(2.0, abs=1e-6)

    def test_decompose_subcommand(self, tmp_path, capsys, profile_set_k3):
        from gkdv_blowup.profiles import localized_expansion_values
        from gkdv_blowup.grid import GridFunction
        g = line_grid(-60.0, 60.0, 1.0 / 32.0)
        qb, _ = localized_expansion_values(profile_set_k3, -0.01, 0.9, g.nodes)
        src = tmp_path / "state.csv"
        write_csv(GridFunction(g, qb), src)
        assert main(["decompose", "--output-dir", str(tmp_path / "out"),
                     "--set", "input", str(src), "--set", "K", "3"]) == 0
        state = json.loads((tmp_path / "out" / "state.json").read_text())
        assert state["b"] == pytest.approx(-0.01, abs=1e-7)
        assert (tmp_path / "out" / "epsilon.csv").exists()


class TestPipelineContracts:
    def test_rerun_skips_all_stages(self, acceptance_run):
        messages = []
        cfg = RunConfig("pipeline", dict(acceptance_run.params),
                        acceptance_run.run_dir)
        run_pipeline(cfg, echo=messages.append)
        stage_lines = [m for m in messages if m.startswith("stage ")]
        assert len(stage_lines) == 5
        assert all("clean, skipping" in m for m in stage_lines)

    def test_manifest_covers_artifacts(self, acceptance_run):
        manifest = RunManifest.load(acceptance_run.run_dir)
        assert set(manifest.stages_done) == {
            "profiles", "initdata", "evolve", "decompose", "verify"}
        for rel, digest in manifest.artifact_checksums.items():
            path = acceptance_run.run_dir / rel
            assert path.exists()
            assert content_hash(path) == digest

    def test_report_regeneration_deterministic(self, acceptance_run):
        report = acceptance_run.run_dir / "report.md"
        before = report.read_bytes()
        emit_report(acceptance_run.run_dir)
        assert report.read_bytes() == before

    def test_emit_report_requires_artifacts(self, tmp_path):
        with pytest.raises(MissingArtifactError):
            emit_report(tmp_path)

    def test_determinism_byte_identical(self, tmp_path):
        params = validate_parameters(SMOKE, PIPELINE_SCHEMA)
        digests = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            run_pipeline(RunConfig("pipeline", dict(params), out),
                         echo=lambda *_: None)
            table = {}
            for f in sorted(out.rglob("*")):
                if f.is_file() and f.name != "manifest.json":
                    table[str(f.relative_to(out))] = content_hash(f)
            digests.append(table)
        assert digests[0] == digests[1]


def test_profile_persistence_roundtrip(tmp_path, profile_set_k3):
    files = save_profiles(profile_set_k3, tmp_path)
    assert all(f.exists() for f in files)
    back = load_profiles(tmp_path)
    assert back.K == profile_set_k3.K
    assert back.betas == pytest.approx(profile_set_k3.betas)
    for k in range(1, 4):
        assert np.array_equal(back.profile(k).values,
                              profile_set_k3.profile(k).values)
        np.testing.assert_allclose(back.left_coeffs[k],
                                   profile_set_k3.left_coeffs[k], rtol=0, atol=0)
