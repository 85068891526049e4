import pytest

from scourwatch.config import RunConfig, apply_overrides, load_config
from scourwatch.dataset import WindowSpec
from scourwatch.errors import ConfigError


class TestDefaults:
    def test_defaults_present(self):
        cfg = RunConfig()
        assert cfg.get("run", "seed") == 42
        assert cfg.get("dataset", "input_width") == 336
        assert cfg.get("neural", "optimizer") == "adam"
        assert cfg.get("harness", "repetitions") == 20

    def test_domain_objects(self):
        cfg = RunConfig()
        assert cfg.synth_spec().years == 2
        assert cfg.filter_spec().median_window == 5
        assert cfg.impute_spec().max_gap_samples == 60 * 24
        mc = cfg.model_config()
        assert mc.input_width == 336 and mc.label_width == 168
        grid = cfg.grid_spec()
        assert len(grid.cells()) == 144


class TestFileParsing:
    def test_file_values_applied(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text(
            "[dataset]\ninput_width = 48\nlabel_width = 24\n"
            "[neural]\nunits = 16\ndropout = 0.2\n"
            "[harness]\nwindows = (48,24);(96,24)\n"
        )
        cfg = load_config(p)
        assert cfg.get("dataset", "input_width") == 48
        assert cfg.get("neural", "dropout") == 0.2
        assert cfg.get("harness", "windows") == (WindowSpec(48, 24), WindowSpec(96, 24))

    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("[nonsense]\nx = 1\n")
        with pytest.raises(ConfigError, match="unknown config section"):
            load_config(p)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("[dataset]\nwidth = 48\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            load_config(p)

    def test_bad_value_rejected(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("[dataset]\ninput_width = wide\n")
        with pytest.raises(ConfigError, match="dataset.input_width"):
            load_config(p)


class TestOverrides:
    def test_set_override(self):
        cfg = RunConfig()
        apply_overrides(cfg, ["neural.units=64", "synth.frozen=false"])
        assert cfg.get("neural", "units") == 64
        assert cfg.get("synth", "frozen") is False

    def test_bad_override_format(self):
        with pytest.raises(ConfigError, match="section.key=value"):
            apply_overrides(RunConfig(), ["neuralunits:64"])

    def test_unknown_override_key(self):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), ["neural.width=64"])


class TestEcho:
    def test_render_stable_and_parseable(self, tmp_path):
        cfg = RunConfig()
        apply_overrides(cfg, ["neural.units=48"])
        text = cfg.render()
        assert text == cfg.render()
        p = tmp_path / "echo.cfg"
        p.write_text(text)
        back = load_config(p)
        assert back.get("neural", "units") == 48
        assert back.render() == text
