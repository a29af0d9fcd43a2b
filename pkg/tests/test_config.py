import pytest

from smlpde.config import (default_config, format_config, parse_config,
                           parse_config_text)
from smlpde.errors import ConfigError


class TestRoundTrip:
    def test_print_parse_print_byte_identical(self):
        text = format_config(default_config())
        cfg = parse_config_text(text)
        assert format_config(cfg) == text

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "exp.cfg"
        text = format_config(default_config())
        path.write_text(text, encoding="utf-8")
        cfg = parse_config(path)
        assert format_config(cfg) == text

    def test_overrides_survive(self):
        text = format_config(default_config()).replace(
            "nx = 65", "nx = 33").replace("m_max = 5", "m_max = 2")
        cfg = parse_config_text(text)
        assert cfg.get("grid", "nx") == 33
        assert cfg.get("schedule", "m_max") == 2


class TestStrictness:
    def test_unknown_key_names_key_and_line(self):
        text = "[schedule]\nlamda0 = 1.0\n"
        with pytest.raises(ConfigError) as info:
            parse_config_text(text)
        assert "lamda0" in str(info.value)
        assert "line 2" in str(info.value)

    def test_unknown_section(self):
        with pytest.raises(ConfigError) as info:
            parse_config_text("[scheduler]\n")
        assert "scheduler" in str(info.value)

    def test_malformed_value(self):
        with pytest.raises(ConfigError) as info:
            parse_config_text("[grid]\nnx = sixty-five\n")
        assert "line 2" in str(info.value)

    def test_duplicate_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("[grid]\nnx = 5\nnx = 7\n")

    def test_key_outside_section(self):
        with pytest.raises(ConfigError):
            parse_config_text("nx = 5\n")

    def test_comments_and_blanks_ignored(self):
        text = "# a comment\n\n[grid]\n# another\nnx = 33  # trailing\n"
        cfg = parse_config_text(text)
        assert cfg.get("grid", "nx") == 33


class TestValidation:
    def test_schedule_sequence_documented(self):
        cfg = default_config()
        lam0 = cfg.get("schedule", "lambda0")
        a = cfg.get("schedule", "growth")
        seq = [lam0 * a**m for m in (1, 2, 3)]
        assert seq == [4.0, 16.0, 64.0]

    def test_bad_method(self):
        text = "[optimizer]\nmethod = sgd\n"
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_bad_kind(self):
        with pytest.raises(ConfigError):
            parse_config_text("[ground_truth]\nkind = advection\n")

    def test_nonpositive_schedule(self):
        with pytest.raises(ConfigError):
            parse_config_text("[schedule]\ngrowth = 0.0\n")

    def test_small_margin_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("[weights]\nbox_margin = 1.0\n")
