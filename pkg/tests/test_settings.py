import os
from fractions import Fraction

import pytest
from gmpy2 import mpq
from pydantic import ValidationError

from gw_border.errors import InvalidInputError
from gw_border.settings import load_settings
from gw_border.utils import envelope, format_exact, format_float, get_family_output_folder, render_csv, round_sig


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("GW_BORDER_THREADS", "GW_BORDER_LOG_LEVEL", "GW_BORDER_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)


class TestSettings:
    def test_packaged_defaults(self):
        settings = load_settings()
        assert settings.cli.schema_id == "gw-border/1"
        assert settings.cli.precision == 15
        assert settings.sampler.streams == 16
        assert settings.oracle.max_n == 14
        assert settings.series.kronecker_threshold == 24
        assert settings.family.apex_radius_margin == 1e-9

    def test_environment_overrides(self, monkeypatch, tmp_path):
        monkeypatch.setenv("GW_BORDER_THREADS", "4")
        monkeypatch.setenv("GW_BORDER_LOG_LEVEL", "debug")
        monkeypatch.setenv("GW_BORDER_OUTPUT_DIR", str(tmp_path))
        settings = load_settings()
        assert settings.cli.threads == 4
        assert settings.cli.log_level == "DEBUG"
        assert settings.cli.output_dir == str(tmp_path)

    def test_bad_thread_count(self, monkeypatch):
        monkeypatch.setenv("GW_BORDER_THREADS", "four")
        with pytest.raises(InvalidInputError):
            load_settings()

    def test_missing_file_falls_back(self, tmp_path):
        assert load_settings(tmp_path / "absent.yaml").sampler.attempt_factor == 20

    def test_partial_file(self, tmp_path):
        path = tmp_path / "settings.yaml"
        path.write_text("oracle:\n  max_n: 10\n", encoding="utf-8")
        settings = load_settings(path)
        assert settings.oracle.max_n == 10
        assert settings.cli.trunc == 256

    def test_broken_yaml(self, tmp_path):
        path = tmp_path / "settings.yaml"
        path.write_text("cli: [unclosed\n", encoding="utf-8")
        with pytest.raises(InvalidInputError):
            load_settings(path)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "settings.yaml"
        path.write_text("sampler:\n  window: 3\n", encoding="utf-8")
        with pytest.raises(ValidationError):
            load_settings(path)


class TestFormatting:
    def test_format_float(self):
        assert format_float(0.1 + 0.2) == "0.3"
        assert format_float(1.0) == "1"
        assert format_float(None) == ""
        assert format_float(float("nan")) == "nan"
        assert format_float(float("-inf")) == "-inf"
        assert format_float(2 / 3, 4) == "0.6667"

    def test_round_sig(self):
        assert round_sig(0.1 + 0.2) == 0.3
        assert round_sig(None) is None

    def test_format_exact(self):
        assert format_exact(mpq(6, 4)) == "3/2"
        assert format_exact(Fraction(4, 2)) == "2"
        assert format_exact(0) == "0"

    def test_render_csv(self):
        assert render_csv(["a", "b"], [[1, "x"], [2, ""]]) == "a,b\n1,x\n2,\n"

    def test_envelope(self):
        payload = envelope("limit", "plane", {"c_k": 0.5})
        assert payload == {"schema": "gw-border/1", "command": "limit", "family": "plane", "c_k": 0.5}

    def test_output_folder(self, tmp_path):
        folder = get_family_output_folder("custom:my_psi", str(tmp_path))
        assert os.path.isdir(folder)
        assert os.path.basename(folder) == "custom_my_psi"
