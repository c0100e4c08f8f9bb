"""E2E tests for CLI error handling: every subcommand fails with a clean message."""

import json
import subprocess

import pytest


@pytest.mark.e2e
class TestCLIErrorHandling:
    """Verify the installed CLI produces clean errors (no Python tracebacks)."""

    @pytest.mark.parametrize(
        ("payload", "command", "expected_error"),
        [
            ({"seed": 1, "frobnicate": True}, "effective", "frobnicate"),
            ({"regime": {"regime": "gamma_zero", "gamma": 1.0}}, "effective", "takes no gamma"),
            ({"effective": {"a0": [[-1.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, -1.0]]}, "load": {"L": 1.0}}, "solve", "Error:"),
            ({"material": {"kind": "isotropic", "lambda": 1.0, "mu": 1.0}}, "birkhoff", "'birkhoff' block"),
        ],
        ids=["unknown-key", "gamma-in-gamma-zero", "indefinite-form", "missing-birkhoff"],
    )
    def test_clean_config_error(self, tmp_path, payload, command, expected_error):
        config = tmp_path / "run.json"
        config.write_text(json.dumps(payload), encoding="utf-8")
        result = subprocess.run(
            ["uv", "run", "rod_homogenization", command, "-c", str(config)],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert result.returncode == 2
        assert expected_error in result.stderr
        assert "Traceback" not in result.stderr

    def test_unknown_subcommand(self):
        result = subprocess.run(
            ["uv", "run", "rod_homogenization", "frobnicate"], capture_output=True, text=True, timeout=120
        )
        assert result.returncode == 2
        assert "Error:" in result.stderr
        assert "Traceback" not in result.stderr
