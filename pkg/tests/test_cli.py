"""
Unit Tests for the command-line surface: flag parsing, output files,
exit codes and manifest replay
"""
import argparse
import json
import math

import pytest

from config import settings
from errors import UsageError
from main import main, run
from randwalk.renewal import RenewalMethod
from reporting.output import dumps, format_float, strip_keys
from reporting.run_config import Command, OutputFormat, parse_config, sci_int


@pytest.fixture
def isolated_settings(monkeypatch):
    """run() writes block size and workers into the shared settings"""
    monkeypatch.setattr(settings, "BLOCK_SIZE", settings.BLOCK_SIZE)
    monkeypatch.setattr(settings, "WORKERS", settings.WORKERS)


class TestParseConfig:
    """Flags into a validated RunConfig"""

    def test_sci_int(self):
        assert sci_int("1e6") == 1_000_000
        assert sci_int("2.5e3") == 2500
        assert sci_int("42") == 42
        for bad in ("1.5", "nan", "ten"):
            with pytest.raises(argparse.ArgumentTypeError):
                sci_int(bad)

    def test_flags_either_side_of_subcommand(self, fixture_path):
        env = str(fixture_path("reference_env"))
        before = parse_config(["--env", env, "--seed", "3", "--reps", "1e4", "estimate-survival", "--n-list", "4,8"])
        after = parse_config(["estimate-survival", "--env", env, "--seed", "3", "--reps", "1e4", "--n-list", "4,8"])
        assert before == after
        assert before.command == Command.estimate_survival
        assert before.reps == 10_000
        assert before.ns == (4, 8)

    def test_missing_env(self):
        with pytest.raises(UsageError, match="--env"):
            parse_config(["solve-beta", "--seed", "1"])

    def test_missing_subcommand(self, fixture_path):
        with pytest.raises(UsageError, match="subcommand"):
            parse_config(["--env", str(fixture_path("reference_env"))])

    def test_env_file_must_exist(self, tmp_path):
        with pytest.raises(UsageError, match="not found"):
            parse_config(["solve-beta", "--env", str(tmp_path / "nope.json"), "--seed", "1"])

    def test_seed_drawn_when_omitted(self, fixture_path):
        config = parse_config(["solve-beta", "--env", str(fixture_path("reference_env"))])
        assert 0 <= config.seed < 2 ** 64

    def test_n_list_increasing(self, fixture_path):
        with pytest.raises(UsageError, match="ns"):
            parse_config(["flatness", "--env", str(fixture_path("reference_env")), "--seed", "1", "--n-list", "8,4"])

    def test_csv_rules(self, fixture_path):
        """Multi-table CSV needs a directory; scalar commands have no CSV"""
        env = str(fixture_path("reference_env"))
        with pytest.raises(UsageError, match="directory"):
            parse_config(["verify", "--env", env, "--seed", "1", "--format", "csv"])
        with pytest.raises(UsageError, match="tabular"):
            parse_config(["solve-beta", "--env", env, "--seed", "1", "--format", "csv", "--out", "x.csv"])
        config = parse_config(["renewal", "--env", env, "--seed", "1", "--format", "csv"])
        assert not config.multi_table

    def test_verify_defaults_to_ladder(self, fixture_path):
        env = str(fixture_path("reference_env"))
        assert parse_config(["verify", "--env", env, "--seed", "1"]).renewal_method == RenewalMethod.ladder
        assert parse_config(["renewal", "--env", env, "--seed", "1"]).renewal_method == RenewalMethod.series
        config = parse_config(["verify", "--env", env, "--seed", "1", "--renewal-method", "series"])
        assert config.renewal_method == RenewalMethod.series

    def test_unknown_suite(self, fixture_path):
        with pytest.raises(UsageError, match="suite"):
            parse_config(["verify", "--env", str(fixture_path("reference_env")), "--seed", "1", "--suite", "theorem9"])

    def test_manifest_path(self, fixture_path, tmp_path):
        env = str(fixture_path("reference_env"))
        assert parse_config(["solve-beta", "--env", env, "--seed", "1"]).manifest_path().name == "bpre-manifest.json"
        out = tmp_path / "beta.json"
        config = parse_config(["solve-beta", "--env", env, "--seed", "1", "--out", str(out)])
        assert config.manifest_path() == tmp_path / "beta.json.manifest.json"
        tables = parse_config(["verify", "--env", env, "--seed", "1", "--format", "csv", "--out", str(tmp_path / "v")])
        assert tables.manifest_path() == tmp_path / "v" / "manifest.json"


class TestOutput:
    """17-digit float formatting"""

    def test_format_float(self):
        assert format_float(1.0) == "1.0"
        assert format_float(-3.0) == "-3.0"
        assert format_float(0.1) == "0.10000000000000001"
        assert format_float(math.nan) == "NaN"
        assert format_float(-math.inf) == "-Infinity"

    def test_dumps_is_json(self):
        data = {"a": [1, 0.5, 2.0], "b": {"c": None, "d": True}, "e": []}
        assert json.loads(dumps(data)) == data


class TestRun:
    """End-to-end runs and exit codes"""

    def test_solve_beta(self, fixture_path, tmp_path, isolated_settings):
        out = tmp_path / "beta.json"
        code = main(["solve-beta", "--env", str(fixture_path("two_atom_pm1")), "--seed", "1", "--out", str(out)])
        assert code == 0
        payload = json.loads(out.read_text())
        # +-1 walk with p = 0.3: beta = ln(7/3) / 2
        assert payload["solution"]["beta"] == pytest.approx(math.log(7.0 / 3.0) / 2.0, rel=1e-9)
        manifest = json.loads((tmp_path / "beta.json.manifest.json").read_text())
        assert manifest["exit_code"] == 0
        assert manifest["config"]["seed"] == 1
        assert manifest["outputs"] == [str(out)]

    def test_usage_error_exit_code(self):
        assert main(["solve-beta", "--seed", "1"]) == 2

    def test_invalid_environment_exit_code(self, tmp_path, isolated_settings):
        env = tmp_path / "bad.json"
        env.write_text("{not json")
        code = main(["solve-beta", "--env", str(env), "--seed", "1", "--out", str(tmp_path / "o.json")])
        assert code == 2
        manifest = json.loads((tmp_path / "o.json.manifest.json").read_text())
        assert manifest["exit_code"] == 2
        assert "invalid JSON" in manifest["error"]

    def test_critical_environment_exit_code(self, fixture_path, tmp_path, isolated_settings):
        """Runtime errors still leave a manifest"""
        out = tmp_path / "o.json"
        code = main(["solve-beta", "--env", str(fixture_path("ssrw")), "--seed", "1", "--out", str(out)])
        assert code == 3
        assert not out.exists()
        manifest = json.loads((tmp_path / "o.json.manifest.json").read_text())
        assert manifest["error"].startswith("NotSubcritical")

    def test_manifest_replay_reproduces_numbers(self, fixture_path, tmp_path, isolated_settings):
        """Every field but the timings is byte-identical on replay"""
        first = tmp_path / "first.json"
        argv = ["estimate-survival", "--env", str(fixture_path("reference_env")), "--seed", "11",
                "--reps", "2000", "--n-list", "3,5", "--out", str(first)]
        assert run(parse_config(argv)) == 0
        second = tmp_path / "second.json"
        replay = parse_config(["--from-manifest", str(tmp_path / "first.json.manifest.json"), "--out", str(second)])
        assert replay.seed == 11
        assert replay.ns == (3, 5)
        assert run(replay) == 0
        a, b = json.loads(first.read_text()), json.loads(second.read_text())
        assert "elapsed_ms" in a["estimates"][0]
        assert dumps(strip_keys(a)) == dumps(strip_keys(b))
        digests = [json.loads((tmp_path / f"{name}.json.manifest.json").read_text())["result_digest"] for name in ("first", "second")]
        assert digests[0] is not None
        assert digests[0] == digests[1]

    def test_single_n_estimate(self, fixture_path, tmp_path, isolated_settings):
        """--n writes one flat estimate with its timing"""
        out = tmp_path / "estimate.json"
        argv = ["estimate-survival", "--env", str(fixture_path("reference_env")), "--n", "6",
                "--method", "tilted-is", "--reps", "2e3", "--seed", "7", "--out", str(out)]
        assert main(argv) == 0
        payload = json.loads(out.read_text())
        assert {"value", "stderr", "reps", "method", "elapsed_ms"} <= set(payload)
        assert payload["reps"] == 2000
        assert payload["method"] == "tilted-is"
        assert 0.0 < payload["value"] < 1.0

    def test_n_and_n_list_exclusive(self, fixture_path):
        with pytest.raises(UsageError, match="exclusive"):
            parse_config(["estimate-survival", "--env", str(fixture_path("reference_env")), "--seed", "1",
                          "--n", "6", "--n-list", "4,8"])

    def test_replay_missing_manifest(self, tmp_path):
        with pytest.raises(UsageError):
            parse_config(["--from-manifest", str(tmp_path / "none.json")])

    def test_oracle_survival(self, fixture_path, tmp_path, isolated_settings):
        out = tmp_path / "oracle.json"
        argv = ["oracle", "--env", str(fixture_path("reference_env")), "--seed", "1",
                "--quantity", "survival", "--n", "3", "--out", str(out)]
        assert main(argv) == 0
        payload = json.loads(out.read_text())
        assert 0.0 < payload["value"] < 1.0

    def test_renewal_csv(self, fixture_path, tmp_path, isolated_settings):
        """A .csv --out selects CSV without --format"""
        out = tmp_path / "u.csv"
        argv = ["renewal", "--env", str(fixture_path("two_atom_pm1")), "--seed", "2", "--reps", "2000",
                "--K", "8", "--xmax", "4", "--out", str(out)]
        assert parse_config(argv).format == OutputFormat.csv
        assert main(argv) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "x,estimate,stderr,K_term"
        assert len(lines) > 2
