import json

import pytest

from sdcps.cli import main
from sdcps.config import load_config, system_config_from
from sdcps.errors import ConfigInvalid

SMALL_CONFIG = """\
system:
  n_local: 2
  switches_per_local: 1
  hosts_per_switch: 4
  partitions: 1
scenarios:
  Sc3:
    sweep: [200, 400]
  Sc1:
    sweep: [2, 3]
    requests: 50
"""


@pytest.fixture
def config_path(tmp_path):
    p = tmp_path / "config.yaml"
    p.write_text(SMALL_CONFIG)
    return str(p)


class TestConfigLoading:
    def test_load_and_build(self, config_path):
        raw = load_config(config_path)
        cfg = system_config_from(raw)
        assert cfg.n_local == 2 and cfg.hosts_per_switch == 4

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("system:\n  frobnicate: 3\n")
        with pytest.raises(ConfigInvalid):
            load_config(str(p))

    def test_bad_value_rejected(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("system:\n  n_local: 0\n")
        with pytest.raises(ConfigInvalid):
            load_config(str(p))

    def test_empty_file_gives_defaults(self, tmp_path):
        p = tmp_path / "empty.yaml"
        p.write_text("")
        assert system_config_from(load_config(str(p))).n_local == 8


class TestValidateVerb:
    def test_ok(self, config_path, capsys):
        assert main(["validate", "--config", config_path]) == 0
        assert "config ok" in capsys.readouterr().out

    def test_missing_file(self, tmp_path):
        assert main(["validate", "--config", str(tmp_path / "nope.yaml")]) == 1

    def test_invalid_config(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("system:\n  partitions: 99\n")
        assert main(["validate", "--config", str(p)]) == 1

    def test_unknown_verb_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2


class TestRunVerb:
    def test_csv_to_stdout(self, config_path, capsys):
        assert main(["run", "--config", config_path, "--scenario", "Sc3"]) == 0
        out = capsys.readouterr().out
        lines = out.strip().splitlines()
        assert lines[0].startswith("scenario,n_local")
        assert len(lines) == 3  # header + two sweep cells
        assert all(l.split(",")[5] in ("200", "400") for l in lines[1:])

    def test_jsonl_to_file_with_digest_sidecar(self, config_path, tmp_path):
        out = tmp_path / "report.jsonl"
        rc = main(["run", "--config", config_path, "--scenario", "Sc3",
                   "--format", "jsonl", "--out", str(out)])
        assert rc == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(rows) == 2
        sidecar = (tmp_path / "report.jsonl.digest").read_text().splitlines()
        assert len(sidecar) == 2
        assert sidecar[0].split(",")[-1] == rows[0]["trace_digest"]

    def test_seed_range(self, config_path, capsys):
        rc = main(["run", "--config", config_path, "--scenario", "Sc3",
                   "--seeds", "0..2"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 1 + 2 * 3

    def test_request_mode_scenario(self, config_path, capsys):
        rc = main(["run", "--config", config_path, "--scenario", "Sc1"])
        assert rc == 0
        for line in capsys.readouterr().out.strip().splitlines()[1:]:
            assert line.split(",")[6] == "50"


class TestReportVerb:
    def test_jsonl_reemitted_as_csv(self, config_path, tmp_path, capsys):
        saved = tmp_path / "r.jsonl"
        main(["run", "--config", config_path, "--scenario", "Sc3",
              "--format", "jsonl", "--out", str(saved)])
        capsys.readouterr()
        assert main(["report", "--trace", str(saved)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("scenario,n_local")


class TestReplayVerb:
    def test_replay_matches(self, config_path, tmp_path, capsys):
        sidecar = tmp_path / "digests.txt"
        main(["run", "--config", config_path, "--scenario", "Sc3",
              "--out", str(tmp_path / "r.csv"), "--trace", str(sidecar)])
        rc = main(["replay", "--config", config_path, "--scenario", "Sc3",
                   "--trace", str(sidecar)])
        assert rc == 0

    def test_replay_detects_mismatch(self, config_path, tmp_path, capsys):
        sidecar = tmp_path / "digests.txt"
        main(["run", "--config", config_path, "--scenario", "Sc3",
              "--out", str(tmp_path / "r.csv"), "--trace", str(sidecar)])
        text = sidecar.read_text()
        sidecar.write_text(text.replace(text[-10], "f" if text[-10] != "f"
                                        else "0", 1))
        rc = main(["replay", "--config", config_path, "--scenario", "Sc3",
                   "--trace", str(sidecar)])
        assert rc == 1

    def test_replay_different_seed_mismatches(self, config_path, tmp_path):
        sidecar = tmp_path / "digests.txt"
        main(["run", "--config", config_path, "--scenario", "Sc3",
              "--seed", "1", "--out", str(tmp_path / "r.csv"),
              "--trace", str(sidecar)])
        rc = main(["replay", "--config", config_path, "--scenario", "Sc3",
                   "--seed", "2", "--trace", str(sidecar)])
        assert rc == 1
