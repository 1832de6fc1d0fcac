import os
import sys
import unittest.mock
import pytest

from ..src.codec import serialize_log
from ..src.config import Mode, RrConfig
from ..src.fixtures import CATALOG, FixtureOptions, run_fixture
from ..src.harness import Outcome
from ..src.main import COMMANDS, build_parser, main
from ..src.runtime import session


MOCK_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), "mock_configs", "mock.yml")

PASS = [sys.executable, "-c", "pass"]
FAIL = [sys.executable, "-c", "import sys; sys.exit(1)"]
WRITES_LOG = [sys.executable, "-c", "import os; open(os.environ['RR_RECORD_FILE'], 'w').write('log')"]



@pytest.fixture
def recorded(tmp_path):
    """Record a fixture in-process and write its log, returning the path."""

    def record(name: str, messages: int = 5) -> str:
        path = str(tmp_path / f"{name}.log")
        with session(RrConfig(mode=Mode.RECORD)) as runtime:
            assert run_fixture(name, FixtureOptions(messages)) == 0
            serialize_log(runtime.recorder.snapshot(), path)
        return path

    return record



class TestFixtures:

    def test_list(self, capsys):

        assert main(["fixtures", "--list"]) == 0
        assert len(capsys.readouterr().out.splitlines()) == len(CATALOG)


    def test_run(self, capsys):

        with session(RrConfig()):
            assert main(["fixtures", "pingpong", "--messages", "10"]) == 0

        assert capsys.readouterr().out == "rounds=10 value=10\n"


    @pytest.mark.parametrize("argv", [
        ["fixtures"],
        ["fixtures", "bulk", "--messages", "0"],
        ["fixtures", "bulk", "--payload-bytes", "-1"],
    ])
    def test_usage(self, argv: list[str], capsys):

        assert main(argv) == 2
        assert capsys.readouterr().err.startswith("rr-channel: ")


    def test_unknown_name(self):

        with pytest.raises(SystemExit):
            main(["fixtures", "nope"])



class TestLogTools:

    def test_dump(self, recorded, capsys):

        assert main(["dump", recorded("pingpong", 3)]) == 0

        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "# rr-log version=1 entries=12"
        assert len(lines) == 13


    def test_graph_file(self, recorded, tmp_path):
        out = str(tmp_path / "comm.dot")

        assert main(["graph", "--dot", out, recorded("pipeline")]) == 0
        with open(out) as f:
            dot = f.read()
        assert dot.startswith("digraph comm {")


    def test_graph_stdout(self, recorded, capsys):

        assert main(["graph", recorded("pingpong")]) == 0
        assert capsys.readouterr().out.rstrip().endswith("}")


    def test_cycles(self, recorded, capsys):

        assert main(["cycles", recorded("pingpong")]) == 1
        assert main(["cycles", recorded("pipeline")]) == 0


    def test_missing(self, tmp_path):

        assert main(["dump", str(tmp_path / "nope.log")]) == 2


    def test_garbage(self, tmp_path):
        path = tmp_path / "garbage.log"
        path.write_bytes(b"not a log at all")

        assert main(["cycles", str(path)]) == 2



class TestHarnessCommands:

    def test_stats(self, capsys):

        assert main(["stats", "--runs", "2", "--", *PASS]) == 0

        captured = capsys.readouterr()
        lines = captured.out.splitlines()
        assert len(lines) == 3
        assert lines[-1].startswith("summary mode=noop runs=2 expected=2 unexpected=0")
        assert captured.err.splitlines()[0].split()[0] == "mode"


    def test_without_separator(self, capsys):

        assert main(["stats", "--runs", "1", *FAIL]) == 0
        assert "unexpected=1" in capsys.readouterr().out


    @pytest.mark.parametrize("argv", [
        ["stats", "--mode", "replay", "--", *PASS],
        ["stats", "--runs", "0", "--", *PASS],
        ["stats"],
        ["stats", "--"],
        ["record", "--time-limit-ms", "0", "--", *PASS],
    ])
    def test_usage(self, argv: list[str], capsys):

        assert main(argv) == 2
        assert capsys.readouterr().err.startswith("rr-channel: ")


    def test_record_and_replay(self, tmp_path, capsys):
        log = str(tmp_path / "run.log")

        assert main(["record", "--log", log, "--", *WRITES_LOG]) == 0
        assert os.path.getsize(log) == 3
        assert main(["replay", "--log", log, "--", *PASS]) == 0
        assert main(["replay", "--log", log, "--", *FAIL]) == 1


    def test_record_stale_log(self, tmp_path, capsys):
        log = tmp_path / "run.log"
        log.write_bytes(b"from an earlier run")

        assert main(["record", "--log", str(log), "--", *PASS]) == 1
        assert not log.exists()
        assert capsys.readouterr().out.rstrip().endswith("log_bytes=-")


    def test_record_until_expected(self, tmp_path, capsys):
        log = str(tmp_path / "run.log")

        assert main(["record-until-expected", "--max-tries", "3", "--log", log, "--", *WRITES_LOG]) == 0
        assert capsys.readouterr().out == f"captured log={log} tries=1\n"

        assert main(["record-until-expected", "--max-tries", "2", "--log", log, "--", *FAIL]) == 1
        assert capsys.readouterr().out == "failed tries=2\n"


    def test_overhead(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)

        assert main(["overhead", "--runs", "1", "--", *WRITES_LOG]) == 0
        assert capsys.readouterr().out.startswith("noop_mean_ms=")


    def test_spawn_failure(self, tmp_path):

        assert main(["stats", "--runs", "1", "--", str(tmp_path / "no-such-binary")]) == 2



class TestConfig:

    def test_notify(self, capsys):

        with unittest.mock.patch("app.src.main.NotificationServiceRegistry") as registry:
            assert main(["stats", "--config", MOCK_CONFIG, "--runs", "1", "--", *PASS]) == 0

        registry.load_all.assert_called_once()
        assert os.path.normpath(registry.load_all.call_args.args[0]) == os.path.join(
            os.path.dirname(os.path.dirname(MOCK_CONFIG)), "mock_notifiers"
        )
        ids, title, summary, failed = registry.notify.call_args.args
        assert ids == ["test-runs"]
        assert title == "rr-channel stats (noop)"
        assert summary.startswith("summary mode=noop runs=1")
        assert not failed


    def test_no_notify_by_default(self, capsys):

        with unittest.mock.patch("app.src.main.NotificationServiceRegistry") as registry:
            assert main(["stats", "--runs", "1", "--", *PASS]) == 0

        registry.notify.assert_not_called()


    def test_overrides(self):
        args = build_parser().parse_args([
            "record", "--config", MOCK_CONFIG, "--expected-status", "3", "--desync-mode", "error", "--", *PASS,
        ])

        with unittest.mock.patch("app.src.main.run_once", return_value=(Outcome.EXPECTED, 0.0)) as run_once, \
             unittest.mock.patch("app.src.main._size", return_value=None):
            COMMANDS["record"](args)

        cfg = run_once.call_args.kwargs["cfg"]
        assert cfg.EXPECTED_STATUS == 3
        assert cfg.DESYNC_MODE == "error"
        assert cfg.TIME_LIMIT_MS == 5000
        assert cfg.MAX_TRIES == 20


    def test_missing_config(self, tmp_path):

        assert main(["stats", "--config", str(tmp_path / "nope.yml"), "--", *PASS]) == 2
