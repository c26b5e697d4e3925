"""End-to-end tests of the hshadow command-line interface."""

import json

import pytest

from homodyne_shadows import cli
from homodyne_shadows.cli import (
    EXIT_DATA,
    EXIT_DESIGN_FAILED,
    EXIT_INCOMPLETE,
    EXIT_OK,
    EXIT_USAGE,
    main,
)


def run(argv):
    return main(list(argv))


class TestDesignBins:
    def test_writes_complete_scheme(self, tmp_path, capsys):
        out = tmp_path / "scheme.json"
        code = run(
            [
                "design-bins",
                "--nmax", "1",
                "--phases", "3",
                "--bins", "2",
                "--l0", "1.0",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["rank"] == 4 and doc["required"] == 4
        assert doc["n_max"] == 1 and doc["N"] == 3 and doc["M"] == 2
        assert len(doc["edges"]) == 3
        assert doc["edges"][0] == pytest.approx(-1.0)
        assert "complete scheme" in capsys.readouterr().out

    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_impossible_configuration_exits_2(self, tmp_path, capsys):
        code = run(
            [
                "design-bins",
                "--nmax", "5",
                "--phases", "4",
                "--bins", "6",
                "--max-iter", "10",
            ]
        )
        assert code == EXIT_DESIGN_FAILED
        assert "design-bins" in capsys.readouterr().err

    def test_missing_required_flag_exits_64(self):
        with pytest.raises(SystemExit) as excinfo:
            run(["design-bins", "--phases", "3", "--bins", "2"])
        assert excinfo.value.code == EXIT_USAGE


class TestCheckIC:
    def test_complete_scheme_exits_0(self, tmp_path, capsys):
        scheme = tmp_path / "scheme.json"
        assert run(
            [
                "design-bins",
                "--nmax", "1", "--phases", "3", "--bins", "2",
                "--out", str(scheme),
            ]
        ) == EXIT_OK
        capsys.readouterr()
        code = run(["check-ic", "--scheme", str(scheme), "--json"])
        assert code == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["complete"] is True
        assert doc["rank"] == 4
        assert doc["n_max"] == 1 and doc["N"] == 3 and doc["M"] == 2
        assert len(doc["spectrum_tail"]) <= 5
        assert doc["lambda_min"] > 0

    def test_incomplete_scheme_exits_3(self, capsys):
        # Two phases can never resolve a two-level coherence grid.
        code = run(["check-ic", "--nmax", "1", "--phases", "2", "--bins", "2"])
        assert code == EXIT_INCOMPLETE
        assert "incomplete" in capsys.readouterr().out

    def test_missing_scheme_file_exits_65(self, tmp_path, capsys):
        code = run(["check-ic", "--scheme", str(tmp_path / "nope.json")])
        assert code == EXIT_DATA

    def test_explicit_edges(self, capsys):
        code = run(
            [
                "check-ic",
                "--nmax", "1",
                "--phases", "3",
                "--edges=-4,0,4",
                "--tail-mode", "strict-finite",
            ]
        )
        # Mirror-symmetric bins: rank 3 of 4.
        assert code == EXIT_INCOMPLETE


class TestSimulate:
    ARGS = [
        "simulate",
        "--nmax", "1",
        "--phases", "3",
        "--bins", "3",
        "--state", "fock:1",
        "--T", "200",
        "--seed", "42",
    ]

    def test_repeated_runs_are_byte_identical(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert run(self.ARGS + ["--out", str(a)]) == EXIT_OK
        assert run(self.ARGS + ["--out", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().splitlines()[0] == "t,mode,k,i"
        assert len(a.read_text().splitlines()) == 201

    def test_seed_changes_the_stream(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert run(self.ARGS + ["--out", str(a)]) == EXIT_OK
        args = [v if v != "42" else "43" for v in self.ARGS]
        assert run(args + ["--out", str(b)]) == EXIT_OK
        assert a.read_bytes() != b.read_bytes()

    def test_zero_shots_exits_64(self, tmp_path, capsys):
        args = [v if v != "200" else "0" for v in self.ARGS]
        assert run(args + ["--out", str(tmp_path / "x.csv")]) == EXIT_USAGE

    def test_scheme_file_supplies_cutoff_and_phases(self, tmp_path, capsys):
        # A designed scheme records n_max and N, so simulate/estimate work
        # without repeating --nmax/--phases on the command line.
        scheme = tmp_path / "scheme.json"
        assert run(
            [
                "design-bins",
                "--nmax", "1", "--phases", "3", "--bins", "2",
                "--out", str(scheme),
            ]
        ) == EXIT_OK
        records = tmp_path / "records.csv"
        assert run(
            [
                "simulate",
                "--scheme", str(scheme),
                "--state", "fock:1",
                "--T", "100", "--seed", "3",
                "--out", str(records),
            ]
        ) == EXIT_OK
        capsys.readouterr()
        assert run(
            ["estimate", "--records", str(records), "--scheme", str(scheme), "--json"]
        ) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["T"] == 100

    def test_missing_geometry_flags_exit_64(self, tmp_path, capsys):
        code = run(
            [
                "simulate",
                "--state", "fock:1",
                "--T", "5", "--seed", "1",
                "--out", str(tmp_path / "x.csv"),
            ]
        )
        assert code == EXIT_USAGE
        assert "--nmax" in capsys.readouterr().err

    def test_unknown_state_spec_exits_64(self, tmp_path, capsys):
        args = [v if v != "fock:1" else "squeezed:2" for v in self.ARGS]
        assert run(args + ["--out", str(tmp_path / "x.csv")]) == EXIT_USAGE


class TestEstimate:
    def _simulate(self, tmp_path, T=400):
        records = tmp_path / "records.csv"
        assert run(
            [
                "simulate",
                "--nmax", "1", "--phases", "3", "--bins", "3",
                "--state", "fock:1",
                "--T", str(T), "--seed", "7",
                "--out", str(records),
            ]
        ) == EXIT_OK
        return records

    def test_end_to_end_report(self, tmp_path, capsys):
        records = self._simulate(tmp_path)
        capsys.readouterr()
        code = run(
            [
                "estimate",
                "--records", str(records),
                "--nmax", "1", "--phases", "3", "--bins", "3",
                "--observable", "number",
                "--seed", "7",
                "--json",
            ]
        )
        assert code == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert set(doc) == {
            "observable_label", "mean", "stderr", "T", "variant", "seed",
            "povm_cache_key",
        }
        assert doc["T"] == 400
        assert doc["observable_label"] == "n"
        assert doc["seed"] == 7
        # |1> has <n> = 1; 400 shots should land within a broad window
        assert abs(doc["mean"] - 1.0) <= 6 * doc["stderr"]

    def test_report_file_output(self, tmp_path):
        records = self._simulate(tmp_path)
        out = tmp_path / "report.json"
        code = run(
            [
                "estimate",
                "--records", str(records),
                "--nmax", "1", "--phases", "3", "--bins", "3",
                "--variant", "median-of-means:4",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["variant"] == "median-of-means:4"

    def test_malformed_records_exit_65(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,mode,k,i\n0,0,zero,0\n")
        code = run(
            [
                "estimate",
                "--records", str(bad),
                "--nmax", "1", "--phases", "3", "--bins", "3",
            ]
        )
        assert code == EXIT_DATA

    def test_empty_records_exit_65(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("t,mode,k,i\n")
        code = run(
            [
                "estimate",
                "--records", str(empty),
                "--nmax", "1", "--phases", "3", "--bins", "3",
            ]
        )
        assert code == EXIT_DATA

    def test_strict_inversion_on_singular_frame_exits_65(self, tmp_path, capsys):
        records = tmp_path / "records.csv"
        records.write_text("t,mode,k,i\n0,0,0,0\n1,0,1,1\n")
        base = [
            "estimate",
            "--records", str(records),
            "--nmax", "1", "--phases", "3",
            "--edges=-4,0,4",
            "--tail-mode", "strict-finite",
        ]
        assert run(base) == EXIT_DATA
        assert "pseudo" in capsys.readouterr().err
        assert run(base + ["--inversion", "pseudo"]) == EXIT_OK


class TestVarianceScan:
    # At a cutoff of 1 the unit coherent probe is heavily truncated and
    # incomplete grid points fall back to pseudo inversion; both warn.
    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_csv_shape_and_ic_flags(self, tmp_path):
        out = tmp_path / "scan.csv"
        code = run(
            [
                "variance-scan",
                "--sweep", "phases",
                "--range", "2:4",
                "--nmax", "1",
                "--bins", "3",
                "--out", str(out),
            ]
        )
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "param,value,variance,ic_flag"
        assert len(lines) == 4
        rows = [line.split(",") for line in lines[1:]]
        assert [r[0] for r in rows] == ["phases"] * 3
        assert [int(r[1]) for r in rows] == [2, 3, 4]
        # Two phases cannot be complete for n_max = 1; three can.
        assert int(rows[0][3]) == 0
        assert int(rows[1][3]) == 1

    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_explicit_values_grid(self, capsys):
        code = run(
            [
                "variance-scan",
                "--sweep", "bins",
                "--values", "3,5",
                "--nmax", "1",
                "--phases", "3",
            ]
        )
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 3
        assert [line.split(",")[1] for line in lines[1:]] == ["3", "5"]

    def test_grid_flag_validation(self, capsys):
        base = ["variance-scan", "--sweep", "bins", "--nmax", "1", "--phases", "3"]
        assert run(base) == EXIT_USAGE
        assert run(base + ["--range", "2:4", "--values", "3"]) == EXIT_USAGE
        assert run(base + ["--range", "4:2"]) == EXIT_USAGE


class TestConfigFile:
    def test_config_supplies_defaults(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nmax": 1, "phases": 3, "bins": 2}))
        code = run(["check-ic", "--json", "--config", str(cfg)])
        assert code in (EXIT_OK, EXIT_INCOMPLETE)
        doc = json.loads(capsys.readouterr().out)
        assert doc["n_max"] == 1 and doc["N"] == 3 and doc["M"] == 2

    def test_explicit_flag_beats_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bins": 4}))
        code = run(
            [
                "check-ic", "--json",
                "--nmax", "1", "--phases", "3", "--bins", "2",
                "--config", str(cfg),
            ]
        )
        assert code in (EXIT_OK, EXIT_INCOMPLETE)
        doc = json.loads(capsys.readouterr().out)
        assert doc["M"] == 2

    def test_unknown_key_exits_64(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"cutoff": 1}))
        code = run(
            [
                "check-ic",
                "--nmax", "1", "--phases", "3", "--bins", "2",
                "--config", str(cfg),
            ]
        )
        assert code == EXIT_USAGE
        assert "unknown key" in capsys.readouterr().err


class TestPovmCache:
    def test_cache_round_trip(self, tmp_path):
        cache = tmp_path / "povm.json"
        args = [
            "simulate",
            "--nmax", "1", "--phases", "3", "--bins", "3",
            "--state", "fock:0",
            "--T", "50", "--seed", "3",
            "--povm-cache", str(cache),
        ]
        a = tmp_path / "a.csv"
        assert run(args + ["--out", str(a)]) == EXIT_OK
        assert cache.exists()
        b = tmp_path / "b.csv"
        assert run(args + ["--out", str(b)]) == EXIT_OK  # loads the cache
        assert a.read_bytes() == b.read_bytes()

    def test_tampered_cache_exits_65(self, tmp_path, capsys):
        cache = tmp_path / "povm.json"
        args = [
            "check-ic",
            "--nmax", "1", "--phases", "3", "--bins", "3",
            "--povm-cache", str(cache),
        ]
        assert run(args) == EXIT_OK
        doc = json.loads(cache.read_text())
        doc["n_max"] = 3
        cache.write_text(json.dumps(doc))
        assert run(args) == EXIT_DATA


class TestTopLevel:
    def test_no_command_exits_64(self, capsys):
        assert run([]) == EXIT_USAGE

    def test_unknown_command_exits_64(self):
        with pytest.raises(SystemExit) as excinfo:
            run(["frobnicate"])
        assert excinfo.value.code == EXIT_USAGE

    def test_exit_codes_are_distinct(self):
        codes = [EXIT_OK, EXIT_DESIGN_FAILED, EXIT_INCOMPLETE, EXIT_USAGE, EXIT_DATA]
        assert len(set(codes)) == len(codes)
        assert cli.EXIT_OK == 0
