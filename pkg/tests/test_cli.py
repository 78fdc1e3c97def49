import io
import json
import textwrap

import pytest

from ddflow import cli, presets
from ddflow.fields import GridSpec, save_snapshot

from conftest import TWO_PI

BASE = """
[grid]
dim = 4
sizes = 8, 4, 4, 4
lengths = 2pi

[initial]
preset = t4_warped
amplitude = 0.1

[flow]
kind = compatible_dstard
t_end = 0.02
cfl_sigma = {sigma}
monitor_every = 2
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def call(argv):
    buf = io.StringIO()
    code = cli.main(argv, out=buf)
    return code, buf.getvalue()


class TestConfig:
    def test_two_pi_lengths(self, tmp_path):
        cfg = cli.load_config(write(tmp_path, BASE.format(sigma=0.2)))
        assert cfg["grid"]["lengths"] == pytest.approx([TWO_PI] * 4)
        assert cfg["grid"]["sizes"] == [8, 4, 4, 4]

    @pytest.mark.parametrize("text,field_name", [
        ("0.5pi", None), ("3", None), ("2x", "grid.lengths"), ("pie", "grid.lengths"),
    ])
    def test_float_tokens(self, text, field_name):
        if field_name is None:
            assert cli._floats(text, "grid.lengths")[0] > 0
        else:
            with pytest.raises(cli.ConfigError, match=field_name):
                cli._floats(text, "grid.lengths")

    def test_missing_section(self, tmp_path):
        with pytest.raises(cli.ConfigError, match="flow"):
            cli.load_config(write(tmp_path, "[grid]\ndim = 4\nsizes = 8\n[initial]\npreset = standard\n"))

    def test_unknown_initial_parameter(self, tmp_path):
        cfg = cli.load_config(write(tmp_path, BASE.format(sigma=0.2) + "\n"))
        cfg["initial"]["colour"] = "blue"
        with pytest.raises(cli.ConfigError, match="initial.colour"):
            cli.make_initial(cfg, cli.make_grid(cfg))

    def test_bundled_configs_load(self):
        for name in ("t4_warped", "rotated_collapse"):
            cfg = cli.load_config(cli.bundled_config(name))
            cli.make_flow_config(cfg)
            cli.make_grid(cfg)


class TestRun:
    def test_writes_outputs(self, tmp_path):
        code, out = call(["run", "--config", str(write(tmp_path, BASE.format(sigma=0.2))),
                          "--out", str(tmp_path / "o"), "--snapshot-every", "1"])
        assert code == cli.EXIT_OK
        summary = json.loads(out)
        assert summary["exit_reason"] == "t_end reached"
        assert summary["final_t"] == pytest.approx(0.02)
        assert json.loads((tmp_path / "o" / "summary.json").read_text()) == summary
        lines = (tmp_path / "o" / "diagnostics.csv").read_text().splitlines()
        assert lines[0].startswith("t,dt,volume,H0,H1")
        assert len(lines) == summary["steps"] + 2
        assert (tmp_path / "o" / "snapshots" / "omega_000002.json").is_file()

    def test_invalid_sigma_names_field(self, tmp_path, capsys):
        code, _ = call(["run", "--config", str(write(tmp_path, BASE.format(sigma=1.5))), "--out", str(tmp_path)])
        assert code == cli.EXIT_CONFIG
        assert "cfl_sigma" in capsys.readouterr().err

    def test_bad_grid(self, tmp_path, capsys):
        text = BASE.format(sigma=0.2).replace("sizes = 8, 4, 4, 4", "sizes = 8, 2, 4, 4")
        code, _ = call(["run", "--config", str(write(tmp_path, text)), "--out", str(tmp_path)])
        assert code == cli.EXIT_CONFIG
        assert "grid" in capsys.readouterr().err

    def test_compatible_kind_on_tamed_data(self, tmp_path, capsys):
        text = BASE.format(sigma=0.2).replace("preset = t4_warped\namplitude = 0.1", "preset = tamed")
        text = text.replace("sizes = 8, 4, 4, 4", "sizes = 8, 8, 4, 4")
        code, _ = call(["run", "--config", str(write(tmp_path, text)), "--out", str(tmp_path)])
        assert code == cli.EXIT_CONFIG
        assert "initial" in capsys.readouterr().err

    def test_stop_threshold_exit_two(self, tmp_path):
        text = BASE.format(sigma=0.2).replace("preset = t4_warped", "preset = rotated").replace(
            "amplitude = 0.1", "amplitude = 2.5").replace("compatible_dstard", "tamed_dstard")
        text = text.replace("sizes = 8, 4, 4, 4", "sizes = 16, 4, 4, 4") + "\n[stop]\nmin_pf = 0.9999\n"
        code, out = call(["run", "--config", str(write(tmp_path, text)), "--out", str(tmp_path / "o")])
        assert code == cli.EXIT_STOPPED
        assert json.loads(out)["exit_reason"].startswith("NondegeneracyLost")

    def test_snapshot_initial_data(self, tmp_path):
        g = GridSpec(4, (8, 4, 4, 4), (TWO_PI,) * 4)
        pair = presets.t4_warped(g)
        save_snapshot(pair.omega, tmp_path / "w.json")
        save_snapshot(pair.J, tmp_path / "j.json")
        text = BASE.format(sigma=0.2).replace("preset = t4_warped\namplitude = 0.1", "omega = w.json\nj = j.json")
        code, _ = call(["run", "--config", str(write(tmp_path, text)), "--out", str(tmp_path / "o")])
        assert code == cli.EXIT_OK


class TestCheckSymbols:
    def test_table_and_failing_verdict(self):
        code, out = call(["check-symbols", "--trials", "3", "--dims", "2,4"])
        lines = out.splitlines()
        assert lines[0].split() == ["operator", "dim", "trials", "min_constrained", "null_dim", "verdict"]
        rows = {tuple(line.split()[:2]): line.split()[-1] for line in lines[2:]}
        assert rows[("dstard", "4")] == "PASS" and rows[("k2", "4")] == "FAIL"
        assert code == cli.EXIT_STOPPED

    @pytest.mark.parametrize("dims", ["3", "2,5", "0"])
    def test_invalid_dims(self, dims, capsys):
        code, _ = call(["check-symbols", "--dims", dims, "--trials", "1"])
        assert code == cli.EXIT_CONFIG
        assert "dims" in capsys.readouterr().err


class TestConvergence:
    def test_unknown_scenario(self, capsys):
        code, _ = call(["convergence", "--scenario", "sphere"])
        assert code == cli.EXIT_CONFIG
        assert "scenario" in capsys.readouterr().err

    def test_grids_must_increase(self, capsys):
        code, _ = call(["convergence", "--grids", "32,16"])
        assert code == cli.EXIT_CONFIG

    def test_short_study(self):
        code, out = call(["convergence", "--grids", "16,32", "--t-end", "0.05"])
        lines = out.splitlines()
        assert lines[-1] == "PASS" and code == cli.EXIT_OK
        assert float(lines[2].split()[-1]) >= 1.8

    def test_observed_orders(self):
        assert cli.observed_orders([16, 32, 64], [4e-2, 1e-2, 2.5e-3]) == pytest.approx([2.0, 2.0])
