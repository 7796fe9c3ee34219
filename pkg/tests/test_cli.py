import json
import subprocess
import sys
from pathlib import Path

import pytest

from misfitrod.cli import ConfigError, load_config, main


BASE = """
[material]
p = 1.5
alpha = {alpha}

[geometry]
section = {section}
r = 1.0
m_factor = 1.0
cells_per_radius = 6

[solver]
max_iter = 15
num_starts = 1
seed = 3

[experiment]
m_sensitivity = false
"""


def write_config(tmp_path, name="run.ini", alpha="0.0", section="disk", extra=""):
    path = tmp_path / name
    path.write_text(BASE.format(alpha=alpha, section=section) + extra)
    return path


class TestConfig:
    def test_round_trip(self, tmp_path):
        path = write_config(tmp_path, alpha="0.05")
        doc = load_config(path)
        assert doc["material"]["alpha"] == 0.05
        assert doc["geometry"]["section"] == "disk"

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, extra="\n[material2]\nx = 1\n")
        with pytest.raises(ConfigError, match="unknown section"):
            load_config(path)
        path2 = tmp_path / "bad.ini"
        path2.write_text("[material]\nwrong_key = 2\n")
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(path2)


class TestCommands:
    def test_gamma_trivial_exit_zero(self, tmp_path, capsys):
        path = write_config(tmp_path, alpha="0.0")
        code = main(["gamma", "--config", str(path), "--out", str(tmp_path / "out")])
        out = capsys.readouterr().out
        assert code == 0
        assert "energy upper bound" in out
        doc = json.loads((tmp_path / "out" / "gamma.json").read_text())
        assert doc["payload"]["estimate"]["energy"] <= 1e-9

    def test_invalid_alpha_exit_two(self, tmp_path, capsys):
        path = write_config(tmp_path, alpha="1.2")
        code = main(["gamma", "--config", str(path), "--out", str(tmp_path / "o")])
        err = capsys.readouterr().err
        assert code == 2
        assert "det H > 0" in err

    def test_sweep_csv_shape_and_crossover_line(self, tmp_path, capsys):
        path = write_config(
            tmp_path,
            alpha="0.05",
            section="square",
            extra="r_list = 1, 2, 4, 8\nbase = ramp\n",
        )
        out = tmp_path / "out"
        code = main(["sweep", "--config", str(path), "--out", str(out)])
        assert code == 0
        assert "crossover radius" in capsys.readouterr().out
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0].startswith("# config_hash=")
        assert len(lines[1].split(",")) == 8
        assert len(lines) == 2 + 4  # comment + header + one row per radius
        assert (out / "sweep_elastic.dat").exists()
        assert (out / "sweep_dislocated.dat").exists()

    def test_rerun_byte_identical(self, tmp_path):
        path = write_config(tmp_path, alpha="0.05")
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["gamma", "--config", str(path), "--out", str(out1)]) == 0
        assert main(["gamma", "--config", str(path), "--out", str(out2)]) == 0
        assert (out1 / "gamma.json").read_bytes() == (out2 / "gamma.json").read_bytes()

    def test_seed_override_changes_hash(self, tmp_path):
        path = write_config(tmp_path, alpha="0.0")
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        main(["gamma", "--config", str(path), "--out", str(out1)])
        main(["gamma", "--config", str(path), "--out", str(out2), "--seed", "9"])
        d1 = json.loads((out1 / "gamma.json").read_text())
        d2 = json.loads((out2 / "gamma.json").read_text())
        assert d1["config_hash"] != d2["config_hash"]
        assert d2["seed"] == 9

    def test_construct_square_emits_breakdown(self, tmp_path, capsys):
        path = write_config(
            tmp_path, alpha="0.05", section="square",
            extra="quadrant_count = 4\n",
        )
        out = tmp_path / "out"
        code = main(["construct", "--config", str(path), "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "construct.json").read_text())
        assert "glued_quadrants" in doc["payload"]
        assert (out / "construct_field.npz").exists()

    def test_probe_command(self, tmp_path):
        path = write_config(
            tmp_path, alpha="0.05", section="square",
            extra="probe = equivalence\nsamples = 40\n",
        )
        out = tmp_path / "out"
        assert main(["probe", "--config", str(path), "--out", str(out)]) == 0
        doc = json.loads((out / "probes.json").read_text())
        assert doc["payload"]["probes"][0]["name"] == "pointwise_equivalence"

    def test_gammaconv_command(self, tmp_path):
        path = write_config(
            tmp_path, alpha="0.05", section="square",
            extra="h_list = 0.125, 0.0625\nblock_max_iter = 10\nband_angle = 0.1\n",
        )
        out = tmp_path / "out"
        assert main(["gammaconv", "--config", str(path), "--out", str(out)]) == 0
        doc = json.loads((out / "gammaconv.json").read_text())
        rows = doc["payload"]["rows"]
        assert len(rows) == 2
        assert rows[0]["recovery"] >= rows[1]["recovery"]


@pytest.mark.slow
def test_thread_count_does_not_change_bytes(tmp_path):
    path = write_config(tmp_path, alpha="0.05")
    outs = []
    for threads, sub in ((1, "t1"), (4, "t4")):
        out = tmp_path / sub
        cmd = [
            sys.executable, "-m", "misfitrod.cli", "gamma",
            "--config", str(path), "--out", str(out),
            "--threads", str(threads),
        ]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append((out / "gamma.json").read_bytes())
    assert outs[0] == outs[1]
