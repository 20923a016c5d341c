import csv
import io
import socket
import threading

import numpy as np
import pytest

from isocouple.cli import RunConfig, main, read_config_file, resolve
from isocouple.errors import ArgumentError
from isocouple.rbf import VertexCloud, read_cloud, write_cloud


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class TestConfig:
    def test_defaults(self):
        cfg = resolve(["heat"])
        assert (cfg.p, cfg.rD, cfg.rN, cfg.dt, cfg.T) == (2, 2, 4, 0.1, 1.0)
        assert (cfg.alpha, cfg.beta) == (3.0, 1.3)

    def test_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# heat settings\nrD = 4\nrN=8\n--dt=0.05\n")
        cfg = resolve(["heat", "--config", str(path), "--rN", "2"])
        assert cfg.rD == 4
        assert cfg.rN == 2
        assert cfg.dt == 0.05
        assert cfg.T == 1.0

    def test_config_types(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("r = 2, 4\nmodes = spline\ncheck = yes\nextrapolate = off\n")
        got = read_config_file(str(path))
        assert got == {"r": (2, 4), "modes": ("spline",), "check": True, "extrapolate": False}

    @pytest.mark.parametrize("text", ["bogus=1\n", "rD\n", "rD = two\n", "check = maybe\n"])
    def test_bad_config(self, tmp_path, text):
        path = tmp_path / "run.cfg"
        path.write_text(text)
        with pytest.raises(ArgumentError):
            read_config_file(str(path))

    def test_missing_config(self, tmp_path):
        with pytest.raises(ArgumentError):
            read_config_file(str(tmp_path / "absent.cfg"))

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(dt=0.0),
            dict(T=-1.0),
            dict(omega=1.5),
            dict(p=0),
            dict(r=(0, 2)),
            dict(fluid_grid=(9,)),
            dict(modes=("mesh",)),
            dict(transport="udp"),
            dict(kernel="cubic"),
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ArgumentError):
            RunConfig(**kwargs).validate()


class TestHeat:
    def test_default_run(self, capsys):
        code = main(["heat", "--p", "2", "--rD", "2", "--rN", "4", "--dt", "0.1", "--T", "1", "--check"])
        out, err = capsys.readouterr()
        assert code == 0
        table = rows(out)
        assert len(table) == 10
        assert all(float(r["flux_rel_error"]) <= 1e-12 for r in table)
        assert "PASS field" in err and "PASS flux" in err

    def test_non_nested(self, capsys):
        assert main(["heat", "--rD", "3", "--rN", "2"]) == 2
        assert "not nested" in capsys.readouterr().err

    def test_zero_dt(self, capsys):
        assert main(["heat", "--dt", "0"]) == 2
        assert "--dt" in capsys.readouterr().err

    def test_check_failure_exit(self, capsys):
        # a loose coupling tolerance leaves errors above the acceptance bound
        code = main(["heat", "--tol", "1e-2", "--no-aitken", "--no-extrapolate", "--T", "0.3", "--check"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().err

    def test_output_file(self, tmp_path, capsys):
        out = tmp_path / "heat.csv"
        assert main(["heat", "--T", "0.2", "-o", str(out)]) == 0
        assert capsys.readouterr().out == ""
        assert len(rows(out.read_text())) == 2

    def test_deterministic(self, capsys):
        main(["heat", "--T", "0.3"])
        first = capsys.readouterr().out
        main(["heat", "--T", "0.3"])
        assert capsys.readouterr().out == first

    def test_socket_endpoints(self, tmp_path):
        port = free_port()
        out_d, out_n = tmp_path / "d.csv", tmp_path / "n.csv"
        codes = {}

        def run(role, out):
            codes[role] = main(
                ["heat", "--transport", f"socket:127.0.0.1:{port}", "--role", role, "--T", "0.3", "-o", str(out), "--check"]
            )

        threads = [threading.Thread(target=run, args=a) for a in (("dirichlet", out_d), ("neumann", out_n))]
        for t in threads:
            t.start()
        for t in threads:
            t.join(60)
        assert codes == {"dirichlet": 0, "neumann": 0}
        d, n = rows(out_d.read_text()), rows(out_n.read_text())
        assert len(d) == len(n) == 3
        assert [r["subiterations"] for r in d] == [r["subiterations"] for r in n]
        assert d[0]["flux_rel_error"] == "" and n[0]["l2_error_dirichlet"] == ""


class TestOverhead:
    def test_spot_cells(self, capsys):
        assert main(["overhead", "--r", "2,128", "--degrees", "2,3,5", "--check"]) == 0
        table = {(r["mode"], int(r["r"]), int(r["p"])): r for r in rows(capsys.readouterr().out)}
        assert float(table[("spline", 2, 2)]["measured_kb"]) == 0.59375
        assert float(table[("vertex", 128, 3)]["measured_kb"]) == 6144
        assert float(table[("vertex", 2, 2)]["measured_kb"]) == 0.84375
        assert float(table[("spline", 128, 5)]["discrepancy_kb"]) == 2.171875
        assert int(table[("spline", 128, 5)]["nan_entries"]) == 278
        assert float(table[("vertex", 128, 5)]["discrepancy_kb"]) == 0.0

    def test_timing_table(self, capsys):
        assert main(["overhead", "--r", "2,4", "--degrees", "2", "--modes", "spline", "--timing", "--timing-steps", "20"]) == 0
        out = capsys.readouterr().out
        assert "normalized_time" in out

    def test_bad_mode(self, capsys):
        assert main(["overhead", "--modes", "mesh"]) == 2


class TestBeam:
    def test_check(self, capsys):
        assert main(["beam", "--check"]) == 0
        out, err = capsys.readouterr()
        assert len(rows(out)) == 9
        assert "PASS worst round-trip" in err

    def test_kernel_flag(self, capsys):
        assert main(["beam", "--kernel", "gaussian:15"]) == 0


class TestMap:
    def write(self, tmp_path, name, points, data=None):
        path = tmp_path / name
        write_cloud(VertexCloud(points, data), path)
        return str(path)

    def test_identity(self, tmp_path, capsys):
        pts = np.random.default_rng(0).uniform(0, 1, (12, 2))
        data = np.random.default_rng(1).standard_normal((12, 2))
        src = self.write(tmp_path, "a.txt", pts, data)
        out = tmp_path / "out.txt"
        assert main(["map", src, src, "-o", str(out)]) == 0
        np.testing.assert_allclose(read_cloud(out).data, data, atol=1e-9)

    def test_constant_data(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        src = self.write(tmp_path, "a.txt", rng.uniform(0, 1, (10, 2)), np.full(10, 4.0))
        tgt = self.write(tmp_path, "b.txt", rng.uniform(0, 1, (8, 2)))
        assert main(["map", src, tgt, "--check"]) == 0
        out, err = capsys.readouterr()
        values = np.loadtxt(io.StringIO(out))[:, 2]
        np.testing.assert_allclose(values, 4.0, atol=1e-9)
        deviation = float(err.split("row_sum_deviation=")[1].split()[0])
        assert deviation <= 1e-9

    def test_collinear(self, tmp_path, capsys):
        src = self.write(tmp_path, "a.txt", [[0, 0], [1, 1], [2, 2]], [1.0, 2.0, 3.0])
        assert main(["map", src, src]) == 2
        assert "fewer than 2 dimensions" in capsys.readouterr().err

    def test_missing_data(self, tmp_path, capsys):
        src = self.write(tmp_path, "a.txt", np.eye(3))
        assert main(["map", src, src]) == 2
