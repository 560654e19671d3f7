import os
from pathlib import Path

import numpy as np
import pytest

from mfsol.cli import main
from mfsol.gridfile import read_grid_file, write_grid_file
from mfsol.grids import Grid2
from mfsol import presets


def write_config(path, **over):
    base = {
        "system": "lle", "out_dir": str(path.parent / "out"),
        "nx": 64, "ny": 1, "lx": 2 * np.pi, "ly": 2 * np.pi,
        "dt": 1e-4, "t_end": 5e-3,
        "preset": "circle", "cadence": 10,
        "alpha_r": 0.0, "alpha_i": 1.0,
    }
    base.update(over)
    text = f"""
[run]
system = {base['system']}
out_dir = {base['out_dir']}

[grid]
nx = {base['nx']}
ny = {base['ny']}
lx = {base['lx']}
ly = {base['ly']}

[evolution]
dt = {base['dt']}
t_end = {base['t_end']}

[model]
alpha_r = {base['alpha_r']}
alpha_i = {base['alpha_i']}

[initial]
preset = {base['preset']}

[output]
cadence = {base['cadence']}
"""
    path.write_text(text)
    return path


class TestGridFile:
    def test_round_trip_real(self, tmp_path):
        g = Grid2(32, 32, 3.0, 4.0)
        field = np.random.default_rng(0).standard_normal((32, 32, 3))
        p = tmp_path / "f.mfs"
        write_grid_file(p, field, g, time=0.25)
        gf = read_grid_file(p)
        assert gf.time == 0.25
        assert gf.grid.nx == 32 and abs(gf.grid.lx - 3.0) < 1e-15
        assert np.array_equal(gf.data, field)

    def test_round_trip_complex_1d(self, tmp_path):
        g = Grid2(64)
        q = np.exp(1j * g.x)
        p = tmp_path / "q.mfs"
        write_grid_file(p, np.stack([q, np.conj(q)], axis=-1), g, time=1.0)
        gf = read_grid_file(p)
        assert gf.data.shape == (64, 1, 2)
        assert np.array_equal(gf.data[:, 0, 0], q)

    def test_byte_identical_round_trip(self, tmp_path):
        g = Grid2(16, 16)
        field = np.random.default_rng(1).standard_normal((16, 16, 2))
        p1 = tmp_path / "a.mfs"
        p2 = tmp_path / "b.mfs"
        write_grid_file(p1, field, g, time=0.5)
        gf = read_grid_file(p1)
        write_grid_file(p2, gf.data, gf.grid, gf.time)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_body_rejected(self, tmp_path):
        g = Grid2(16)
        p = tmp_path / "bad.mfs"
        write_grid_file(p, np.zeros(16), g)
        blob = p.read_bytes()
        p.write_bytes(blob[:-8])
        from mfsol.gridfile import GridFileError
        with pytest.raises(GridFileError):
            read_grid_file(p)


class TestSimulate:
    def test_lle_circle(self, tmp_path):
        cfg = write_config(tmp_path / "run.cfg")
        rc = main(["simulate", str(cfg)])
        assert rc == 0
        out = tmp_path / "out"
        summary = (out / "summary.txt").read_text()
        assert "status=ok" in summary
        drift = float([l for l in summary.splitlines()
                       if l.startswith("final_norm_drift")][0].split("=")[1])
        assert drift < 1e-8
        assert len(list(out.glob("ckpt_*.mfs"))) >= 2

    def test_unknown_system(self, tmp_path):
        cfg = write_config(tmp_path / "run.cfg", system="nonsense")
        assert main(["simulate", str(cfg)]) == 2

    def test_blow_up_exit_code(self, tmp_path):
        cfg = write_config(tmp_path / "run.cfg", system="ishimori", nx=32,
                           ny=32, preset="frame_spiral", dt=5.0, t_end=50.0)
        rc = main(["simulate", str(cfg)])
        assert rc == 3
        # the initial checkpoint is still on disk
        assert (tmp_path / "out" / "ckpt_000000.mfs").exists()

    def test_ishimori_conserves_charge(self, tmp_path):
        cfg = write_config(tmp_path / "run.cfg", system="ishimori", nx=128,
                           ny=128, lx=40.0, ly=40.0, preset="instanton",
                           dt=1e-3, t_end=1e-2, cadence=10)
        rc = main(["simulate", str(cfg)])
        assert rc == 0
        summary = (tmp_path / "out" / "summary.txt").read_text()
        drift = float([l for l in summary.splitlines()
                       if l.startswith("charge_drift")][0].split("=")[1])
        assert drift < 1e-3


class TestVerify:
    def test_charges_default(self, capsys):
        rc = main(["verify", "charges", "--tol", "2e-3"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "pass" in out

    def test_charges_constant_file(self, tmp_path, capsys):
        g = Grid2(32, 32)
        S = np.zeros((32, 32, 3)); S[..., 2] = 1.0
        p = tmp_path / "const.mfs"
        write_grid_file(p, S, g)
        rc = main(["verify", "charges", str(p), "--tol", "1e-10"])
        assert rc == 0
        assert "Q1 = 0.000000" in capsys.readouterr().out

    def test_unknown_kind(self):
        assert main(["verify", "bogus"]) == 2

    def test_zero_curvature(self, capsys):
        rc = main(["verify", "zero-curvature", "--tol", "1e-6"])
        assert rc == 0

    def test_susy(self, capsys):
        rc = main(["verify", "susy"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "MISMATCH" in out      # the documented coefficient verdict
        assert "[pass]" in out

    def test_bilinear(self, capsys):
        rc = main(["verify", "bilinear", "--tol", "1e-9"])
        assert rc == 0

    def test_missing_input(self):
        rc = main(["verify", "charges", "/nonexistent/file.mfs"])
        assert rc == 2


class TestPlotData:
    def test_s3_constant(self, tmp_path, capsys):
        g = Grid2(16, 16)
        S = np.zeros((16, 16, 3)); S[..., 2] = 1.0
        p = tmp_path / "s.mfs"
        write_grid_file(p, S, g)
        rc = main(["plotdata", str(p), "--what", "s3"])
        assert rc == 0
        out = capsys.readouterr().out
        lines = [l for l in out.splitlines() if not l.startswith("#")]
        assert len(lines) == 256
        assert all(l.split("\t")[2] == "1" for l in lines)

    def test_abs_q_plane_wave(self, tmp_path, capsys):
        g = Grid2(32)
        q = 0.7 * np.exp(1j * g.x)
        p = tmp_path / "q.mfs"
        write_grid_file(p, np.stack([q, np.conj(q)], -1), g)
        rc = main(["plotdata", str(p), "--what", "abs_q"])
        assert rc == 0
        out = capsys.readouterr().out
        vals = [float(l.split("\t")[1]) for l in out.splitlines()
                if not l.startswith("#")]
        assert np.abs(np.array(vals) - 0.7).max() < 1e-12

    def test_unknown_column(self, tmp_path):
        g = Grid2(16)
        p = tmp_path / "s.mfs"
        write_grid_file(p, np.zeros(16), g)
        assert main(["plotdata", str(p), "--what", "nope"]) == 2

    def test_figure_alongside_table(self, tmp_path):
        g = Grid2(32, 32, 40.0, 40.0)
        S = presets.instanton(g)
        p = tmp_path / "inst.mfs"
        write_grid_file(p, S, g)
        out = tmp_path / "density.txt"
        rc = main(["plotdata", str(p), "--what", "charge_density",
                   "--out", str(out)])
        assert rc == 0
        assert out.exists()
        assert (tmp_path / "density.png").exists()

    def test_charge_density_integrates_to_degree(self, tmp_path, capsys):
        g = Grid2(128, 128, 40.0, 40.0)
        S = presets.instanton(g)
        p = tmp_path / "inst.mfs"
        write_grid_file(p, S, g)
        rc = main(["plotdata", str(p), "--what", "charge_density"])
        assert rc == 0
        out = capsys.readouterr().out
        vals = np.array([float(l.split("\t")[2]) for l in out.splitlines()
                         if not l.startswith("#")])
        total = vals.sum() * g.dx * g.dy
        assert abs(total - 4 * np.pi) < 4 * np.pi * 2e-3
