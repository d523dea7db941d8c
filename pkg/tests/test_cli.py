import json

from convtopo.cli import main


def write_cfg(tmp_path, body):
    p = tmp_path / "run.ini"
    p.write_text(body)
    return str(p)


class TestCliForward:
    def test_forward_solid_box_writes_reference(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "[run]\nmode = forward\ngr = 6400\n"
                                  "[problem]\nnx = 70\nny = 40\n")
        ref = tmp_path / "ref.json"
        rc = main(["--config", cfg, "forward", "--solid-box",
                   "--write-reference", str(ref)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "compliance:" in out
        assert ref.exists()
        data = json.loads(ref.read_text())
        assert data["nx"] == 70 and len(data["temperatures"]) == 71 * 41

    def test_calibrate_roundtrip_via_cli(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "[run]\nmode = forward\ngr = 6400\n"
                                  f"[problem]\nnx = 70\nny = 40\n")
        ref = tmp_path / "ref.json"
        assert main(["--config", cfg, "forward", "--solid-box",
                     "--write-reference", str(ref)]) == 0
        cfg2 = write_cfg(tmp_path, "[run]\nmode = calibrate\ngr = 6400\n"
                                   f"output_dir = {tmp_path}/out\n"
                                   "[problem]\nnx = 70\nny = 40\n")
        rc = main(["--config", cfg2, "calibrate", "--reference", str(ref),
                   "--lo", "0.07", "--hi", "0.11", "--step", "0.01"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "best mobility: 0.09" in out
        assert (tmp_path / "out" / "sweep.csv").exists()


class TestCliErrors:
    def test_bad_config_returns_nonzero(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "[run]\nmode = optimize\nwarp = 9\n")
        rc = main(["--config", cfg, "optimize"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_preset_errors(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "[run]\nmode = optimize\n")
        rc = main(["--config", cfg, "optimize"])
        assert rc == 1
        assert "preset" in capsys.readouterr().err


class TestCliOptimize:
    def test_tiny_optimize_run_writes_artifacts(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_cfg(
            tmp_path,
            "[run]\nmode = optimize\npreset = heatsink\ngr = 640\n"
            f"output_dir = {out}\n"
            "[problem]\nnx = 35\nny = 40\n"
            "[optimization]\nmax_outer_iter = 4\nswitch_every = 2\nr_min = 0.3\n",
        )
        rc = main(["--config", cfg, "optimize"])
        stdout = capsys.readouterr().out
        assert rc == 0
        assert "final objective" in stdout
        for name in ("history.jsonl", "snapshot.vtk", "snapshot_points.csv",
                     "snapshot_cells.csv", "report.json"):
            assert (out / name).exists()
        lines = (out / "history.jsonl").read_text().splitlines()
        prov = json.loads(lines[0])
        assert prov["type"] == "provenance"
        assert prov["assumptions"]  # geometry assumptions are echoed
        rec = json.loads(lines[1])
        assert {"iter", "psi", "constraint", "max_change", "stage"} <= set(rec)

    def test_report_verb(self, tmp_path, capsys):
        out = tmp_path / "out"
        cfg = write_cfg(
            tmp_path,
            "[run]\nmode = optimize\npreset = heatsink\ngr = 640\n"
            f"output_dir = {out}\n"
            "[problem]\nnx = 35\nny = 40\n"
            "[optimization]\nmax_outer_iter = 2\nswitch_every = 2\nr_min = 0.3\n",
        )
        assert main(["--config", cfg, "optimize"]) == 0
        capsys.readouterr()
        rc = main(["--config", cfg, "report", "--run-dir", str(out)])
        text = capsys.readouterr().out
        assert rc == 0
        assert "12.5%" in text
