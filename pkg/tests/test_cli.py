import configparser
import csv
import io
import math

import numpy as np
import pytest

from holescatter.cli import EXIT_OK, EXIT_REFUSED, EXIT_THRESHOLD, main, shipped_configs

SHIPPED = {
    "example1.cfg": "simulate",
    "example2.cfg": "simulate",
    "example3.cfg": "medium",
    "oracle.cfg": "oracle-validate",
    "design_roundtrip.cfg": "design",
    "convergence_dt.cfg": "convergence",
    "convergence_medium.cfg": "convergence",
}


def read_ini(path):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read(path)
    return cp


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) if v else math.nan for v in r] for r in rows[1:]])


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_every_shipped_config_has_a_command():
    assert set(shipped_configs()) == set(SHIPPED)


def test_simulate_example1_writes_traces_and_full_manifest(tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--config", "example1", "--out", str(out), "--threads", "3"]) == EXIT_OK
    man = read_ini(out / "manifest.ini")
    assert man["run"]["status"] == "ok" and man["run"]["threads"] == "3"
    assert man["config.time"]["tol"] == "1e-10" and man["config.time"]["interp"] == "cubic"
    assert man["config.time"]["dt"] == "auto"
    assert float(man["resolved"]["eps_0.dt"]) == pytest.approx(1 / 1024)
    assert float(man["resolved"]["eps_0.exclusion"]) == pytest.approx(0.01)
    for k in range(4):
        header, data = read_csv(out / f"eps_{k}" / "probes.csv")
        assert header == ["time", "p0_scattered", "p1_scattered", "p0_total", "p1_total"]
        assert data.shape[0] == 1025
    cond = read_ini(out / "eps_0" / "conditions.ini")
    assert cond["conditions"]["stability_passed"] == "true"


def test_simulate_scattered_amplitude_scales_with_radius(tmp_path):
    out = tmp_path / "out"
    main(["simulate", "--config", "example1", "--out", str(out)])
    peaks = [np.abs(read_csv(out / f"eps_{k}" / "probes.csv")[1][:, 1]).max() for k in range(4)]
    assert np.allclose(np.array(peaks[:-1]) / np.array(peaks[1:]), 10.0, rtol=1e-9)


def test_empty_cluster_scatters_nothing(tmp_path):
    cfg = write_cfg(tmp_path, "[source]\nposition = 0.15, 0, 0\n[time]\nT = 0.5\n[probes]\npoints = 0.2, 0.1, 0\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == EXIT_OK
    header, data = read_csv(out / "probes.csv")
    assert not np.any(data[:, header.index("p0_scattered")])
    assert np.any(data[:, header.index("p0_total")])


MARGIN_ABOVE_ONE = """
[source]
position = 1.0, 0, 0
[time]
T = 0.3
dt = 0.01
[hole.0]
center = 0.0883883, 0.0883883, 0.0883883
radius = 0.1
[hole.1]
center = 0.0883883, -0.0883883, -0.0883883
radius = 0.1
[hole.2]
center = -0.0883883, 0.0883883, -0.0883883
radius = 0.1
[hole.3]
center = -0.0883883, -0.0883883, 0.0883883
radius = 0.1
"""


def test_solvability_refusal_and_force(tmp_path, capsys):
    cfg = write_cfg(tmp_path, MARGIN_ABOVE_ONE)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_REFUSED
    assert "force" in capsys.readouterr().err
    assert read_ini(tmp_path / "a" / "manifest.ini")["run"]["status"] == "refused"
    with pytest.warns(RuntimeWarning):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--force"]) == EXIT_OK


def test_probe_inside_exclusion_zone_is_refused(tmp_path):
    cfg = write_cfg(
        tmp_path,
        "[source]\nposition = 0.15, 0, 0\n[time]\nT = 0.5\n[probes]\npoints = 0.101, 0, 0\n"
        "[hole.0]\ncenter = 0.1, 0, 0\nradius = 1e-3\n",
    )
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_REFUSED


def test_missing_config_is_refused(tmp_path):
    assert main(["simulate", "--config", "no-such-config", "--out", str(tmp_path)]) == EXIT_REFUSED


def test_oracle_threshold_failure_exit_code(tmp_path):
    cfg = write_cfg(
        tmp_path,
        "[source]\nposition = 0.15, 0, 0\n[time]\nT = 1\n[oracle]\ncenter = 0.1, 0, 0\n"
        "radii = 0.02, 0.01\nprobes = 0.1, 0.1, 0\nslope_threshold = 2.5\n",
    )
    out = tmp_path / "o"
    assert main(["oracle-validate", "--config", cfg, "--out", str(out)]) == EXIT_THRESHOLD
    assert read_ini(out / "oracle.ini")["oracle"]["verdict"] == "fail"


def test_oracle_validate_shipped(tmp_path):
    out = tmp_path / "o"
    assert main(["oracle-validate", "--config", "oracle", "--out", str(out)]) == EXIT_OK
    assert float(read_ini(out / "oracle.ini")["oracle"]["slope"]) >= 1.8


def test_medium_with_zero_cbar_has_zero_exterior_field(tmp_path):
    cfg = write_cfg(
        tmp_path,
        "[source]\nposition = 0.0243, 0, 0\n[time]\nT = 0.5\n[probes]\npoints = 0, 0, 0.05\n"
        "[medium]\nbox = -0.018, 0.018, -0.018, 0.018, -0.018, 0.018\ncbar = 0\nvoxels_per_side = 3\n",
    )
    out = tmp_path / "o"
    assert main(["medium", "--config", cfg, "--out", str(out)]) == EXIT_OK
    _, data = read_csv(out / "medium_probes.csv")
    assert not np.any(data[:, 1])


def test_design_roundtrip_shipped(tmp_path):
    out = tmp_path / "o"
    assert main(["design", "--config", "design_roundtrip", "--out", str(out)]) == EXIT_OK
    rep = read_ini(out / "design.ini")["design"]
    assert float(rep["roundtrip_max_error"]) <= float(rep["roundtrip_bound"])
    assert float(rep["cross_grid_order"]) >= 1.8
    assert int(rep["holes"]) == 125
    _, rec = read_csv(out / "cbar_recovered.csv")
    interior = rec[~np.isnan(rec[:, 3]), 3]
    assert np.allclose(interior, 4 * math.pi, rtol=0, atol=float(rep["roundtrip_bound"]))
    holes = read_ini(out / "cluster.cfg")
    assert float(holes["hole.0"]["radius"]) == pytest.approx(0.0055)


def test_design_from_non_subharmonic_density_is_refused(tmp_path):
    from holescatter.design import field_manifest, field_to_csv, from_function

    rho = from_function((0, 1, 0, 1, 0, 1), 0.25, lambda x: (1.0 + 0.2 * np.sin(np.pi * x[:, 0])) ** -2, "rho")
    (tmp_path / "rho.csv").write_text(field_to_csv(rho))
    (tmp_path / "rho.ini").write_text(field_manifest(rho))
    cfg = write_cfg(tmp_path, "[design]\ninput = rho\nfile = rho.csv\nmanifest = rho.ini\n")
    assert main(["design", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_REFUSED


def test_design_from_subharmonic_density(tmp_path):
    from holescatter.design import field_manifest, field_to_csv, from_function

    rho = from_function((0, 1, 0, 1, 0, 1), 0.125, lambda x: (1.0 - 0.1 * np.prod(np.sin(np.pi * x), axis=1)) ** -2, "rho")
    (tmp_path / "rho.csv").write_text(field_to_csv(rho))
    (tmp_path / "rho.ini").write_text(field_manifest(rho))
    cfg = write_cfg(tmp_path, "[design]\ninput = rho\nfile = rho.csv\nmanifest = rho.ini\na = 0.008\n")
    out = tmp_path / "o"
    assert main(["design", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert float(read_ini(out / "design.ini")["design"]["roundtrip_max_error"]) < 1e-6


def test_trivial_convergence_sweep_reports_undefined_order(tmp_path):
    cfg = write_cfg(
        tmp_path,
        "[source]\nposition = 0.0243, 0, 0\n[time]\nT = 0.3\n[probes]\npoints = 0, 0, 0.05\n"
        "[medium]\nbox = -0.018, 0.018, -0.018, 0.018, -0.018, 0.018\ncbar = 0\n"
        "[convergence]\nmode = medium\nvoxels0 = 1\nlevels = 3\n",
    )
    out = tmp_path / "o"
    assert main(["convergence", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert read_ini(out / "manifest.ini")["verdicts"]["fitted_order"] == "undefined"


def test_convergence_dt_shipped(tmp_path):
    out = tmp_path / "o"
    assert main(["convergence", "--config", "convergence_dt", "--out", str(out)]) == EXIT_OK
    v = read_ini(out / "manifest.ini")["verdicts"]
    assert float(v["fitted_order"]) >= 3.6


def test_reruns_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["simulate", "--config", "example2", "--out", str(out)]) == EXIT_OK
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert len(files) > 5
    for rel in files:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()


def test_snapshots_written_with_manifest(tmp_path):
    out = tmp_path / "o"
    main(["simulate", "--config", "example2", "--out", str(out)])
    grid = read_ini(out / "grid.ini")["grid"]
    assert grid["files"] == "snapshot_0.csv, snapshot_1.csv, snapshot_2.csv, snapshot_3.csv"
    header, data = read_csv(out / "snapshot_3.csv")
    assert header == ["x", "y", "z", "value"] and data.shape == (441, 4)
    assert np.allclose(data[:, 2], 0.01)
