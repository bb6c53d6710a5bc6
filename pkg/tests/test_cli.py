"""End-to-end command tests: in-process main() on a small, fast lattice."""

import json
import math
import shutil

import numpy as np
import pytest

from parabloch.cli import main

SMALL = """
v0 = 90
reduced_mass = 0.31858
grid.points_per_period = 48
grid.n_min = -18
grid.n_max = 18
packet.n0 = 8
packet.delta_n = 3
evolve.t_total = {t_total!r}
evolve.dt = {dt!r}
"""


@pytest.fixture(scope="module")
def shared(tmp_path_factory):
    """One config + output dir per module so the basis cache is built once."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.cfg"
    cfg.write_text(SMALL.format(t_total=40.0 * math.pi,
                                dt=2.0 * math.pi / 512.0))
    out = root / "out"
    return {"root": root, "cfg": str(cfg), "out": out}


def _run(shared, *args):
    return main(["--config", shared["cfg"], "--out", str(shared["out"]),
                 *args])


def _read_csv(path):
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def test_spectrum_writes_artifacts(shared):
    assert _run(shared, "spectrum", "--states") == 0
    out = shared["out"]

    header, rows = _read_csv(out / "spectrum.csv")
    assert header == ["index", "energy", "label", "parity"]
    labels = {row[2].split(":")[0] for row in rows}
    assert "well" in labels and "delocalized" in labels
    assert {row[3] for row in rows} <= {"S", "A", "mixed"}
    energies = np.array([float(row[1]) for row in rows])
    # ties within a doublet are ordered symmetric-first, not by energy
    assert np.all(np.diff(energies) >= -1e-8)

    meta = json.loads((out / "spectrum.json").read_text())
    assert meta["n_localized"] > 0
    assert meta["epsilon_L"] > 0
    n_well = sum(1 for row in rows if row[2].startswith("well:"))
    # edge wells may hold an incomplete doublet and carry no site state
    assert 0 < meta["n_site_states"] <= n_well

    npz = np.load(out / "states.npz")
    assert npz["states"].shape == (len(npz["sites"]), len(npz["x"]))
    assert len(npz["site_energies"]) == len(npz["sites"])

    manifest = json.loads((out / "manifest.json").read_text())
    assert "spectrum.csv" in manifest["artifacts"]
    assert manifest["versions"]["parabloch"]
    assert manifest["rng"] == "none"


def test_evolve_writes_signal(shared):
    assert _run(shared, "evolve", "--xbar") == 0
    out = shared["out"]

    header, rows = _read_csv(out / "signal.csv")
    assert header == ["t", "P0", "Q0"]
    n_expected = int(round(40.0 * math.pi / (2.0 * math.pi / 512.0))) + 1
    assert len(rows) == n_expected
    q0 = np.array([float(row[2]) for row in rows])
    assert np.all(np.isfinite(q0)) and np.ptp(q0) > 0.01

    meta = json.loads((out / "signal.json").read_text())
    assert meta["n_samples"] == n_expected
    assert meta["propagator"] == "eigen"
    assert meta["signal_key"]

    header, rows = _read_csv(out / "xbar.csv")
    assert header == ["t", "xbar", "xbar_model"]
    assert float(rows[0][1]) == pytest.approx(8.0, abs=0.5)


def test_reconstruct_reuses_signal(shared, capsys):
    assert _run(shared, "reconstruct") == 0
    out = shared["out"]
    assert "reusing signal.csv" in capsys.readouterr().out

    header, rows = _read_csv(out / "coherences.csv")
    assert header == ["n", "fold", "re", "im", "abs", "arg"]
    folds = {row[1] for row in rows}
    assert folds == {"1", "2"}

    header, rows = _read_csv(out / "reconstruction.csv")
    assert header == ["n", "abs", "arg", "truth_abs", "truth_arg"]

    summary = json.loads((out / "reconstruction.json").read_text())
    assert summary["fidelity"] > 0.99
    assert summary["phase_segments"] == 1
    assert set(summary["amplitude_methods"].values()) <= \
        {"two_fold", "chain", "smooth"}


def test_signal_bytes_stable_across_reruns(shared):
    first = (shared["out"] / "signal.csv").read_bytes()
    assert _run(shared, "evolve") == 0
    assert (shared["out"] / "signal.csv").read_bytes() == first


def test_validate_passes(shared):
    assert _run(shared, "validate") == 0
    header, rows = _read_csv(shared["out"] / "validation.csv")
    assert header == ["name", "status", "measured", "bound", "detail"]
    assert all(row[1] == "pass" for row in rows)
    assert len(rows) >= 20


def test_missing_config_exits_2(shared, capsys):
    code = main(["--config", str(shared["root"] / "absent.cfg"),
                 "--out", str(shared["out"]), "spectrum"])
    assert code == 2
    assert "config file not found" in capsys.readouterr().err


def test_unknown_key_exits_2(shared, capsys):
    bad = shared["root"] / "bad.cfg"
    bad.write_text("lattice.depth = 90\n")
    code = main(["--config", str(bad), "--out", str(shared["out"]),
                 "spectrum"])
    assert code == 2
    assert "unknown key" in capsys.readouterr().err


def test_fold_overlap_exits_3(shared, capsys):
    # support 4..12 centers the packet at 8 with half-width 4: the first
    # fold reaches 10.5 while the second starts at 10, so they interleave
    cfg = shared["root"] / "overlap.cfg"
    cfg.write_text(SMALL.format(t_total=40.0 * math.pi,
                                dt=2.0 * math.pi / 512.0)
                   + "packet.coefficients = 4:1, 12:1\n")
    code = main(["--config", str(cfg), "--out", str(shared["out"]),
                 "evolve"])
    assert code == 3
    assert "fold overlap" in capsys.readouterr().err


def test_shallow_lattice_validate_exits_4(shared, capsys, tmp_path):
    cfg = shared["root"] / "shallow.cfg"
    # packet kept on-grid so config validation passes; v0=5 is what fails
    cfg.write_text("v0 = 5\ngrid.points_per_period = 48\n"
                   "grid.n_min = -18\ngrid.n_max = 18\n"
                   "packet.n0 = 8\npacket.delta_n = 3\n")
    code = main(["--config", str(cfg), "--out", str(tmp_path), "validate"])
    assert code == 4
    assert "checks failed" in capsys.readouterr().out
    header, rows = _read_csv(tmp_path / "validation.csv")
    failed = [row for row in rows if row[1] == "FAIL"]
    assert failed
    assert any("basis unavailable" in row[4] for row in failed)


def test_splitstep_override(shared, tmp_path):
    cfg = shared["root"] / "short.cfg"
    cfg.write_text(SMALL.format(t_total=2.0 * math.pi,
                                dt=2.0 * math.pi / 512.0))
    # reuse the solved basis instead of diagonalizing again
    shutil.copytree(shared["out"] / "cache", tmp_path / "cache")
    code = main(["--config", str(cfg), "--out", str(tmp_path),
                 "evolve", "--propagator", "splitstep"])
    assert code == 0
    meta = json.loads((tmp_path / "signal.json").read_text())
    assert meta["propagator"] == "splitstep"


def test_explicit_coefficients(shared, tmp_path):
    amp = 1.0 / math.sqrt(2.0)
    cfg = shared["root"] / "pair.cfg"
    cfg.write_text(SMALL.format(t_total=2.0 * math.pi,
                                dt=2.0 * math.pi / 512.0)
                   + f"packet.coefficients = 8:{amp!r}, 9:{amp!r}\n")
    shutil.copytree(shared["out"] / "cache", tmp_path / "cache")
    code = main(["--config", str(cfg), "--out", str(tmp_path), "evolve"])
    assert code == 0
    _, rows = _read_csv(tmp_path / "signal.csv")
    q0 = np.array([float(row[2]) for row in rows])
    # a two-site packet beats at one Bohr frequency
    assert np.ptp(q0) > 0.2


def test_out_dir_from_config(shared, tmp_path, monkeypatch):
    target = tmp_path / "from-config"
    cfg = shared["root"] / "outdir.cfg"
    cfg.write_text(SMALL.format(t_total=40.0 * math.pi,
                                dt=2.0 * math.pi / 512.0)
                   + f"output.dir = {target}\n")
    (target / "cache").parent.mkdir(parents=True, exist_ok=True)
    shutil.copytree(shared["out"] / "cache", target / "cache")
    monkeypatch.chdir(tmp_path)
    assert main(["--config", str(cfg), "spectrum"]) == 0
    assert (target / "spectrum.csv").is_file()
