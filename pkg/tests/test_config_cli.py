import json
import math
from pathlib import Path

import pytest

from perfhom import cli
from perfhom.config import parse_config
from perfhom.errors import ConfigError

MINIMAL = """
[shape]
type = "ball"
c = 0.25

[kernel]
type = "indicator"
"""


def _write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config_defaults():
    run = parse_config(MINIMAL)
    assert run.dimension == 2 and run.seed == 0 and run.threads == 1
    assert run.shape.c == 0.25
    assert run.tol_tail == 1e-6
    assert run.sections == {}


def test_rejects_large_inclusion():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL.replace("0.25", "0.6"))
    msg = str(info.value)
    assert "c < 1/2" in msg and "shape.c" in msg and "line 4" in msg


def test_unknown_key_lists_valid_keys():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL.replace("c = 0.25", "c = 0.25\nradius = 3"))
    msg = str(info.value)
    assert "shape.radius" in msg and "valid keys: c, file, full, m, type" in msg and "line 5" in msg


def test_type_errors_and_bad_regime():
    with pytest.raises(ConfigError, match="expected int"):
        parse_config("seed = 1.5\n" + MINIMAL)
    with pytest.raises(ConfigError, match="invalid regime 'hyper'") as info:
        parse_config(MINIMAL + '[sweep]\nregime = "hyper"\n')
    assert info.value.line == 9
    with pytest.raises(ConfigError, match="TOML syntax"):
        parse_config("shape = {")


def test_hash_depends_on_seed():
    run = parse_config(MINIMAL)
    assert run.hash() == run.hash(0) != run.hash(1)


GEOMETRY = MINIMAL + """
[geometry]
delta = 0.1
epsilon = 0.06
"""


def test_cli_geometry(tmp_path):
    cfg = _write(tmp_path, GEOMETRY)
    assert cli.main(["geometry", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    out = json.loads((tmp_path / "o" / "geometry.json").read_text())
    assert out["D"] == pytest.approx(0.5, abs=1e-12)
    assert out["D0"] == pytest.approx(0.5, abs=1e-12)
    assert out["volume"] == pytest.approx(0.19635, abs=1e-5)
    assert out["components"]["connected"] is True
    assert len(out["config_sha256"]) == 64


def test_cli_geometry_ellipse_and_full(tmp_path):
    cfg = _write(tmp_path, '[shape]\ntype = "ellipse"\nc = [0.4, 0.25]\n[kernel]\ntype = "indicator"\n')
    assert cli.main(["geometry", "--config", str(cfg), "--out", str(tmp_path / "e")]) == 0
    out = json.loads((tmp_path / "e" / "geometry.json").read_text())
    assert out["D"] == pytest.approx(0.5, abs=1e-6) and out["D0"] == pytest.approx(0.2, abs=1e-6)
    cfg = _write(tmp_path, '[shape]\ntype = "mask"\nfull = true\n[kernel]\ntype = "indicator"\n', "full.toml")
    assert cli.main(["geometry", "--config", str(cfg), "--out", str(tmp_path / "f")]) == 0
    assert json.loads((tmp_path / "f" / "geometry.json").read_text())["D"] == 0.0


def test_cli_cell_table(tmp_path):
    cfg = _write(tmp_path, MINIMAL + "[cell]\nkappa = [1, 2]\nm = 16\nxi = [0.0, 0.0]\n")
    assert cli.main(["cell", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "cell.csv").read_text().splitlines()
    assert lines[0].startswith("# config_sha256=")
    assert lines[1] == "kappa,quadratic,ratio_to_limit,A11,A12,A21,A22"
    assert [float(r.split(",")[1]) for r in lines[2:]] == [0.0, 0.0]
    dat = (tmp_path / "cell.dat").read_text().splitlines()
    assert len(dat) == 4 and dat[1].startswith("# kappa")
    payload = json.loads((tmp_path / "cell.json").read_text())
    assert payload["limit"] == pytest.approx((math.pi / 16) ** 2 * math.pi / 4)


def test_cli_full_cell_tensor(tmp_path):
    text = '[shape]\ntype = "mask"\nfull = true\nm = 16\n[kernel]\ntype = "indicator"\n[cell]\nkappa = 1\nm = 16\n'
    cfg = _write(tmp_path, text)
    assert cli.main(["cell", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    A = json.loads((tmp_path / "cell.json").read_text())["tensors"][0]["matrix"]
    assert A[0][0] == pytest.approx(math.pi / 4, rel=5e-3)
    assert abs(A[0][1]) <= 1e-12


def test_cli_empty_sweep_has_header_only(tmp_path):
    cfg = _write(tmp_path, MINIMAL + '[sweep]\nregime = "supercritical"\npoints = []\n')
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1] == "epsilon,delta,ratio,energy,predicted,tail_bound,rel_error"


def test_cli_energy_noise_and_field(tmp_path):
    text = MINIMAL + """
[energy]
epsilon = 0.0625
delta = 0.125
omega = [[0.0, 0.0], [0.5, 0.5]]
function = { type = "noise", amplitude = 2.0 }
write_field = true
"""
    cfg = _write(tmp_path, text)
    assert cli.main(["energy", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "3"]) == 0
    assert cli.main(["energy", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "4"]) == 0
    a = json.loads((tmp_path / "a" / "energy.json").read_text())
    b = json.loads((tmp_path / "b" / "energy.json").read_text())
    assert a["energy"] > 0 and a["energy"] != b["energy"]
    assert a["config_sha256"] != b["config_sha256"]
    assert (tmp_path / "a" / "energy_field.csv").read_text().startswith("# config_sha256=")


def test_cli_recover_zero_sequence(tmp_path):
    text = MINIMAL + """
[recover]
kind = "zero"
epsilon = 0.05
delta = 0.125
h = 0.00390625
"""
    cfg = _write(tmp_path, text)
    assert cli.main(["recover", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    out = json.loads((tmp_path / "recover.json").read_text())
    assert out["energy"] == 0.0


def test_cli_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, MINIMAL.replace("0.25", "0.6"))
    assert cli.main(["geometry", "--config", str(bad)]) == 2
    assert "c < 1/2" in capsys.readouterr().err
    missing = tmp_path / "nope.toml"
    assert cli.main(["geometry", "--config", str(missing)]) == 2
    assert cli.main(["cell", "--config", str(_write(tmp_path, MINIMAL, "m.toml"))]) == 2
    stiff = _write(tmp_path, MINIMAL + "[cell]\nkappa = 2\nm = 16\ntol = 1e-300\n", "stiff.toml")
    assert cli.main(["cell", "--config", str(stiff), "--out", str(tmp_path)]) == 3
    assert "not converged" in capsys.readouterr().err
    rec = _write(tmp_path, MINIMAL + '[recover]\nkind = "zero"\nepsilon = 0.1\ndelta = 0.125\n', "r.toml")
    assert cli.main(["recover", "--config", str(rec), "--out", str(tmp_path)]) == 1


def test_cli_determinism(tmp_path):
    text = MINIMAL + """
seed = 11

[sweep]
regime = "supercritical"
points = [[0.25, 0.03125], [0.125, 0.015625]]
omega_prime = [[0.375, 0.375], [0.625, 0.625]]
"""
    cfg = _write(tmp_path, text.replace("seed = 11\n", "").replace("[shape]", "seed = 11\n\n[shape]", 1))
    for d in ("x", "y"):
        assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / d), "--threads", "2"]) == 0
    for name in ("sweep.csv", "sweep.json", "sweep.dat"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()
