import json

import numpy as np
import pytest

from pmthermo import __version__
from pmthermo.cli import EXIT_BOUND, EXIT_ERROR, EXIT_OK, EXIT_USAGE, main, parse_t_grid


def read_csv(path):
    lines = path.read_text().splitlines()
    head = [l for l in lines if l.startswith("#")]
    return head, [l for l in lines if not l.startswith("#")]


def test_t_grid():
    assert np.allclose(parse_t_grid("0:1:0.25"), [0, 0.25, 0.5, 0.75, 1])
    assert np.allclose(parse_t_grid("0.1,0.2"), [0.1, 0.2])


def test_pressure_csv(tmp_path, capsys):
    out = tmp_path / "p.csv"
    rc = main(["pressure", "--map", "quadratic:4", "--t-grid", "0:1:0.05", "--R", "4",
               "--tau-max", "40", "--out", str(out)])
    assert rc == EXIT_OK
    head, rows = read_csv(out)
    assert head[0] == f"# pmthermo {__version__}"
    cfg = json.loads(head[1].split(": ", 1)[1])
    assert cfg["t_grid"] == "0:1:0.05" and cfg["R"] == 4
    assert rows[0].startswith("t,p_lo,p_mid")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    assert np.allclose(data[:, 2], (1 - data[:, 0]) * np.log(2), atol=2e-3)
    assert "checks 2/2 passed" in capsys.readouterr().out


def test_acip_uniform(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["acip", "--map", "tent:2", "--grid", "1024", "--out", str(out)]) == EXIT_OK
    _, rows = read_csv(out)
    mass = [float(r.split(",")[2]) for r in rows[1:1025]]
    assert np.allclose(mass, 1 / 1024, atol=1e-6)


def test_seventeen_digits(tmp_path):
    out = tmp_path / "a.csv"
    main(["acip", "--map", "tent:1.7", "--grid", "64", "--out", str(out)])
    _, rows = read_csv(out)
    cell = rows[2].split(",")
    assert float(cell[1]) == 2 / 64
    assert len(cell[2].replace(".", "").lstrip("0")) >= 15


def test_json_format(tmp_path):
    out = tmp_path / "e.json"
    rc = main(["extension", "--map", "quadratic:3.8", "--R", "6", "--format", "json",
               "--out", str(out)])
    assert rc == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["version"] == __version__
    assert len(doc["result"]["domains"]) == 7


def test_extension_dot(tmp_path):
    out = tmp_path / "g.dot"
    assert main(["extension", "--map", "quadratic:3.8", "--R", "6", "--dot",
                 "--out", str(out)]) == EXIT_OK
    text = out.read_text()
    assert text.startswith("// pmthermo") and "digraph" in text


def test_config_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"map": "tent:2", "grid": 128}))
    out = tmp_path / "a.csv"
    assert main(["acip", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    _, rows = read_csv(out)
    assert rows[0] == "cell_lo,cell_hi,mass,density"
    assert sum(1 for r in rows if r[0].isdigit()) >= 128


@pytest.mark.parametrize("payload", ['{"R": "x"}', '{"nope": 1}', "[1, 2]", "{bad json",
                                     '{"experiment": "acip"}', '{"R": 2.5}'])
def test_malformed_config(tmp_path, payload, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(payload)
    rc = main(["induce", "--map", "quadratic:4", "--config", str(cfg)])
    assert rc == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_bad_flags():
    assert main(["induce", "--bogus"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert main(["pressure", "--map", "tent:2", "--t-grid", "1:0:0.1"]) == EXIT_USAGE


def test_numeric_error():
    assert main(["acip", "--map", "quadratic:7"]) == EXIT_ERROR
    assert main(["acip", "--map", "tent:2", "--grid", "8"]) == EXIT_ERROR


def test_bound_failure_exit(tmp_path, capsys):
    # a "limit" with less entropy than the sequence breaks the semicontinuity check
    cfg = tmp_path / "c.json"
    out = tmp_path / "u.csv"
    cfg.write_text(json.dumps({"family": "quadratic", "params": [4.0, 3.9], "R": 8}))
    rc = main(["usc", "--config", str(cfg), "--out", str(out)])
    assert rc == EXIT_BOUND
    assert "checks 0/1 passed (failed: usc)" in capsys.readouterr().out
    assert out.exists()


def test_kneading_command(tmp_path, capsys):
    out = tmp_path / "k.csv"
    assert main(["kneading", "--prefix", "RLC", "--n", "3", "--out", str(out)]) == EXIT_OK
    _, rows = read_csv(out)
    s, word = rows[1].split(",")
    assert abs(float(s) - (1 + 5 ** 0.5) / 2) < 1e-9
    assert main(["kneading"]) == EXIT_USAGE


def test_keller_command(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["keller", "--eps", "0.4,0.2,0.1,0.05", "--out", str(out)]) == EXIT_OK
    _, rows = read_csv(out)
    assert rows[0].startswith("eps,lambda")


def test_induce_and_sweep(tmp_path):
    out = tmp_path / "i.csv"
    assert main(["induce", "--map", "quadratic:3.9", "--R", "12", "--out", str(out)]) == EXIT_OK
    _, rows = read_csv(out)
    assert rows[0] == "src,dst,tau,z_lo,z_hi,dlog_mid,word"
    out = tmp_path / "s.csv"
    assert main(["sweep", "--params", "3.95,4", "--grid", "256", "--out", str(out)]) == EXIT_OK


def test_equilibrium(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["equilibrium", "--map", "quadratic:4", "--grid", "256",
                 "--out", str(out)]) == EXIT_OK
    text = out.read_text()
    assert "entropy" in text
