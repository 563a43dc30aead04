import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from ntk_transfer.cli import MANIFEST_SCHEMA, main
from ntk_transfer.config import CONFIG_SCHEMA, bundled_config, load_config, parse_config
from ntk_transfer.errors import ConfigError
from ntk_transfer.spectral import Spectrum

BUNDLED = ["smoke", "fig1a", "fig1b", "fig2", "fig2_fixed", "fig3a1", "fig3a2", "figS6", "figS7"]

TINY = """
[kernel]
input_dim = 5
[spectrum]
k_max = 30
r = 300
[experiment]
protocol = single, sequential
N_A = 10
N_B = 10
rho = 0, 1
trials = 3
n_test = 200
P_prime = 300
"""


def write(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_defaults_and_lists():
    cfg = parse_config(TINY)
    assert cfg.kernel.depth == 3 and cfg.kernel.sigma_w_sq == 2.0 and cfg.kernel.sigma_b_sq == 0.0
    assert cfg.experiment.rho == (0.0, 1.0)
    assert cfg.experiment.constant_mode == "drop"
    assert cfg.experiment.size_pairs == [(10, 10)]


def test_repeat_and_sequence_syntax():
    cfg = parse_config(TINY + "N_list = 4000, 100*3; 50*2\n")
    assert cfg.experiment.N_list == ((4000, 100, 100, 100), (50, 50))


@pytest.mark.parametrize("line, field", [
    ("input_dim = 1", "kernel.input_dim"),
    ("depth = 0", "kernel.depth"),
    ("sigma_w_sq = -1", "kernel.sigma_w_sq"),
])
def test_kernel_errors_name_the_field(line, field):
    text = TINY.replace("input_dim = 5", line if "input_dim" in line else "input_dim = 5\n" + line)
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(text)


@pytest.mark.parametrize("old, new, field", [
    ("rho = 0, 1", "rho = 0, 2", "experiment.rho"),
    ("protocol = single, sequential", "protocol = sideways", "experiment.protocol"),
    ("trials = 3", "trials = 0", "experiment.trials"),
    ("n_test = 200", "n_test = 200\nsigma_sq = -1", "experiment.sigma_sq"),
])
def test_experiment_errors_name_the_field(old, new, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(TINY.replace(old, new))


def test_unknown_key_and_bad_integer():
    with pytest.raises(ConfigError, match="experiment"):
        parse_config(TINY + "bogus = 1\n")
    with pytest.raises(ConfigError, match=r"\[experiment\] N_A"):
        parse_config(TINY.replace("N_A = 10", "N_A = 10.5"))
    with pytest.raises(ConfigError):
        parse_config("not an ini file")


def test_zip_pairing_needs_equal_lengths():
    cfg = parse_config(TINY.replace("N_B = 10", "N_B = 10, 20") + "pairing = zip\n")
    with pytest.raises(ConfigError):
        cfg.experiment.size_pairs


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_load_and_round_trip(name):
    cfg = bundled_config(name)
    jsonschema.validate(cfg.to_dict(), CONFIG_SCHEMA)
    assert cfg.experiment.trials >= 1


def test_relative_spectrum_file(tmp_path):
    (tmp_path / "sub").mkdir()
    write(tmp_path / "sub", "k,eta,mult\n0,0.0,1\n1,0.5,5\n", "s.csv")
    cfg = load_config(write(tmp_path, TINY.replace("r = 300", "r = 300\nfile = sub/s.csv")))
    assert Path(cfg.spectrum.file) == tmp_path / "sub" / "s.csv"


def run(args, capsys=None):
    rc = main([str(a) for a in args])
    out = capsys.readouterr() if capsys else None
    return rc, out


def test_spectrum_command(tmp_path, capsys):
    rc, out = run(["spectrum", "--config", "smoke", "--out", tmp_path], capsys)
    assert rc == 0
    spec = Spectrum.from_csv(tmp_path / "spectrum.csv")
    assert spec.eta[0] == 0.0 and len(spec.eta) == 41
    assert "Theta(1)" in out.out
    manifest = json.loads((tmp_path / "spectrum.manifest.json").read_text())
    jsonschema.validate(manifest, MANIFEST_SCHEMA)


def test_linear_kernel_spectrum(tmp_path):
    cfg = write(tmp_path, TINY.replace("input_dim = 5", "input_dim = 3\nkind = linear")
                .replace("k_max = 30", "k_max = 4"))
    assert run(["spectrum", "--config", cfg, "--out", tmp_path])[0] == 0
    spec = Spectrum.from_csv(tmp_path / "spectrum.csv")
    assert spec.eta[1] == pytest.approx(1 / 3, rel=1e-10)
    assert np.abs(spec.eta[2:]).max() < 1e-12


def test_theory_command(tmp_path):
    assert run(["theory", "--config", "smoke", "--out", tmp_path])[0] == 0
    lines = (tmp_path / "theory.csv").read_text().splitlines()
    labels = {line.split(",")[0] for line in lines[1:]}
    assert {"E1", "E_AB", "E_AB_back", "E_ave"} <= labels


def test_simulate_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--config", "smoke", "--out", a])[0] == 0
    assert run(["simulate", "--config", "smoke", "--out", b, "--threads", "2"])[0] == 0
    assert (a / "simulate.csv").read_bytes() == (b / "simulate.csv").read_bytes()
    header = (a / "simulate.csv").read_text().splitlines()[0]
    assert header == "protocol,n_task,N_A,N_B,rho,sigma_sq,mc_mean,mc_q25,mc_q75,mc_stderr,theory_value"
    manifest = json.loads((a / "simulate.manifest.json").read_text())
    jsonschema.validate(manifest, MANIFEST_SCHEMA)
    assert manifest["seed"] == 0


def test_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, TINY)
    run(["simulate", "--config", cfg, "--out", tmp_path / "a"])
    run(["simulate", "--config", cfg, "--out", tmp_path / "b", "--seed", "9"])
    assert (tmp_path / "a/simulate.csv").read_text() != (tmp_path / "b/simulate.csv").read_text()


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("NTK_TRANSFER_OUT", str(tmp_path / "env"))
    assert main(["theory", "--config", "smoke"]) == 0
    assert (tmp_path / "env" / "theory.csv").exists()


def test_exit_code_config_error(tmp_path, capsys):
    cfg = write(tmp_path, TINY.replace("input_dim = 5", "input_dim = 1"))
    rc, out = run(["theory", "--config", cfg, "--out", tmp_path], capsys)
    assert rc == 2 and "kernel.input_dim" in out.err
    assert run(["theory", "--config", tmp_path / "missing.cfg"])[0] == 2
    assert run(["theory", "--config", "no_such_recipe"])[0] == 2
    assert run(["theory", "--config", "smoke", "--threads", "0"])[0] == 2


def test_exit_code_mode_deficit(tmp_path, capsys):
    # a 3-level spectrum file has far fewer modes than the requested sample size
    write(tmp_path, "k,eta,mult\n0,0.0,1\n1,0.5,5\n2,0.1,14\n", "tiny.csv")
    text = TINY.replace("r = 300", "r = 300\nfile = tiny.csv").replace("N_A = 10", "N_A = 500")
    rc, out = run(["theory", "--config", write(tmp_path, text), "--out", tmp_path], capsys)
    assert rc == 3 and "ModeDeficitError" in out.err


def test_check_fast(capsys):
    rc, out = run(["check", "--fast"], capsys)
    assert rc == 0
    assert out.out.count("PASS") >= 7 and "FAIL" not in out.out


def test_check_spectrum_file(tmp_path, capsys):
    run(["spectrum", "--config", "smoke", "--out", tmp_path])
    good = tmp_path / "spectrum.csv"
    capsys.readouterr()
    rc, out = run(["check", "--spectrum", good, "--dim", "5"], capsys)
    assert rc == 0
    lines = good.read_text().splitlines()
    lines[3] = lines[3].split(",")[0] + ",-1.0," + lines[3].split(",")[2]
    lines[5] = lines[5].split(",")[0] + "," + lines[5].split(",")[1] + ",7"
    bad = write(tmp_path, "\n".join(lines) + "\n", "bad.csv")
    rc, out = run(["check", "--spectrum", bad, "--dim", "5"], capsys)
    assert rc == 4
    assert "FAIL  eta-nonnegative" in out.out and "FAIL  mult-degeneracy" in out.out
