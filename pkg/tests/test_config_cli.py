import json

import pytest
from hypothesis import given, strategies as st

from fermion_pimc import config as config_io
from fermion_pimc.cli import main
from fermion_pimc.exceptions import ConfigurationError
from fermion_pimc.perturbation import PerturbationConfig
from fermion_pimc.potentials import PotentialKind, PotentialSpec, harmonic, harmonic_coulomb
from fermion_pimc.presets import PRESETS, get_preset
from fermion_pimc.statistics import ReplicaPlan

GOOD = """\
n: 3
d: 3
beta: 1.0
potential:
  kind: HarmonicCoulomb
  coupling: 0.5
delta_t: 0.1
samples: 2048
seed: 12
"""

potentials = st.sampled_from([harmonic(), harmonic_coulomb(0.5), harmonic_coulomb(1.25),
                              PotentialSpec(PotentialKind.CUSTOM_SEPARABLE, frequencies=(1.0, 2.0, 0.5))])


@given(
    potentials,
    st.integers(1, 8),
    st.sampled_from([0.5, 1.0, 2.0]),
    st.sampled_from([1, 2, 4, 20]),
    st.integers(2, 1 << 20),
    st.integers(0, (1 << 64) - 1),
    st.booleans(),
)
def test_round_trip(potential, n, beta, steps, samples, seed, extras):
    cfg = config_io.RunConfig(potential, n, 3, beta, steps, beta / steps, samples, seed)
    if extras:
        cfg = config_io.RunConfig(potential, n, 3, beta, steps, beta / steps, samples, seed,
                                  perturbation=PerturbationConfig(n_xi=7),
                                  replicas=ReplicaPlan(32, 64), output="out.csv")
    assert config_io.loads(cfg.dumps()) == cfg


@pytest.mark.parametrize("line, replacement, field, lineno", [
    ("beta: 1.0", "beta: -1.0", "beta", 3),
    ("  coupling: 0.5", "  coupling: -0.5", "potential", 4),
    ("delta_t: 0.1", "delta_t: 0.3", "delta_t", 7),
    ("seed: 12", "seeds: 12", "seeds", 9),
    ("n: 3", "n: three", "n", 1),
])
def test_diagnostics_name_field_and_line(line, replacement, field, lineno):
    text = GOOD.replace(line, replacement)
    with pytest.raises(ConfigurationError) as info:
        config_io.loads(text, "run.yaml")
    message = str(info.value)
    assert message.startswith(f"run.yaml:{lineno}: field '{field}'")


def test_malformed_yaml_reports_line():
    with pytest.raises(ConfigurationError, match=r"run.yaml:\d+: malformed"):
        config_io.loads("n: 3\nd: [1,\nbeta: 1\n", "run.yaml")


def test_replace_rederives_grid():
    cfg = config_io.loads(GOOD)
    finer = cfg.replace(delta_t=0.05)
    assert finer.steps == 20 and finer.delta_t == 0.05
    assert cfg.replace(seed=None) == cfg


def test_load_and_dump_files(tmp_path):
    cfg = config_io.loads(GOOD)
    path = tmp_path / "cfg.yaml"
    config_io.dump(cfg, path)
    assert config_io.load(path) == cfg
    with pytest.raises(ConfigurationError, match="cannot read"):
        config_io.load(tmp_path / "missing.yaml")


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_exact_command(capsys):
    code, out, _ = _run(capsys, "exact-ho", "--n", "6", "--beta", "1")
    assert code == 0
    header, row = out.strip().splitlines()
    assert header.split(",")[-2:] == ["Z_exact", "h_exact"]
    assert float(row.split(",")[-1]) == pytest.approx(22.7799, rel=5e-5)


def test_estimates_are_byte_identical(capsys, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(GOOD)
    _, first, _ = _run(capsys, "estimate-h", "--config", str(cfg))
    _, second, _ = _run(capsys, "estimate-h", "--config", str(cfg), "--workers", "3")
    _, other_seed, _ = _run(capsys, "estimate-h", "--config", str(cfg), "--seed", "13")
    assert first == second
    assert first != other_seed


def test_output_file_and_manifest(capsys, tmp_path):
    out = tmp_path / "z.csv"
    code, stdout, _ = _run(capsys, "estimate-z", "--n", "2", "--d", "1", "--samples", "512",
                           "--dt", "0.25", "--out", str(out))
    assert code == 0 and stdout == ""
    assert out.read_text().startswith("quantity,")
    manifest = json.loads((tmp_path / "z.csv.manifest.json").read_text())
    assert manifest["command"] == "estimate-z"
    assert manifest["config"]["samples"] == 512
    assert "code_version" in manifest


def test_json_format(capsys):
    code, out, _ = _run(capsys, "estimate-h", "--n", "2", "--d", "2", "--samples", "256",
                        "--dt", "0.25", "--format", "json")
    assert code == 0
    payload = json.loads(out)
    assert payload["rows"][0]["quantity"] == "meanfield_energy"


def test_preset_listing(capsys):
    code, out, _ = _run(capsys, "preset")
    assert code == 0
    for name in PRESETS:
        assert f"{name}: " in out
    assert "table3: V2 d=3 n=6 lambda=0.5" in out
    assert "table4: d=2 beta in {1, 0.3}" in out
    _, listed, _ = _run(capsys, "preset", "--list")
    assert listed == out


def test_unknown_preset_lists_valid_names(capsys):
    code, _, err = _run(capsys, "preset", "table9")
    assert code == 2
    assert "table1" in err and "fig-moments" in err
    with pytest.raises(ConfigurationError):
        get_preset("nope")


def test_exit_codes(capsys, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(GOOD.replace("beta: 1.0", "beta: 0"))
    code, _, err = _run(capsys, "estimate-z", "--config", str(bad))
    assert code == 2 and "bad.yaml:3" in err
    code, _, err = _run(capsys, "tensor", "--n", "9", "--d", "1", "--samples", "16", "--dt", "0.5")
    assert code == 2 and "determinant estimator" in err
    code, _, err = _run(capsys, "exact-ho", "--n", "20", "--beta", "40")
    assert code == 4


def test_perturb_and_replicas_commands(capsys):
    code, out, _ = _run(capsys, "perturb", "--n", "2", "--d", "3", "--lambda", "0.5",
                        "--samples", "256", "--dt", "0.25")
    assert code == 0 and out.startswith("h_nu,h_perturb,indicator")
    code, out, _ = _run(capsys, "replicas", "--n", "2", "--d", "1", "--samples", "960",
                        "--dt", "0.25")
    assert code == 0
    assert len(out.strip().splitlines()) == 31
