import configparser
import csv
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edmdlab import cli
from edmdlab.config import ConfigError, ExperimentConfig, dump_config, parse_config
from edmdlab.edmd import EDMDError

SMALL = """\
[map]
degree = 4
cos = 0, 0, 0.08
sin = 0, 0, 0, 0, 0, -0.4

[density]
kind = physical
physical_order = 64

[experiment]
K_list = 4, 6, 8
N_list = 100, 1000
seeds = 2
sampling = iid
tracked = 1, 2
fig3_K = 4

[oracle]
K_oracle = 64

[opuc]
K_big = 32
ratio_K = 4, 8
"""

DOUBLING = """\
[map]
degree = 2
cos =
sin =

[density]
kind = uniform

[experiment]
K_list = 4, 8, 12
mode_rank = 0

[oracle]
K_oracle = 64
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(tmp_path, command, text, out="out", extra=()):
    cfg = write(tmp_path, text)
    d = str(tmp_path / out)
    code = cli.main([command, "--config", cfg, "--out", d, *extra])
    return code, d


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def csv_bytes(d):
    return {f: Path(d, f).read_bytes() for f in sorted(os.listdir(d)) if f.endswith(".csv")}


# config


def test_defaults_are_the_fig1_map():
    c = ExperimentConfig()
    assert c.degree == 4
    assert c.map_sin[5] == -0.4 and c.map_cos[2] == 0.08
    assert parse_config("") == c
    f = c.build_map()
    x = np.linspace(0, 6, 7)
    assert np.allclose(f.lift(x), 4 * x - 0.4 * np.sin(6 * x) + 0.08 * np.cos(3 * x))


def test_round_trip_small():
    c = parse_config(SMALL)
    assert parse_config(dump_config(c)) == c
    assert dump_config(parse_config(dump_config(c))) == dump_config(c)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.integers(1, 60), min_size=1, max_size=6, unique=True),
    st.floats(1e-3, 0.5, allow_nan=False),
    st.floats(0.01, 2.0, allow_nan=False),
    st.one_of(st.none(), st.floats(0.01, 1.0, allow_nan=False)),
    st.integers(0, 2**31),
)
def test_round_trip_property(ks, floor, t, kappa, seed):
    c = ExperimentConfig(K_list=tuple(sorted(ks)), modulus_floor=floor, t=t, kappa=kappa, seed=seed)
    assert parse_config(dump_config(c)) == c


def test_config_hash_tracks_content():
    a, b = ExperimentConfig(), ExperimentConfig(seed=1)
    assert a.config_hash() == ExperimentConfig().config_hash()
    assert a.config_hash() != b.config_hash()


def test_unknown_field_reports_line():
    with pytest.raises(ConfigError, match=r"\[experiment\] K_lst \(line 3\)"):
        parse_config("[map]\n[experiment]\nK_lst = 4, 8\n")


def test_unparseable_value_reports_line():
    with pytest.raises(ConfigError, match=r"\[map\] degree \(line 3\)"):
        parse_config("[map]\n\ndegree = four\n")


def test_non_expanding_map_rejected_with_min_derivative():
    # f(x) = 2x + 1.5 sin x has min |f'| = 0.5
    with pytest.raises(ConfigError, match=r"min \|f'\| = 0\.5 "):
        parse_config("[map]\ndegree = 2\ncos =\nsin = 1.5\n")


@pytest.mark.parametrize(
    "text",
    [
        "[experiment]\nK_list = 8, 4\n",
        "[experiment]\nsampling = grid\n",
        "[density]\nkind = other\n",
        "[oracle]\nK_oracle = 32\n",
        "[oracle]\nmodulus_floor = 1e-6\n",
        "[weights]\nt = 0\n",
        "[experiment]\nseeds = 0\n",
    ],
)
def test_invalid_values_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_with_overrides_drops_cache():
    c = parse_config(SMALL)
    c.build_density()
    d = c.with_overrides(seed=5)
    assert d.seed == 5 and d._cache == {} and "physical" in c._cache


# CLI exit codes


def test_exit_code_config_error(tmp_path, capsys):
    code, _ = run(tmp_path, "resonances", "[map]\nbogus = 1\n")
    assert code == 2
    assert "line 2" in capsys.readouterr().err


def test_exit_code_missing_config(tmp_path):
    assert cli.main(["resonances", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 2


def test_exit_code_nonpositive_density(tmp_path):
    code, _ = run(tmp_path, "resonances", "[density]\nkind = explicit\ncos = 1.5\n")
    assert code == 2


def test_exit_code_numerical_failure(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise EDMDError("synthetic failure")

    monkeypatch.setattr(cli, "oracle_resonances", boom)
    code, d = run(tmp_path, "resonances", DOUBLING)
    assert code == 3
    assert "synthetic failure" in capsys.readouterr().err
    dump = Path(d, "failure.txt").read_text()
    assert "[map]" in dump and "EDMDError" in dump


def test_env_var_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("EDMDLAB_OUT", str(tmp_path / "env"))
    assert cli.main(["resonances", "--config", write(tmp_path, DOUBLING)]) == 0
    assert os.path.exists(tmp_path / "env" / "resonances.csv")


# outputs


def test_resonances_default_contains_one(tmp_path):
    code, d = run(tmp_path, "resonances", "")
    assert code == 0
    rows = read_csv(os.path.join(d, "resonances.csv"))
    assert rows[0] == ["rank", "re_lambda", "im_lambda", "modulus", "residual"]
    assert float(rows[1][1]) == pytest.approx(1, abs=1e-8)
    assert float(rows[1][2]) == pytest.approx(0, abs=1e-8)


def test_resonances_doubling_single_point(tmp_path):
    code, d = run(tmp_path, "resonances", DOUBLING)
    assert code == 0
    rows = read_csv(os.path.join(d, "resonances.csv"))
    assert len(rows) == 2 and float(rows[1][1]) == pytest.approx(1)


def test_csv_format(tmp_path):
    _, d = run(tmp_path, "fig1", SMALL)
    raw = Path(d, "fig1_spectra.csv").read_bytes()
    assert raw.count(b"\r\n") == raw.count(b"\n")
    value = read_csv(os.path.join(d, "fig1_spectra.csv"))[2][2]
    assert len(value.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) >= 15


@pytest.mark.parametrize("command", sorted(cli.COMMANDS))
def test_manifest_lists_every_file(tmp_path, command):
    code, d = run(tmp_path, command, SMALL)
    assert code == 0
    cp = configparser.ConfigParser()
    cp.read(os.path.join(d, "manifest.ini"))
    listed = set(cp["artifacts"].values())
    on_disk = set(os.listdir(d)) - {"manifest.ini", "config.ini"}
    assert listed == on_disk
    for f in listed:
        assert os.path.getsize(os.path.join(d, f)) > 0
    for f in listed:
        if f.endswith(".csv"):
            assert len(read_csv(os.path.join(d, f))) >= 1
        else:
            assert Path(d, f).read_text().startswith("<?xml")
    assert cp["run"]["config_hash"] == parse_config(SMALL).config_hash()
    assert parse_config(Path(d, "config.ini").read_text()) == parse_config(SMALL)


def test_rerun_byte_identical(tmp_path):
    for command in ("fig1", "fig3"):
        _, a = run(tmp_path, command, SMALL, out=f"{command}_a")
        _, b = run(tmp_path, command, SMALL, out=f"{command}_b", extra=("--workers", "3"))
        assert csv_bytes(a) == csv_bytes(b)


def test_seed_override_changes_data(tmp_path):
    _, a = run(tmp_path, "fig3", SMALL, out="a")
    _, b = run(tmp_path, "fig3", SMALL, out="b", extra=("--seed", "11"))
    assert csv_bytes(a)["fig3_errors.csv"] != csv_bytes(b)["fig3_errors.csv"]
    cp = configparser.ConfigParser()
    cp.read(os.path.join(b, "manifest.ini"))
    assert cp["run"]["seeds"] == "11, 12"


def test_fig1_doubling_fits_skipped(tmp_path, capsys):
    code, d = run(tmp_path, "fig1", DOUBLING)
    assert code == 0
    errs = read_csv(os.path.join(d, "fig1_errors.csv"))
    assert all(float(v) == 0 for r in errs[1:] for v in r[1:])
    assert "skipped" in capsys.readouterr().err
    cp = configparser.ConfigParser()
    cp.read(os.path.join(d, "manifest.ini"))
    assert all(v == "skipped" for v in cp["fits"].values())


def test_fig1_single_K(tmp_path):
    code, d = run(tmp_path, "fig1", SMALL.replace("K_list = 4, 6, 8", "K_list = 8"))
    assert code == 0
    fits = read_csv(os.path.join(d, "fig1_fits.csv"))
    assert all(r[1] == "nan" for r in fits[1:])
    assert len(read_csv(os.path.join(d, "fig1_errors.csv"))) == 2


def test_fig2_doubling_flat_unit_curves(tmp_path):
    code, d = run(tmp_path, "fig2", DOUBLING)
    assert code == 0
    rows = np.array(read_csv(os.path.join(d, "fig2_modes.csv"))[1:], dtype=float)
    assert np.allclose(rows[:, 1:], 1, atol=1e-12)


def test_fig2_single_K(tmp_path, capsys):
    code, d = run(tmp_path, "fig2", SMALL.replace("K_list = 4, 6, 8", "K_list = 8"))
    assert code == 0
    assert not os.path.exists(os.path.join(d, "fig2_convergence.csv"))
    header = read_csv(os.path.join(d, "fig2_modes.csv"))[0]
    assert header == ["x", "abs_a_K8", "abs_b_K8"]
    assert "no convergence panel" in capsys.readouterr().err


def test_fig3_rejects_small_N(tmp_path, capsys):
    code, _ = run(tmp_path, "fig3", SMALL.replace("N_list = 100, 1000", "N_list = 5, 1000"))
    assert code == 2
    assert "2K-1" in capsys.readouterr().err


def test_opuc_diagnostics_uniform(tmp_path):
    code, d = run(tmp_path, "opuc-diagnostics", SMALL.replace("kind = physical", "kind = uniform"))
    assert code == 0
    s = np.array(read_csv(os.path.join(d, "opuc_s.csv"))[1:], dtype=float)
    assert np.all(s[:, 1:3] == 0)
    ratio = np.array(read_csv(os.path.join(d, "opuc_ratio.csv"))[1:], dtype=float)
    assert np.allclose(ratio[:, 3], 1, rtol=0, atol=1e-12)


def test_opuc_diagnostics_cos_density(tmp_path):
    code, d = run(tmp_path, "opuc-diagnostics", SMALL.replace("kind = physical", "kind = explicit\ncos = 0.5"))
    assert code == 0
    s = np.array(read_csv(os.path.join(d, "opuc_s.csv"))[1:], dtype=float)
    assert np.max(np.abs(s[:, 2])) <= 1e-9


def test_opuc_diagnostics_theta_fit(tmp_path):
    code, d = run(tmp_path, "opuc-diagnostics", SMALL)
    cp = configparser.ConfigParser()
    cp.read(os.path.join(d, "manifest.ini"))
    slope = float(cp["fits"]["theta_plus_decay"].split(",")[0].split("=")[1])
    assert slope < 0
