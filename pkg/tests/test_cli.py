"""Config parsing, preset resolution, artifact output, exit codes, and
the oscillation-envelope fitter."""

from __future__ import annotations

import numpy as np
import pytest

from spincone.cli import (
    EnvelopeFit,
    PRESETS,
    fit_envelope,
    main,
    parse_config,
    read_curve,
    resolve_config,
    run_experiment,
    write_csv,
)
from spincone.errors import AnalysisError, ConfigError
from spincone.lightcone import LightconeConfig, braided_reference


def test_parse_config_round_trip():
    cfg = parse_config(
        "# comment\n[run]\npipeline = lightcone\n\n[lightcone]\nl = 6\nt_f = 4.5\n"
    )
    assert cfg["run"]["pipeline"].text == "lightcone"
    assert cfg["lightcone"]["l"].text == "6"
    assert cfg["lightcone"]["t_f"].line == 7


def test_parse_config_reports_line_and_column():
    with pytest.raises(ConfigError) as exc:
        parse_config("[run]\n  pipeline lightcone\n")
    assert exc.value.line == 2
    assert exc.value.column == 3

    with pytest.raises(ConfigError) as exc:
        parse_config("pipeline = lightcone\n")
    assert exc.value.line == 1
    assert "before any" in str(exc.value)

    with pytest.raises(ConfigError) as exc:
        parse_config("")
    assert exc.value.line == 1

    with pytest.raises(ConfigError):
        parse_config("[run]\nl = 1\nl = 2\n")
    with pytest.raises(ConfigError):
        parse_config("[bad section\nl = 1\n")


def test_resolve_precedence_and_validation():
    cfg = resolve_config(
        "[run]\npreset = lightcone-delta0\n\n[lightcone]\nn_it = 7\n",
        overrides=("lightcone.l=5",),
        seed=9,
        workers=2,
    )
    assert cfg["lightcone"]["n_it"].text == "7"  # file beats preset
    assert cfg["lightcone"]["l"].text == "5"  # override beats file
    assert cfg["lightcone"]["t_f"].text == "10"  # preset default survives
    assert cfg["run"]["seed"].text == "9"
    assert cfg["run"]["workers"].text == "2"

    with pytest.raises(ConfigError):
        resolve_config(None, "no-such-preset")
    with pytest.raises(ConfigError):
        resolve_config("[run]\npipeline = lightcone\n\n[lightcone]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        resolve_config("[mystery]\nx = 1\n")
    with pytest.raises(ConfigError):
        resolve_config("[lightcone]\nl = 4\n")  # no pipeline anywhere
    with pytest.raises(ConfigError):
        resolve_config(None, "lightcone-delta0", overrides=("l=4",))


def test_every_preset_resolves():
    for name in PRESETS:
        cfg = resolve_config(None, name)
        assert cfg["run"]["pipeline"].text in {
            "freefermion",
            "lightcone",
            "circuits",
            "qbp",
        }


def test_list_presets_and_validate_config(capsys):
    assert main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert "lightcone-delta0" in out and "qbp-frustrated" in out

    assert main(["validate-config", "--preset", "xy-exact", "--seed", "5"]) == 0
    out = capsys.readouterr().out
    assert "[freefermion]" in out and "seed = 5" in out


def test_run_writes_artifact_directory(tmp_path):
    target = run_experiment(
        preset="lightcone-delta0",
        overrides=("lightcone.l=4", "lightcone.n_it=5", "lightcone.t_f=4"),
        out_dir=tmp_path,
    )
    assert target == tmp_path / "lightcone-delta0"
    curve = read_curve(target / "curve.csv")
    # swept times t_f/2 .. t_f on the dt grid
    assert curve["t"][0] == pytest.approx(2.0)
    assert curve["t"][-1] == pytest.approx(4.0)
    assert len(curve["t"]) == 9
    assert set(curve) == {
        "t",
        "mean",
        "rms",
        "stderr",
        "n_it",
        "l",
        "delta",
        "seed",
        "t_f",
    }
    manifest = (target / "manifest.txt").read_text()
    assert "pipeline = lightcone" in manifest
    assert "code_version" in manifest
    assert (target / "run.log").exists()


def test_runs_are_byte_deterministic(tmp_path):
    overrides = ("lightcone.l=4", "lightcone.n_it=8", "lightcone.t_f=3")
    a = run_experiment(
        preset="lightcone-delta0", overrides=overrides, seed=42, out_dir=tmp_path / "a"
    )
    b = run_experiment(
        preset="lightcone-delta0", overrides=overrides, seed=42, out_dir=tmp_path / "b"
    )
    assert (a / "curve.csv").read_bytes() == (b / "curve.csv").read_bytes()
    c = run_experiment(
        preset="lightcone-delta0", overrides=overrides, seed=43, out_dir=tmp_path / "c"
    )
    assert (a / "curve.csv").read_bytes() != (c / "curve.csv").read_bytes()


def test_union_preset_combines_final_times(tmp_path):
    target = run_experiment(
        preset="rms-fluctuations",
        overrides=("lightcone.l=4", "lightcone.n_it=5", "lightcone.t_fs=2 4"),
        out_dir=tmp_path,
    )
    curve = read_curve(target / "curve.csv")
    # t_f=2 covers t in {1, 1.5, 2}; t_f=4 adds {2.5, 3, 3.5, 4}
    assert list(curve["t"]) == [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
    assert list(curve["t_f"][:3]) == [2.0, 2.0, 2.0]
    assert list(curve["t_f"][3:]) == [4.0, 4.0, 4.0, 4.0]


def test_freefermion_pipeline_output(tmp_path):
    target = run_experiment(
        preset="xy-exact",
        overrides=(
            "freefermion.n_values=35",
            "freefermion.periodic_values=36",
            "freefermion.t_f=2",
        ),
        out_dir=tmp_path,
    )
    curve = read_curve(target / "curve.csv")
    assert set(curve["boundary"]) == {"open", "periodic"}
    first = curve["m_center"][0]
    assert first == pytest.approx(-0.5)
    assert len(curve["t"]) == 2 * 9


def test_circuits_pipeline_output(tmp_path):
    target = run_experiment(
        preset="circuit-verify",
        overrides=(
            "circuits.n=8",
            "circuits.block_l_values=4",
            "circuits.corner_pairs=1:4",
        ),
        out_dir=tmp_path,
    )
    curve = read_curve(target / "curve.csv")
    assert curve["family"] == ["block", "corner"]
    assert curve["error"][0] == pytest.approx(0.0586295628, abs=1e-9)
    assert curve["error"][1] == pytest.approx(0.0601807720, abs=1e-9)
    assert curve["velocity"][0] == pytest.approx(8.0)


def test_qbp_pipeline_output(tmp_path):
    target = run_experiment(
        preset="qbp-faf",
        overrides=("qbp.n=40", "qbp.beta_max=1"),
        out_dir=tmp_path,
    )
    curve = read_curve(target / "curve.csv")
    assert list(curve["beta"]) == [0.25, 0.5, 0.75, 1.0]
    assert curve["observable"] == ["chi_u"] * 4
    assert np.all(curve["value"] > 0)
    manifest = (target / "manifest.txt").read_text()
    assert "qbp_normalization" in manifest
    assert "beta^-2" in manifest or "beta^2" in manifest


def test_exit_codes(tmp_path, capsys):
    empty = tmp_path / "empty.cfg"
    empty.write_text("")
    assert main(["run", "--config", str(empty)]) == 2
    assert "line 1" in capsys.readouterr().err

    assert main(["run", "--preset", "circuit-verify", "--override", "circuits.n=14"]) == 3
    capsys.readouterr()

    code = main(
        [
            "run",
            "--preset",
            "qbp-faf",
            "--override",
            "qbp.beta_min=1200",
            "--override",
            "qbp.beta_max=1200",
            "--override",
            "qbp.n=40",
        ]
    )
    assert code == 4

    big = main(
        ["run", "--preset", "lightcone-delta0", "--override", "lightcone.l=30"]
    )
    assert big == 3


def test_fit_envelope_synthetic_power_law(tmp_path):
    t = np.arange(1.0, 30.0001, 0.25)
    y = t**-0.5 * np.cos(2.0 * t + 3.0 * np.pi / 4.0)
    path = tmp_path / "synth.csv"
    write_csv(path, ["t", "mean"], list(zip(t, y)))
    fit = fit_envelope(path, (2.0, 28.0))
    assert isinstance(fit, EnvelopeFit)
    assert fit.exponent == pytest.approx(0.5, abs=0.02)
    assert fit.omega == pytest.approx(2.0, abs=0.01)
    assert fit.theta0 == pytest.approx(3.0 * np.pi / 4.0, abs=0.2)
    assert fit.n_extrema >= 4


def test_fit_envelope_needs_extrema():
    t = np.arange(0.0, 10.0001, 0.25)
    with pytest.raises(AnalysisError):
        fit_envelope((t, np.exp(-t)), (0.0, 10.0))
    with pytest.raises(AnalysisError):
        fit_envelope((t, np.cos(2 * t)), (0.0, 0.5))


def test_fit_envelope_on_free_fermion_curve(tmp_path):
    target = run_experiment(
        preset="xy-exact",
        overrides=("freefermion.n_values=101", "freefermion.periodic_values="),
        out_dir=tmp_path,
    )
    fit = fit_envelope(target / "curve.csv", (5.0, 25.0), column="m_center")
    assert fit.exponent == pytest.approx(0.5, abs=0.05)
    assert fit.omega == pytest.approx(2.0, abs=0.05)
    assert fit.theta0 == pytest.approx(3.0 * np.pi / 4.0, abs=0.2)


@pytest.mark.slow
def test_fit_envelope_on_interacting_curve():
    """At delta=0.5 the central-spin envelope decays with a larger power
    than the free-fermion 1/2."""
    curves = [braided_reference(LightconeConfig(l=10, t_f=tf, delta=0.5, n_it=1))
              for tf in (4.5, 9.0)]
    seen: dict[float, float] = {}
    for times, values in curves:
        for t, v in zip(times, values):
            seen.setdefault(round(float(t), 9), float(v))
    ts = np.array(sorted(seen))
    ys = np.array([seen[t] for t in ts])
    fit = fit_envelope((ts, ys), (float(ts[0]), float(ts[-1])))
    assert fit.exponent == pytest.approx(1.25, abs=0.25)


def test_fit_envelope_cli(tmp_path, capsys):
    t = np.arange(1.0, 20.0001, 0.25)
    y = t**-1.0 * np.cos(3.0 * t)
    path = tmp_path / "c.csv"
    write_csv(path, ["t", "mean"], list(zip(t, y)))
    assert main(["fit-envelope", "--csv", str(path), "--window", "2", "19"]) == 0
    out = capsys.readouterr().out
    assert "exponent" in out and "omega" in out


def test_config_file_run_and_csv_format(tmp_path):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(
        "[run]\npipeline = lightcone\nseed = 1\n"
        "[lightcone]\nl = 4\nt_f = 2\nn_it = 3\n"
    )
    target = run_experiment(config_path=cfg, out_dir=tmp_path)
    assert target.name == "tiny"
    text = (target / "curve.csv").read_text(encoding="utf-8")
    assert text.endswith("\n") and "\r" not in text
    assert text.splitlines()[0].startswith("t,mean,")
