"""Batch experiment harness.

Parses flat ``key = value`` configs with one section per pipeline,
resolves named presets, dispatches the simulation modules, and writes
plot-ready CSV curves plus a key=value manifest and a run log.  Also
hosts the oscillation-envelope fitter used on emitted curves.
"""

from __future__ import annotations

import argparse
import re
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .circuits import (
    CornerConfig,
    build_block_circuit,
    build_corner_circuit,
    circuit_error,
    measure_circuit_velocity,
)
from .errors import AnalysisError, ConfigError, PositivityError, ResourceLimitError
from .freefermion import central_sz_curve
from .lightcone import LightconeConfig, run_sampling, union_sweep
from .models import build_faf, build_frustrated, build_xxz
from .propagation import PropagatorConfig
from .qbp import (
    TransferTable,
    dimer_susceptibility,
    specific_heat,
    sweep,
    uniform_susceptibility,
)

MAX_STATE_BITS = 24
MAX_DENSE_BITS = 13

CSV_NAME = "curve.csv"
MANIFEST_NAME = "manifest.txt"
LOG_NAME = "run.log"


@dataclass(frozen=True)
class ConfigValue:
    """A raw config entry plus where it came from (0/0 = synthetic)."""

    text: str
    line: int = 0
    column: int = 0


Resolved = dict[str, dict[str, ConfigValue]]

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.-]+)\]$")
_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.-]*$")


def parse_config(text: str) -> Resolved:
    """Parse ``[section]`` / ``key = value`` text.  Comment lines start
    with ``#`` or ``;``.  Raises ConfigError with 1-based line/column."""
    out: Resolved = {}
    section: str | None = None
    saw_anything = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        saw_anything = True
        col = len(raw) - len(raw.lstrip()) + 1
        if line.startswith("["):
            m = _SECTION_RE.match(line)
            if m is None:
                raise ConfigError(f"malformed section header {line!r}", lineno, col)
            section = m.group(1)
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno, col)
        key, _, value = line.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"invalid key {key!r}", lineno, col)
        if section is None:
            raise ConfigError(f"key {key!r} appears before any [section]", lineno, col)
        if key in out[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}]", lineno, col)
        out[section][key] = ConfigValue(value.strip(), lineno, col)
    if not saw_anything:
        raise ConfigError("config defines no sections or keys", 1, 1)
    return out


_LIGHTCONE_COMMON = {
    "dt": "0.25",
    "n_it": "100",
    "t_fs": "",
    "series_order": "40",
    "cache_pairs": "true",
}

PRESETS: dict[str, Resolved] = {}


def _preset(name: str, sections: dict[str, dict[str, str]]) -> None:
    PRESETS[name] = {
        sec: {k: ConfigValue(v) for k, v in keys.items()} for sec, keys in sections.items()
    }


_preset(
    "xy-exact",
    {
        "run": {"pipeline": "freefermion"},
        "freefermion": {
            "n_values": "35 51 101",
            "periodic_values": "36",
            "t_f": "25",
            "dt": "0.25",
        },
    },
)
for _name, _delta, _tf, _extra in (
    ("lightcone-delta0", "0", "10", {}),
    ("lightcone-delta0.5", "0.5", "9", {}),
    ("lightcone-delta1", "1", "7.5", {}),
    ("lightcone-delta2", "2", "6", {"series_order": "60"}),
):
    _preset(
        _name,
        {
            "run": {"pipeline": "lightcone"},
            "lightcone": {
                **_LIGHTCONE_COMMON,
                "l": "10",
                "delta": _delta,
                "t_f": _tf,
                **_extra,
            },
        },
    )
_preset(
    "rms-fluctuations",
    {
        "run": {"pipeline": "lightcone"},
        "lightcone": {
            **_LIGHTCONE_COMMON,
            "l": "12",
            "delta": "0",
            "t_f": "12",
            "dt": "0.5",
            "n_it": "200",
            "t_fs": "2 4 6 8 10 12",
        },
    },
)
_preset(
    "circuit-verify",
    {
        "run": {"pipeline": "circuits"},
        "circuits": {
            "n": "12",
            "t": "0.5",
            "delta": "1",
            "block_l_values": "4 6 12",
            "corner_pairs": "1:4 2:6 3:12",
            "v_lr": "",
            "rounds": "1",
        },
    },
)
_preset(
    "qbp-faf",
    {
        "run": {"pipeline": "qbp"},
        "qbp": {
            "model": "faf",
            "p": "0",
            "n": "2000",
            "l0": "5",
            "beta_min": "0.25",
            "beta_max": "8",
            "beta_step": "0.25",
            "observables": "chi_u",
            "disorder_seed": "",
            "h_step": "1e-3",
            "lambda_step": "1e-3",
        },
    },
)
_preset(
    "qbp-frustrated",
    {
        "run": {"pipeline": "qbp"},
        "qbp": {
            "model": "frustrated",
            "p": "",
            "n": "1999",
            "l0": "7",
            "beta_min": "0.5",
            "beta_max": "8",
            "beta_step": "0.25",
            "observables": "specific_heat chi_u chi_dimer",
            "disorder_seed": "",
            "h_step": "1e-3",
            "lambda_step": "1e-3",
        },
    },
)

PRESET_SUMMARIES = {
    "xy-exact": "free-fermion central-spin curves, open and periodic chains",
    "lightcone-delta0": "light-cone sampling at delta=0, half-block l=10",
    "lightcone-delta0.5": "light-cone sampling at delta=0.5",
    "lightcone-delta1": "light-cone sampling at the isotropic point",
    "lightcone-delta2": "light-cone sampling at delta=2 (deep Ising side)",
    "rms-fluctuations": "sample-spread (rms) causality diagnostic at l=12",
    "circuit-verify": "block and corner circuit error/velocity table at n=12",
    "qbp-faf": "dimerized random-sign chain susceptibility on the beta grid",
    "qbp-frustrated": "frustrated-chain thermodynamics (heat, chi, dimer response)",
}

_SCHEMA: dict[str, set[str]] = {
    "run": {"pipeline", "preset", "seed", "workers"},
    "freefermion": {"n_values", "periodic_values", "t_f", "dt"},
    "lightcone": {
        "l",
        "delta",
        "t_f",
        "t_fs",
        "dt",
        "n_it",
        "series_order",
        "cache_pairs",
    },
    "circuits": {"n", "t", "delta", "block_l_values", "corner_pairs", "v_lr", "rounds"},
    "qbp": {
        "model",
        "p",
        "n",
        "l0",
        "beta_min",
        "beta_max",
        "beta_step",
        "observables",
        "disorder_seed",
        "h_step",
        "lambda_step",
    },
}


def _merge(base: Resolved, extra: Resolved) -> Resolved:
    out = {sec: dict(keys) for sec, keys in base.items()}
    for sec, keys in extra.items():
        out.setdefault(sec, {}).update(keys)
    return out


def resolve_config(
    config_text: str | None = None,
    preset: str | None = None,
    overrides: tuple[str, ...] = (),
    seed: int | None = None,
    workers: int | None = None,
) -> Resolved:
    """Merge preset defaults, a config file, and command-line overrides
    (later sources win), then validate against the known key schema."""
    file_cfg: Resolved = {}
    if config_text is not None:
        file_cfg = parse_config(config_text)
    if preset is None:
        preset_entry = file_cfg.get("run", {}).get("preset")
        if preset_entry is not None:
            preset = preset_entry.text
    cfg: Resolved = {"run": {"seed": ConfigValue("0"), "workers": ConfigValue("1")}}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; choose from {sorted(PRESETS)}"
            )
        cfg = _merge(cfg, PRESETS[preset])
        cfg["run"]["preset"] = ConfigValue(preset)
    cfg = _merge(cfg, file_cfg)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        target, _, value = item.partition("=")
        sec, _, key = target.partition(".")
        cfg.setdefault(sec.strip(), {})[key.strip()] = ConfigValue(value.strip())
    if seed is not None:
        cfg["run"]["seed"] = ConfigValue(str(seed))
    if workers is not None:
        cfg["run"]["workers"] = ConfigValue(str(workers))
    for sec, keys in cfg.items():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, val in keys.items():
            if key not in _SCHEMA[sec]:
                raise ConfigError(
                    f"unknown key {key!r} in [{sec}]", val.line, val.column
                )
    if "pipeline" not in cfg.get("run", {}):
        raise ConfigError("no pipeline selected: give a preset or [run] pipeline")
    return cfg


def _convert(cfg: Resolved, sec: str, key: str, kind, default=None):
    entry = cfg.get(sec, {}).get(key)
    if entry is None or entry.text == "":
        if default is not None or entry is not None:
            return default
        raise ConfigError(f"missing required key {key!r} in [{sec}]")
    try:
        return kind(entry.text)
    except ValueError:
        raise ConfigError(
            f"bad value {entry.text!r} for [{sec}] {key}", entry.line, entry.column
        ) from None


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(text)


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split()]


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split()]


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(x) for x in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _run_freefermion(cfg: Resolved, log) -> tuple[list[str], list[tuple], dict]:
    n_open = _convert(cfg, "freefermion", "n_values", _ints, [101])
    n_per = _convert(cfg, "freefermion", "periodic_values", _ints, [])
    t_f = _convert(cfg, "freefermion", "t_f", float, 25.0)
    dt = _convert(cfg, "freefermion", "dt", float, 0.25)
    for n in n_open + n_per:
        if n < 3 or (1 << MAX_STATE_BITS) < n:
            raise ResourceLimitError(f"chain of {n} sites outside supported range")
    times = np.arange(int(round(t_f / dt)) + 1) * dt
    rows: list[tuple] = []
    for boundary, ns in (("open", n_open), ("periodic", n_per)):
        for n in ns:
            curve = central_sz_curve(n, times, periodic=boundary == "periodic")
            rows.extend(
                (t, m, n, boundary) for t, m in zip(times, curve)
            )
            log(f"freefermion n={n} ({boundary}): {times.size} times")
    return ["t", "m_center", "n", "boundary"], rows, {}


def _run_lightcone(cfg: Resolved, log) -> tuple[list[str], list[tuple], dict]:
    l = _convert(cfg, "lightcone", "l", int)
    if l + 1 > MAX_STATE_BITS:
        raise ResourceLimitError(
            f"half-block l={l} needs states above the 2^{MAX_STATE_BITS} cap"
        )
    seed = _convert(cfg, "run", "seed", int, 0)
    base = LightconeConfig(
        l=l,
        t_f=_convert(cfg, "lightcone", "t_f", float),
        delta=_convert(cfg, "lightcone", "delta", float, 0.0),
        dt=_convert(cfg, "lightcone", "dt", float, 0.25),
        n_it=_convert(cfg, "lightcone", "n_it", int, 100),
        seed=seed,
        workers=_convert(cfg, "run", "workers", int, 1),
        cache_pairs=_convert(cfg, "lightcone", "cache_pairs", _bool, True),
        propagator=PropagatorConfig(
            series_order=_convert(cfg, "lightcone", "series_order", int, 40)
        ),
    )
    t_fs = _convert(cfg, "lightcone", "t_fs", _floats, [])
    rows: list[tuple] = []
    header = ["t", "mean", "rms", "stderr", "n_it", "l", "delta", "seed", "t_f"]
    if t_fs:
        table, estimates = union_sweep(base, t_fs)
        for est in estimates:
            log(
                f"lightcone t_f={est.metadata['t_f']:g}: {est.n_it} iterations, "
                f"{est.sampling_seconds:.1f}s"
            )
        rows.extend(
            (t, m, r, s, base.n_it, l, base.delta, seed, tf)
            for t, m, r, s, tf in zip(
                table["t"], table["mean"], table["rms"], table["stderr"], table["t_f"]
            )
        )
    else:
        est = run_sampling(base)
        log(f"lightcone t_f={base.t_f:g}: {est.n_it} iterations, {est.sampling_seconds:.1f}s")
        rows.extend(
            (t, m, r, s, est.n_it, l, base.delta, seed, base.t_f)
            for t, m, r, s in zip(est.times, est.mean, est.rms, est.stderr)
        )
    return header, rows, {}


def _run_circuits(cfg: Resolved, log) -> tuple[list[str], list[tuple], dict]:
    n = _convert(cfg, "circuits", "n", int, 12)
    if n > MAX_DENSE_BITS:
        raise ResourceLimitError(
            f"n={n} exceeds the 2^{MAX_DENSE_BITS} dense-operator cap"
        )
    t = _convert(cfg, "circuits", "t", float, 0.5)
    delta = _convert(cfg, "circuits", "delta", float, 1.0)
    rounds = _convert(cfg, "circuits", "rounds", int, 1)
    v_lr = _convert(cfg, "circuits", "v_lr", float, None)
    h = build_xxz(n, delta)
    rows: list[tuple] = []
    for l in _convert(cfg, "circuits", "block_l_values", _ints, []):
        circ = build_block_circuit(h, l, t)
        err = circuit_error(h, circ)
        vel = measure_circuit_velocity(circ, rounds)
        rows.append(("block", l, "", err, vel, n, t))
        log(f"block l={l}: error={err:.6g} velocity={vel:g}")
    pairs_entry = cfg.get("circuits", {}).get("corner_pairs")
    pairs = pairs_entry.text.split() if pairs_entry and pairs_entry.text else []
    for token in pairs:
        lp_text, _, l_text = token.partition(":")
        try:
            lp, l_val = int(lp_text), int(l_text)
        except ValueError:
            raise ConfigError(
                f"bad corner pair {token!r}; use l_prime:l",
                pairs_entry.line,
                pairs_entry.column,
            ) from None
        corner = CornerConfig(l_prime=lp, t=t, v_lr=v_lr, l=l_val)
        circ = build_corner_circuit(h, corner)
        err = circuit_error(h, circ)
        vel = measure_circuit_velocity(circ, rounds)
        rows.append(("corner", l_val, lp, err, vel, n, t))
        log(f"corner l'={lp} l={l_val}: error={err:.6g} velocity={vel:g}")
    return ["family", "l", "l_prime", "error", "velocity", "n", "t"], rows, {}


_QBP_NORMALIZATION = (
    "per site: chi_u = [lnZ(+h)-2lnZ+lnZ(-h)]/(h^2 N beta) with field term "
    "-h*sum_i Sz_i; specific_heat = beta^2 [lnZ(b+s)-2lnZ+lnZ(b-s)]/(s^2 N); "
    "chi_dimer/beta = [lnZ(+y)-2lnZ+lnZ(-y)]/(y^2 N beta^2) with bond term "
    "y*sum_i (-1)^i S_i.S_{i+1}"
)


def _run_qbp(cfg: Resolved, log) -> tuple[list[str], list[tuple], dict]:
    kind = _convert(cfg, "qbp", "model", str)
    n = _convert(cfg, "qbp", "n", int)
    l0 = _convert(cfg, "qbp", "l0", int)
    b_min = _convert(cfg, "qbp", "beta_min", float, 0.25)
    b_max = _convert(cfg, "qbp", "beta_max", float, 8.0)
    b_step = _convert(cfg, "qbp", "beta_step", float, 0.25)
    h_step = _convert(cfg, "qbp", "h_step", float, 1e-3)
    lambda_step = _convert(cfg, "qbp", "lambda_step", float, 1e-3)
    observables = (cfg["qbp"]["observables"].text or "ln_z").split()
    disorder_seed = _convert(cfg, "qbp", "disorder_seed", int, None)
    rng = None if disorder_seed is None else np.random.default_rng(disorder_seed)
    if kind == "faf":
        p = _convert(cfg, "qbp", "p", float, 0.0)
        model = build_faf(n, p=p, rng=rng)
        p_label: object = p
    elif kind == "frustrated":
        model = build_frustrated(n, rng=rng)
        p_label = ""
    else:
        raise ConfigError(f"unknown qbp model {kind!r}; use faf or frustrated")
    disorder = "pure" if disorder_seed is None else str(disorder_seed)
    known = {
        "ln_z": lambda b, table: sweep(model, l0, b, table=table),
        "chi_u": lambda b, table: uniform_susceptibility(
            model, l0, b, h_step=h_step, table=table
        ),
        "specific_heat": lambda b, table: specific_heat(
            model, l0, b, beta_step=b_step, table=table
        ),
        "chi_dimer": lambda b, table: dimer_susceptibility(
            model, l0, b, lambda_step=lambda_step, table=table
        ),
    }
    for obs in observables:
        if obs not in known:
            raise ConfigError(
                f"unknown observable {obs!r}; choose from {sorted(known)}"
            )
    n_steps = int(round((b_max - b_min) / b_step))
    betas = [b_min + k * b_step for k in range(n_steps + 1)]
    table = TransferTable()
    rows: list[tuple] = []
    for obs in observables:
        start = time.time()
        for beta in betas:
            if obs == "specific_heat" and beta < b_step:
                continue
            value = known[obs](beta, table)
            rows.append((beta, obs, value, l0, kind, p_label, n, disorder))
        log(f"qbp {obs}: {len(betas)} beta points in {time.time()-start:.1f}s")
    header = ["beta", "observable", "value", "l0", "model", "p", "n", "disorder"]
    return header, rows, {"qbp_normalization": _QBP_NORMALIZATION}


_PIPELINES = {
    "freefermion": _run_freefermion,
    "lightcone": _run_lightcone,
    "circuits": _run_circuits,
    "qbp": _run_qbp,
}


def run_experiment(
    config_path: str | Path | None = None,
    preset: str | None = None,
    overrides: tuple[str, ...] = (),
    seed: int | None = None,
    workers: int | None = None,
    out_dir: str | Path = ".",
) -> Path:
    """Resolve a configuration, run its pipeline, and write the artifact
    directory (curve.csv, manifest.txt, run.log).  Returns the directory."""
    text = None
    name = preset
    if config_path is not None:
        path = Path(config_path)
        text = path.read_text(encoding="utf-8")
        name = name or path.stem
    cfg = resolve_config(text, preset, overrides, seed, workers)
    pipeline = cfg["run"]["pipeline"].text
    if pipeline not in _PIPELINES:
        entry = cfg["run"]["pipeline"]
        raise ConfigError(
            f"unknown pipeline {pipeline!r}", entry.line, entry.column
        )
    name = cfg["run"].get("preset", ConfigValue(name or pipeline)).text
    log_lines: list[str] = []

    def log(msg: str) -> None:
        log_lines.append(msg)

    start = time.time()
    header, rows, extra_meta = _PIPELINES[pipeline](cfg, log)
    wall = time.time() - start
    target = Path(out_dir) / name
    target.mkdir(parents=True, exist_ok=True)
    write_csv(target / CSV_NAME, header, rows)
    manifest = ["[meta]"]
    manifest.append(f"preset = {cfg['run'].get('preset', ConfigValue('')).text}")
    manifest.append(f"pipeline = {pipeline}")
    manifest.append(f"code_version = {_code_version()}")
    manifest.append(f"csv = {CSV_NAME}")
    manifest.append(f"rows = {len(rows)}")
    manifest.append(f"wall_seconds = {wall:.3f}  # not covered by determinism")
    for key, value in sorted(extra_meta.items()):
        manifest.append(f"{key} = {value}")
    for sec in sorted(cfg):
        manifest.append(f"[{sec}]")
        for key in sorted(cfg[sec]):
            manifest.append(f"{key} = {cfg[sec][key].text}")
    (target / MANIFEST_NAME).write_text("\n".join(manifest) + "\n", encoding="utf-8")
    (target / LOG_NAME).write_text(
        "\n".join(log_lines) + f"\nfinished in {wall:.3f}s\n", encoding="utf-8"
    )
    return target


def _code_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:
        from . import __version__

        return __version__


@dataclass(frozen=True)
class EnvelopeFit:
    """Power-law-times-cosine fit y ~ t^(-exponent) * cos(omega t + theta0)."""

    exponent: float
    omega: float
    theta0: float
    n_extrema: int


def read_curve(path: str | Path) -> dict[str, np.ndarray | list[str]]:
    """Load a CSV written by this module into named columns."""
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = lines[0].split(",")
    cells = [line.split(",") for line in lines[1:]]
    out: dict[str, np.ndarray | list[str]] = {}
    for j, name in enumerate(header):
        column = [row[j] for row in cells]
        try:
            out[name] = np.array([float(x) for x in column])
        except ValueError:
            out[name] = column
    return out


def fit_envelope(
    curve: str | Path | tuple[np.ndarray, np.ndarray],
    window: tuple[float, float],
    column: str | None = None,
) -> EnvelopeFit:
    """Fit a decaying oscillation on a (t, y) curve inside ``window``.

    Extrema magnitudes give the decay exponent by log-log least squares;
    zero-crossing spacing gives the angular frequency; the first
    (parabola-refined) extremum fixes the phase.  Requires at least four
    extrema in the window."""
    if isinstance(curve, (str, Path)):
        table = read_curve(curve)
        t = np.asarray(table["t"], dtype=float)
        if column is None:
            column = next(
                name
                for name in ("mean", "m_center", "value")
                if name in table and not isinstance(table[name], list)
            )
        y = np.asarray(table[column], dtype=float)
    else:
        t, y = np.asarray(curve[0], dtype=float), np.asarray(curve[1], dtype=float)
    keep = (t >= window[0]) & (t <= window[1])
    t, y = t[keep], y[keep]
    if t.size < 5:
        raise AnalysisError(f"only {t.size} samples inside window {window}")
    ext_t, ext_y = [], []
    for i in range(1, t.size - 1):
        if (y[i] - y[i - 1]) * (y[i + 1] - y[i]) < 0:
            denom = y[i - 1] - 2 * y[i] + y[i + 1]
            shift = 0.0 if denom == 0 else 0.5 * (y[i - 1] - y[i + 1]) / denom
            dt_loc = 0.5 * (t[i + 1] - t[i - 1])
            ext_t.append(t[i] + shift * dt_loc)
            ext_y.append(y[i] - 0.25 * (y[i - 1] - y[i + 1]) * shift)
    if len(ext_t) < 4:
        raise AnalysisError(
            f"need at least 4 extrema in window {window}, found {len(ext_t)}"
        )
    ext_t_arr = np.array(ext_t)
    ext_y_arr = np.array(ext_y)
    slope, _ = np.polyfit(np.log(ext_t_arr), np.log(np.abs(ext_y_arr)), 1)
    crossings = []
    for i in range(t.size - 1):
        if y[i] == 0.0:
            crossings.append(t[i])
        elif y[i] * y[i + 1] < 0:
            crossings.append(t[i] - y[i] * (t[i + 1] - t[i]) / (y[i + 1] - y[i]))
    if len(crossings) >= 2:
        omega = np.pi / float(np.mean(np.diff(crossings)))
    else:
        omega = np.pi / float(np.mean(np.diff(ext_t_arr)))
    t1, y1 = float(ext_t_arr[0]), float(ext_y_arr[0])
    theta0 = (0.0 if y1 > 0 else np.pi) - omega * t1
    theta0 = float(np.mod(theta0, 2.0 * np.pi))
    return EnvelopeFit(float(-slope), float(omega), theta0, len(ext_t))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="spincone", description="spin-chain experiment harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a preset or config file")
    val_p = sub.add_parser("validate-config", help="resolve and print a config")
    for p in (run_p, val_p):
        p.add_argument("--config", help="path to a key=value config file")
        p.add_argument("--preset", help="named preset to start from")
        p.add_argument("--seed", type=int, help="run seed")
        p.add_argument("--workers", type=int, help="sampler worker count")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="override one resolved entry (repeatable)",
        )
    run_p.add_argument("--out-dir", default=".", help="artifact parent directory")

    sub.add_parser("list-presets", help="list preset names")

    fit_p = sub.add_parser("fit-envelope", help="fit a decaying oscillation")
    fit_p.add_argument("--csv", required=True, help="curve file with a t column")
    fit_p.add_argument(
        "--window", nargs=2, type=float, required=True, metavar=("LO", "HI")
    )
    fit_p.add_argument("--column", help="value column (default: first curve column)")

    args = parser.parse_args(argv)
    try:
        if args.command == "list-presets":
            for name in sorted(PRESETS):
                print(f"{name}: {PRESET_SUMMARIES[name]}")
            return 0
        if args.command == "validate-config":
            text = Path(args.config).read_text(encoding="utf-8") if args.config else None
            cfg = resolve_config(
                text, args.preset, tuple(args.override), args.seed, args.workers
            )
            for sec in sorted(cfg):
                print(f"[{sec}]")
                for key in sorted(cfg[sec]):
                    print(f"{key} = {cfg[sec][key].text}")
            return 0
        if args.command == "fit-envelope":
            fit = fit_envelope(args.csv, tuple(args.window), args.column)
            print(f"exponent = {fit.exponent:.6g}")
            print(f"omega = {fit.omega:.6g}")
            print(f"theta0 = {fit.theta0:.6g}")
            return 0
        target = run_experiment(
            args.config,
            args.preset,
            tuple(args.override),
            args.seed,
            args.workers,
            args.out_dir,
        )
        print(target)
        return 0
    except ConfigError as exc:
        print(f"config error (line {exc.line}, column {exc.column}): {exc}", file=sys.stderr)
        return 2
    except ResourceLimitError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return 3
    except PositivityError as exc:
        print(f"thermal sweep broke down at site {exc.site}: {exc}", file=sys.stderr)
        return 4
    except OverflowError as exc:
        print(f"thermal sweep overflow: {exc}", file=sys.stderr)
        return 4
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
