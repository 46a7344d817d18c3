"""Command-line experiment runner: ``declab bloch|zeno|smatrix|gravity|squid``.

Each subcommand resolves a configuration from its defaults, an optional
``--config`` file and per-key flags (values parsed as JSON), in that order
of precedence. The resolved configuration is embedded in every output file
(``# config: {...}`` in CSV, a ``"config"`` key in JSON) and such a file can
be passed back as ``--config`` to reproduce the run.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bloch, gravity, smatrix, squid, zeno
from .errors import DeclabError

REQUIRED = object()

SCHEMAS: dict[str, dict] = {
    "bloch": {"p0": REQUIRED, "V": REQUIRED, "D": REQUIRED, "t_end": REQUIRED, "dt": REQUIRED},
    "zeno": {"D_values": REQUIRED, "V": 1.0},
    "smatrix": {"s1": REQUIRED, "s2": REQUIRED, "incoming": REQUIRED, "flux": 1.0},
    "gravity": {
        "mode": "scan",
        "delta_alpha": [1e-4, 2e-4, 4e-4, 8e-4],
        "l_max": [1.0],
        "b_min": 0.0,
        "flux": 1.0,
        "b": None,
        "threshold": 1.0,
    },
    "squid": {
        "beta": 1.19,
        "inductance_L": 400e-12,
        "capacitance_C": 0.1e-12,
        "n_levels": 8,
        "inverse_d": 5000.0,
        "t_sweep_factors": [0.1, 0.5, 1.0, 2.0, 5.0],
        "x_start": squid.SweepProtocol.x_start,
        "x_end": squid.SweepProtocol.x_end,
        "n_trajectories": 200,
        "noise_amplitude": None,
        "noise_dt": 1.0,
        "per_trajectory": False,
    },
}

LONG_RUN_INVERSE_D = 39000.0


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config


def _read_config_file(path: str) -> dict:
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("#"):
        for line in text.splitlines():
            if line.startswith("# config: "):
                return json.loads(line[len("# config: ") :])
        raise UsageError(f"{path}: no embedded '# config:' line")
    data = json.loads(text)
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    if isinstance(data.get("config"), dict):
        return data["config"]
    return data


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    schema = SCHEMAS[command]
    cfg = {k: v for k, v in schema.items()}
    cfg["seed"] = 0
    if args.config:
        try:
            loaded = _read_config_file(args.config)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
    for key in schema:
        raw = getattr(args, "opt_" + key)
        if raw is not None:
            try:
                cfg[key] = json.loads(raw)
            except json.JSONDecodeError:
                cfg[key] = raw
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "long_run", False):
        cfg["inverse_d"] = LONG_RUN_INVERSE_D
    missing = [k for k, v in cfg.items() if v is REQUIRED]
    if missing:
        raise UsageError(f"missing config fields: {', '.join(missing)}")
    return cfg


def _dump(cfg: dict) -> str:
    return json.dumps(cfg, separators=(", ", ": "))


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".15g")


def _write_csv(path: Path, cfg: dict, header: list[str], rows, notes=()) -> None:
    with path.open("w", newline="") as fh:
        fh.write(f"# config: {_dump(cfg)}\n")
        for note in notes:
            fh.write(f"# {note}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _vec(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n,):
        raise UsageError(f"{name} must have {n} components")
    return arr


def _complex_array(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape[-1:] != (2,):
        raise UsageError(f"{name} entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


# ---------------------------------------------------------------- runners


def run_bloch(cfg: dict, out: Path) -> Path:
    p0 = _vec(cfg["p0"], 3, "p0")
    v = _vec(cfg["V"], 3, "V")
    series = bloch.with_diagnostics(
        bloch.evolve(p0, v, float(cfg["D"]), float(cfg["t_end"]), float(cfg["dt"]))
    )
    path = out / "bloch.csv"
    with path.open("w", newline="") as fh:
        series.write_csv(fh, comments=[f"config: {_dump(cfg)}"])
    return path


def run_zeno(cfg: dict, out: Path) -> Path:
    d_values = cfg["D_values"]
    if not isinstance(d_values, list) or not d_values:
        raise UsageError("D_values must be a non-empty list")
    rows = zeno.zeno_scan([float(d) for d in d_values], float(cfg["V"]))
    path = out / "zeno.csv"
    header = ["D", "V", "fitted_rate", "predicted_rate", "exact_rate", "residual", "rel_error", "flag"]
    _write_csv(path, cfg, header, rows)
    return path


def run_smatrix(cfg: dict, out: Path) -> Path:
    s1 = _complex_array(cfg["s1"], "s1")
    s2 = _complex_array(cfg["s2"], "s2")
    inc = _complex_array(cfg["incoming"], "incoming")
    flux = float(cfg["flux"])
    pair = smatrix.ScatteringPair(s1, s2, inc, flux)
    check = smatrix.verify_half_rate_limit(s2, inc, flux)
    same = smatrix.decoherence_rate(smatrix.ScatteringPair(s1, s1, inc, flux))
    payload = {
        "command": "smatrix",
        "config": cfg,
        "D": smatrix.decoherence_rate(pair),
        "energy_shift": smatrix.energy_shift(pair),
        "energy_shift_convention": "flux * Im<i|(1 - S1^dag S2)|i>",
        "limits": {
            "D_identical": same,
            "half_rate": {
                "D_with_S1_identity": check.d,
                "half_scattering_rate_S2": check.half_rate,
                "difference": check.difference,
            },
        },
    }
    path = out / "smatrix.json"
    _write_json(path, payload)
    return path


def run_gravity(cfg: dict, out: Path) -> Path:
    mode = cfg["mode"]
    if mode == "galaxy":
        if cfg["b"] is None:
            raise UsageError("galaxy mode needs b")
        da = cfg["delta_alpha"]
        da = float(da[0] if isinstance(da, list) else da)
        lm = cfg["l_max"]
        lm = float(lm[0] if isinstance(lm, list) else lm)
        verdict = gravity.galaxy_decoherence(da, float(cfg["b"]), lm, float(cfg["threshold"]))
        payload = {
            "command": "gravity",
            "config": cfg,
            "delta_phase_shift": verdict.delta_phase_shift,
            "phase_spread": 2.0 * verdict.delta_phase_shift,
            "decohered": verdict.decohered,
        }
        path = out / "galaxy.json"
        _write_json(path, payload)
        return path
    if mode != "scan":
        raise UsageError(f"unknown gravity mode {mode!r}")
    das = cfg["delta_alpha"] if isinstance(cfg["delta_alpha"], list) else [cfg["delta_alpha"]]
    lms = cfg["l_max"] if isinstance(cfg["l_max"], list) else [cfg["l_max"]]
    flux = float(cfg["flux"])
    rows = []
    for lm in lms:
        geom = gravity.ImpactGeometry(float(lm), float(cfg["b_min"]))
        for da in das:
            num = gravity.impact_rate(flux, 0.0, float(da), geom)
            est = gravity.small_delta_estimate(flux, float(da), float(lm))
            rows.append((float(da), float(lm), num, est, num / est if est else math.nan))
    path = out / "gravity.csv"
    notes = ["impact parameters integrated over [b_min, l_max]; b > l_max is dropped by the cutoff"]
    _write_csv(path, cfg, ["delta_alpha", "l_max", "D_numeric", "D_estimate", "ratio"], rows, notes)
    return path


def run_squid(cfg: dict, out: Path) -> Path:
    params = squid.SquidParams(
        float(cfg["beta"]), float(cfg["inductance_L"]), float(cfg["capacitance_C"]), int(cfg["n_levels"])
    )
    seed = int(cfg["seed"])
    inv_d = float(cfg["inverse_d"])
    if cfg["noise_amplitude"] is None:
        noise = squid.calibrate_noise(params, inv_d, seed=seed, noise_dt=float(cfg["noise_dt"]))
    else:
        noise = squid.NoiseModel(float(cfg["noise_amplitude"]), seed, float(cfg["noise_dt"]))
    t_sweeps = [float(f) * inv_d for f in cfg["t_sweep_factors"]]
    n_traj = int(cfg["n_trajectories"])
    results = squid.inversion_curve(
        params, t_sweeps, noise, n_traj, seed, float(cfg["x_start"]), float(cfg["x_end"])
    )
    notes = [
        f"g: {params.g:.10g}",
        f"time_unit_s: {params.time_unit:.10g}",
        f"noise_amplitude: {noise.amplitude!r}",
    ]
    rows = [(t, r.inversion_probability, r.uncertainty, r.n_trajectories, r.seed) for t, r in zip(t_sweeps, results)]
    path = out / "squid.csv"
    _write_csv(path, cfg, ["t_sweep", "inversion_probability", "uncertainty", "n_traj", "seed"], rows, notes)
    if cfg["per_trajectory"]:
        per = [
            (t, j, p)
            for t, r in zip(t_sweeps, results)
            for j, p in enumerate(r.per_trajectory)
        ]
        _write_csv(out / "squid_trajectories.csv", cfg, ["t_sweep", "trajectory", "reversed_probability"], per)
    return path


RUNNERS = {
    "bloch": run_bloch,
    "zeno": run_zeno,
    "smatrix": run_smatrix,
    "gravity": run_gravity,
    "squid": run_squid,
}

HELP = {
    "bloch": "integrate the damped Bloch equation, write t,px,py,pz,entropy,purity",
    "zeno": "fitted vs predicted strong-damping decay rates over a list of D",
    "smatrix": "decoherence rate and energy shift from two S-matrices",
    "gravity": "impact-parameter rate scan or galaxy phase-spread verdict",
    "squid": "noisy adiabatic inversion curve of the rf-SQUID double well",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="declab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", help="JSON config file or a previous output with embedded config")
        sp.add_argument("--seed", type=int, default=None, help="master random seed (default 0)")
        sp.add_argument("--out-dir", default=".", help="directory for output files")
        for key in schema:
            sp.add_argument(
                "--" + key.replace("_", "-"), dest="opt_" + key, metavar="JSON", help=f"override '{key}'"
            )
        if name == "squid":
            sp.add_argument(
                "--long-run",
                action="store_true",
                help=f"use 1/D = {LONG_RUN_INVERSE_D:g} time units (slow)",
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = RUNNERS[args.command](cfg, out)
    except DeclabError as exc:
        print(f"declab {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (UsageError, ValueError, TypeError, KeyError) as exc:
        print(f"declab {args.command}: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
