"""Command-line front end: phantoms, simulation, reconstruction, benchmarks.

Every run writes one JSON manifest next to its outputs with the fully
resolved parameter set, so any run can be replayed bit-identically (timing
fields aside). Parameter precedence: built-in defaults < preset < config
file (key=value lines) < explicit flags.

Exit codes: 0 success (including a controlled divergence stop),
2 argument/validation error, 3 I/O error.
"""

import argparse
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, bench, kernels
from .forward import (
    AcousticConfig,
    add_noise,
    build_freq_matrix,
    build_time_matrix,
    forward_project,
    read_matrix,
    read_signal,
    write_matrix,
    write_signal,
)
from .geometry import (
    make_grid,
    make_point_phantom,
    make_ring,
    make_vessel_phantom,
    read_image,
    write_image_csv,
    write_image_pgm,
)
from .recon import ReconConfig, back_project, iterative_reconstruct, objective, resolve_config

__all__ = ["main", "PRESETS", "argv_from_manifest", "read_manifest"]

PRESETS = {
    "desk32": dict(nx=32, ny=32, dx=1e-4, sensors=16, radius=5e-3, c=1500.0, dt=1e-7,
                   samples=64, freqs=64),
    "desk64": dict(nx=64, ny=64, dx=1e-4, sensors=32, radius=8e-3, c=1500.0, dt=1e-7,
                   samples=128, freqs=128),
    "paper127": dict(nx=127, ny=127, dx=1e-4, sensors=48, radius=1.4e-2, c=1500.0, dt=1.25e-7,
                     samples=128, freqs=128),
}


def _int_flag(s: str) -> int:
    v = float(s)  # accept scientific notation for integer flags
    if v != int(v):
        # ValueError so both argparse and the config-file path report it
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def _workers_flag(s: str) -> list[int]:
    workers = [int(float(tok)) for tok in str(s).split(",") if tok != ""]
    if not workers:
        raise ValueError(f"bad worker list {s!r}")
    return workers


def _bool_from_config(s):
    if isinstance(s, bool):
        return s
    return str(s).strip().lower() in ("1", "true", "yes", "on")


# name -> (parser type, default, help); used both for argparse and for the
# config-file/manifest round trip
_GLOBAL_OPTS = {
    "seed": (_int_flag, 0, "seed for phantoms, noise and benchmark data"),
    "workers": (_workers_flag, None, "worker count (comma list for bench matmul)"),
    "out_dir": (str, ".", "directory receiving all outputs"),
}

_GEOMETRY_OPTS = {
    "preset": (str, None, f"scene preset: {', '.join(PRESETS)}"),
    "nx": (_int_flag, 64, "grid pixels along x"),
    "ny": (_int_flag, 64, "grid pixels along y"),
    "dx": (float, 1e-4, "pixel pitch in meters"),
    "origin_x": (float, None, "x of pixel (0,0) center; default centers the grid"),
    "origin_y": (float, None, "y of pixel (0,0) center; default centers the grid"),
    "sensors": (_int_flag, 32, "transducer count on the ring"),
    "radius": (float, 8e-3, "ring radius in meters"),
    "c": (float, 1500.0, "sound speed in m/s"),
    "dt": (float, 1e-7, "time sample spacing in seconds"),
    "samples": (_int_flag, 128, "time samples per sensor (q_s)"),
    "freqs": (_int_flag, 128, "frequency samples per sensor (q_n)"),
}

_RECON_OPTS = {
    "alpha": (float, None, "L1 weight; default calibrates from the data"),
    "beta": (float, None, "TV weight; default 1e-2 * alpha"),
    "iterations": (_int_flag, 90, "iteration cap"),
    "step": (str, "auto", "step size or 'auto'"),
    "tv_epsilon": (float, 1e-3, "TV smoothing constant"),
    "nonneg": (_bool_from_config, False, "clamp iterates to nonnegative"),
    "tolerance": (float, 0.0, "relative objective-change stop threshold"),
}

_COMMAND_OPTS = {
    "phantom": {
        **_GLOBAL_OPTS,
        "kind": (str, "vessel", "point or vessel"),
        "nx": (_int_flag, 64, "grid pixels along x"),
        "ny": (_int_flag, 64, "grid pixels along y"),
        "dx": (float, 1e-4, "pixel pitch in meters"),
        "origin_x": (float, None, "x of pixel (0,0) center; default centers the grid"),
        "origin_y": (float, None, "y of pixel (0,0) center; default centers the grid"),
        "i": (_int_flag, 0, "point phantom pixel index i"),
        "j": (_int_flag, 0, "point phantom pixel index j"),
        "amplitude": (float, 1.0, "point phantom amplitude"),
        "branches": (_int_flag, 5, "vessel phantom branch count"),
        "out": (str, "phantom", "output base name"),
    },
    "simulate": {
        **_GLOBAL_OPTS,
        **_GEOMETRY_OPTS,
        "phantom": (str, None, "phantom image path (csv or pgm)"),
        "domain": (str, "time", "time or frequency"),
        "noise_sigma": (float, 0.0, "additive Gaussian noise level"),
        "save_matrix": (_bool_from_config, False, "also persist the measurement matrix"),
        "out": (str, "signal", "output base name"),
    },
    "reconstruct": {
        **_GLOBAL_OPTS,
        **_GEOMETRY_OPTS,
        **_RECON_OPTS,
        "signal": (str, None, "sensor data path (PACTSIG)"),
        "matrix": (str, None, "measurement matrix path (PACTMAT); else rebuilt from flags"),
        "method": (str, "ir", "bp or ir"),
        "out": (str, "recon", "output base name"),
    },
    "bench": {
        **_GLOBAL_OPTS,
        **_GEOMETRY_OPTS,
        **_RECON_OPTS,
        "subscenario": (str, None, "matmul, recon or profile"),
        "rows": (_int_flag, 512, "matmul output rows"),
        "inner": (_int_flag, 512, "matmul shared dimension"),
        "cols": (_int_flag, 512, "matmul output cols"),
        "reps": (_int_flag, 5, "timing repetitions"),
        "out": (str, "bench", "output base name"),
    },
}

_POSITIONAL = {"bench": "subscenario"}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pactkit",
        description="photoacoustic tomography simulation, reconstruction and benchmarks",
    )
    parser.add_argument("--version", action="version", version=f"pactkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in _COMMAND_OPTS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="key=value config file")
        for name, (typ, _default, help_) in opts.items():
            if name == _POSITIONAL.get(command):
                p.add_argument(name, nargs="?", default=None, help=help_)
            elif typ is _bool_from_config:
                p.add_argument(f"--{name.replace('_', '-')}", action="store_const",
                               const=True, default=None, help=help_)
            else:
                p.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None,
                               dest=name, help=help_)
    return parser


def _parse_config_file(path: str) -> dict:
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: bad config line {raw!r} (expected key=value)")
        key, _, val = line.partition("=")
        values[key.strip().replace("-", "_")] = val.strip()
    return values


def _resolve(command: str, args: argparse.Namespace) -> dict:
    opts = _COMMAND_OPTS[command]
    resolved = {name: default for name, (_t, default, _h) in opts.items()}

    file_values = _parse_config_file(args.config) if args.config else {}
    # explicit --preset beats a preset named in the config file
    preset_name = getattr(args, "preset", None) or file_values.get("preset")

    if "preset" in opts and preset_name:
        if preset_name not in PRESETS:
            raise ValueError(f"unknown preset {preset_name!r}; choose from {', '.join(PRESETS)}")
        resolved.update(PRESETS[preset_name])
        resolved["preset"] = preset_name

    for key, val in file_values.items():
        if key not in opts:
            raise ValueError(f"unknown config key {key!r} for command {command!r}")
        typ = opts[key][0]
        resolved[key] = typ(val)

    for name in opts:
        given = getattr(args, name, None)
        if given is not None:
            resolved[name] = given

    if resolved.get("workers") is None:
        resolved["workers"] = [kernels.hardware_worker_count()]
    if resolved.get("origin_x") is None and "nx" in resolved:
        resolved["origin_x"] = -(resolved["nx"] - 1) / 2 * resolved["dx"]
    if resolved.get("origin_y") is None and "ny" in resolved:
        resolved["origin_y"] = -(resolved["ny"] - 1) / 2 * resolved["dx"]
    return resolved


def _choice(resolved: dict, key: str, allowed: tuple[str, ...]):
    if resolved.get(key) not in allowed:
        raise ValueError(f"{key} must be one of {allowed}, got {resolved.get(key)!r}")


def _write_manifest(command: str, resolved: dict, artifacts: list[str], results: dict,
                    out_dir: Path) -> Path:
    manifest = {
        "command": command,
        "parameters": {k: v for k, v in sorted(resolved.items())},
        "seed": resolved.get("seed", 0),
        "artifact_paths": artifacts,
        "tool_version": __version__,
        "results": results,
    }
    path = out_dir / f"{resolved['out']}.manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def argv_from_manifest(manifest: dict, out_dir: str | None = None) -> list[str]:
    """Rebuild the argument vector that reproduces a recorded run."""
    command = manifest["command"]
    opts = _COMMAND_OPTS[command]
    argv = [command]
    positional = _POSITIONAL.get(command)
    params = dict(manifest["parameters"])
    if out_dir is not None:
        params["out_dir"] = out_dir
    if positional and params.get(positional) is not None:
        argv.append(str(params.pop(positional)))
    for key, value in sorted(params.items()):
        if value is None or key not in opts:
            continue
        flag = f"--{key.replace('_', '-')}"
        if opts[key][0] is _bool_from_config:
            if value:
                argv.append(flag)
        elif key == "workers":
            argv.extend([flag, ",".join(str(w) for w in value)])
        else:
            argv.extend([flag, str(value)])
    return argv


def _grid_from(resolved: dict):
    return make_grid(resolved["nx"], resolved["ny"], resolved["dx"],
                     (resolved["origin_x"], resolved["origin_y"]))


def _acoustic_from(resolved: dict) -> AcousticConfig:
    return AcousticConfig(c=resolved["c"], dt=resolved["dt"],
                          q_s=resolved["samples"], q_n=resolved["freqs"])


def _recon_config_from(resolved: dict) -> ReconConfig:
    step = resolved["step"]
    if step != "auto":
        step = float(step)
    return ReconConfig(
        alpha=resolved["alpha"],
        beta=resolved["beta"],
        iterations=resolved["iterations"],
        step=step,
        tv_epsilon=resolved["tv_epsilon"],
        nonneg=resolved["nonneg"],
        tolerance=resolved["tolerance"],
    )


def _emit_warnings(caught):
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)


def _cmd_phantom(resolved: dict, out_dir: Path):
    _choice(resolved, "kind", ("point", "vessel"))
    grid = _grid_from(resolved)
    if resolved["kind"] == "point":
        fld = make_point_phantom(grid, resolved["i"], resolved["j"], resolved["amplitude"])
    else:
        fld = make_vessel_phantom(grid, resolved["seed"], resolved["branches"])
    base = resolved["out"]
    write_image_csv(fld, out_dir / f"{base}.csv")
    write_image_pgm(fld, out_dir / f"{base}.pgm")
    nonzero = int(np.count_nonzero(fld.values))
    return [f"{base}.csv", f"{base}.pgm"], {
        "nonzero_pixels": nonzero,
        "fill_fraction": nonzero / grid.size,
    }


def _cmd_simulate(resolved: dict, out_dir: Path):
    _choice(resolved, "domain", ("time", "frequency"))
    if not resolved.get("phantom"):
        raise ValueError("simulate requires --phantom")
    phantom = read_image(resolved["phantom"], dx=resolved["dx"],
                         origin=(resolved["origin_x"], resolved["origin_y"]))
    if (phantom.grid.nx, phantom.grid.ny) != (resolved["nx"], resolved["ny"]):
        raise ValueError(
            f"phantom is {phantom.grid.nx}x{phantom.grid.ny} but flags specify "
            f"{resolved['nx']}x{resolved['ny']}"
        )
    ring = make_ring(resolved["sensors"], resolved["radius"], (0.0, 0.0), phantom.grid)
    acoustic = _acoustic_from(resolved)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if resolved["domain"] == "time":
            K = build_time_matrix(phantom.grid, ring, acoustic)
        else:
            K = build_freq_matrix(phantom.grid, ring, acoustic)
    _emit_warnings(caught)
    y = forward_project(K, phantom)
    if resolved["noise_sigma"] > 0:
        y = add_noise(y, resolved["noise_sigma"], resolved["seed"])
    base = resolved["out"]
    artifacts = [f"{base}.sig"]
    write_signal(y, out_dir / f"{base}.sig")
    if resolved["save_matrix"]:
        write_matrix(K, out_dir / f"{base}.mat")
        artifacts.append(f"{base}.mat")
    return artifacts, {
        "matrix_shape": [K.rows, K.cols],
        "truncated_pairs": K.provenance.get("truncated_pairs", 0),
    }


def _cmd_reconstruct(resolved: dict, out_dir: Path):
    _choice(resolved, "method", ("bp", "ir"))
    if not resolved.get("signal"):
        raise ValueError("reconstruct requires --signal")
    y = read_signal(resolved["signal"])
    grid = _grid_from(resolved)
    if resolved.get("matrix"):
        K = read_matrix(resolved["matrix"])
    else:
        ring = make_ring(resolved["sensors"], resolved["radius"], (0.0, 0.0), grid)
        acoustic = _acoustic_from(resolved)
        if y.domain == "time":
            K = build_time_matrix(grid, ring, acoustic)
        else:
            K = build_freq_matrix(grid, ring, acoustic)
    pool = kernels.WorkerPool(resolved["workers"][0])
    base = resolved["out"]
    artifacts = [f"{base}.csv", f"{base}.pgm"]
    results: dict = {"method": resolved["method"]}

    t0 = time.perf_counter()
    if resolved["method"] == "bp":
        image = back_project(K, y, grid=grid, pool=pool)
        wall = time.perf_counter() - t0
        final_f = objective(K, image, y, _recon_config_from(resolved), pool=pool).total
    else:
        config = resolve_config(_recon_config_from(resolved), K, y)
        res = iterative_reconstruct(K, y, config, grid=grid, pool=pool)
        wall = time.perf_counter() - t0
        image = res.image
        final_f = float(res.objective_history[-1]) if res.iterations_run else float("nan")
        history = np.column_stack([
            np.arange(1, res.iterations_run + 1),
            res.objective_history,
            res.data_term_history,
            res.l1_history,
            res.tv_history,
        ])
        np.savetxt(out_dir / f"{base}.history.csv", history, delimiter=",",
                   header="iter,F,data,l1,tv", comments="", fmt="%.17g")
        artifacts.append(f"{base}.history.csv")
        results.update({
            "stopped_by": res.stopped_by,
            "iterations_run": res.iterations_run,
            "alpha": res.alpha_used,
            "beta": res.beta_used,
            "step": res.step_used,
        })
    write_image_csv(image, out_dir / f"{base}.csv")
    write_image_pgm(image, out_dir / f"{base}.pgm")
    results["final_objective"] = final_f if math.isfinite(final_f) else None
    results["wall_seconds"] = wall
    print(f"final objective {final_f:.6e}  wall {wall:.3f} s")
    return artifacts, results


def _cmd_bench(resolved: dict, out_dir: Path):
    _choice(resolved, "subscenario", ("matmul", "recon", "profile"))
    sub = resolved["subscenario"]
    if sub == "matmul":
        report = bench.bench_matmul(resolved["rows"], resolved["inner"], resolved["cols"],
                                    workers=resolved["workers"], reps=resolved["reps"],
                                    seed=resolved["seed"])
    elif sub == "recon":
        report = bench.bench_recon(resolved["nx"], resolved["sensors"], resolved["samples"],
                                   _recon_config_from(resolved), reps=resolved["reps"],
                                   seed=resolved["seed"], workers=resolved["workers"][0])
    else:
        report = bench.profile_breakdown(resolved["nx"], resolved["sensors"],
                                         resolved["samples"], _recon_config_from(resolved),
                                         seed=resolved["seed"],
                                         workers=resolved["workers"][0])
    base = resolved["out"]
    (out_dir / f"{base}.json").write_text(report.to_json() + "\n")
    (out_dir / f"{base}.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return [f"{base}.json", f"{base}.txt"], {
        "scenario": report.scenario,
        "verification": report.verification_ok(),
        "checksums": {e.label: e.checksum for e in report.entries},
    }


_RUNNERS = {
    "phantom": _cmd_phantom,
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse reports its own message
        return int(e.code or 0)
    try:
        resolved = _resolve(args.command, args)
        out_dir = Path(resolved["out_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        artifacts, results = _RUNNERS[args.command](resolved, out_dir)
        _write_manifest(args.command, resolved, artifacts, results, out_dir)
        return 0
    except (ValueError, IndexError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
