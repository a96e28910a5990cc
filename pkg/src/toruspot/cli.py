"""Batch command line interface.

Every subcommand reads an optional JSON config (``--config``), applies the
defaults below, writes its artifacts into ``--out`` and prints a JSON summary.
Exit codes: 0 ok, 1 input rejected by a module precondition, 2 usage or
malformed input.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .io import config_hash, to_json, write_csv, write_json

log = logging.getLogger("toruspot")

EXIT_OK, EXIT_INPUT, EXIT_ERROR = 0, 1, 2

FLOW_KEYS = ("h", "T", "integrator", "potential", "d", "s", "eps", "c0", "n", "record_every", "energy_tol")

DEFAULTS = {
    "dinfty": {"rho1": None, "rho2": None, "expected": None, "to_uniform": False, "N": None},
    "discrepancy": {"density": None, "family": "bump", "eps": 0.25, "amplitude": 0.5, "M": 2, "N": 200,
                    "d": 1},
    "potential": {"density": None, "family": "laplacian", "eps": 0.125, "amplitude": 0.5, "M": 2, "N": 256, "d": 1,
                  "s": 0.5, "K": None, "p": [1, 2, "inf"]},
    "energy": {"density": None, "particles": None, "family": "cos", "sweep": [0.1, 0.2, 0.4, 0.8],
               "d": 1, "s": 0.0, "N": 128, "N_dinf": None, "M": 2},
    "scaling": {"d": 1, "p": 2, "s": 0.5, "eps": [2.0 ** -k for k in range(4, 8)], "M": 2,
                "cells_per_eps": 16, "with_dinfty": True, "jobs": 1},
    "flow": {"panels": None, "h": 5e-3, "T": 10.0, "integrator": "rk4", "potential": "pure", "d": 2,
             "s": -1.0, "eps": 0.1, "c0": 50.0, "n": 256, "record_every": 50, "energy_tol": 1e-8,
             "snapshots": True},
    "verify": {"scale": 1.0, "suites": None, "calibrate": False, "calibration_count": 500,
               "write_shipped": False},
    "oracle": {"count": 20, "n_max": 7, "dims": [1, 2]},
}

FULL_OVERRIDES = {
    "flow": {"n": 1000},
    "verify": {"scale": 5.0},
    "oracle": {"count": 200},
}


class ConfigError(Exception):
    """Malformed configuration (exit code 2)."""


def _number(x, name):
    if isinstance(x, str) and x.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{name} must be a number, got {x!r}")
    return float(x)


@dataclass
class ExperimentConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    out: Path = Path("results")
    full: bool = False

    @classmethod
    def build(cls, command: str, raw: dict | None = None, seed=None, out=None, full=False) -> "ExperimentConfig":
        if command not in DEFAULTS:
            raise ConfigError(f"unknown command {command!r}")
        raw = dict(raw or {})
        raw.pop("command", None)
        if "seed" in raw:
            cfg_seed = raw.pop("seed")
            seed = cfg_seed if seed is None else seed
        unknown = set(raw) - set(DEFAULTS[command])
        if unknown:
            raise ConfigError(f"unknown keys for {command}: {sorted(unknown)}")
        params = dict(DEFAULTS[command])
        if full:
            params.update(FULL_OVERRIDES.get(command, {}))
        params.update(raw)
        if seed is not None:
            if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
        return cls(command, params, seed, Path(out) if out else Path("results"), full)

    def hash(self) -> str:
        return config_hash({"command": self.command, "params": self.params, "seed": self.seed,
                            "version": __version__})

    def envelope(self, **payload) -> dict:
        """Result document carrying the config and its hash."""
        return {"command": self.command, "config_hash": self.hash(), "seed": self.seed,
                "params": self.params, **payload}


# ---------------------------------------------------------------------------
# inputs


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return obj


def _atoms(obj, name):
    from .measures import WeightedAtoms

    if not isinstance(obj, dict) or "points" not in obj or "weights" not in obj:
        raise ConfigError(f"{name} needs 'points' and 'weights'")
    try:
        pts = np.asarray(obj["points"], dtype=float)
        w = np.asarray(obj["weights"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: non-numeric data") from exc
    return WeightedAtoms(pts, w)


def _density(p):
    """GridDensity from an inline/file density or a named family."""
    from . import measures
    from .experiments import cosine_family
    from .measures import GridDensity

    src = p.get("density")
    if src is not None:
        obj = _read_json(src) if isinstance(src, str) else src
        try:
            return GridDensity.from_json(obj)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad density: {exc}") from exc
    fam, N, d = p["family"], int(p["N"]), int(p["d"])
    if fam == "bump":
        return measures.bump_family(_number(p["eps"], "eps"), N, d)
    if fam == "laplacian":
        return measures.laplacian_family(_number(p["eps"], "eps"), int(p["M"]), N, d)
    if fam == "uniform":
        return measures.uniform_density(N, d)
    if fam == "cos":
        return cosine_family(_number(p.get("amplitude", 0.5), "amplitude"), N, d)
    raise ConfigError(f"unknown family {fam!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_dinfty(cfg: ExperimentConfig) -> dict:
    """d-infinity distance between two measures, or from one measure to uniform."""
    from . import dinfty

    p = cfg.params
    rho1 = _atoms(p["rho1"], "rho1")
    if p["to_uniform"]:
        enc = dinfty.dinfty_to_uniform(rho1, p["N"])
        result = cfg.envelope(enclosure=enc.to_json())
    else:
        rho2 = _atoms(p["rho2"], "rho2")
        res = dinfty.dinfty_atomic(rho1, rho2)
        result = cfg.envelope(result=res.to_json())
        if p["expected"] is not None:
            result["matches_expected"] = bool(res.value == float(p["expected"]))
    write_json(cfg.out / "dinfty.json", result)
    return result


def cmd_discrepancy(cfg: ExperimentConfig) -> dict:
    """Interval discrepancy of a 1D grid density."""
    from .dinfty import discrepancy_1d

    rho = _density(cfg.params)
    D = discrepancy_1d(rho)
    result = cfg.envelope(discrepancy=D, dinfty=0.5 * D, N=rho.N)
    write_json(cfg.out / "discrepancy.json", result)
    return result


def cmd_potential(cfg: ExperimentConfig) -> dict:
    """Riesz potential field of a density with its L^p norms."""
    from . import plotting
    from .riesz import lp_norm, potential_field

    p = cfg.params
    rho = _density(p)
    V = potential_field(_number(p["s"], "s"), rho, p["K"])
    norms = {str(q): lp_norm(V, _number(q, "p")) for q in p["p"]}
    cfg.out.mkdir(parents=True, exist_ok=True)
    centers = rho.grid.centers().reshape(-1, rho.d)
    write_csv(cfg.out / "potential.csv", [f"x{i + 1}" for i in range(rho.d)] + ["value"],
              [(*c, v) for c, v in zip(centers.tolist(), V.values.ravel())])
    plotting.plot_field(V, cfg.out / "potential.svg", title=f"s={p['s']}")
    result = cfg.envelope(norms=norms, mean=V.mean())
    write_json(cfg.out / "potential.json", result)
    return result


def cmd_energy(cfg: ExperimentConfig) -> dict:
    """Interaction energy of particles or a density, or an energy/d-infinity sweep."""
    from . import plotting
    from .energy import EwaldInteraction, energy_discrete, energy_spectral
    from .experiments import stability_experiment

    p = cfg.params
    d, s = int(p["d"]), _number(p["s"], "s")
    if p["particles"] is not None:
        src = p["particles"]
        X = np.asarray(_read_json(src)["positions"] if isinstance(src, str) else src, dtype=float)
        E = energy_discrete(X, EwaldInteraction(X.shape[1] if X.ndim > 1 else 1, s))
        result = cfg.envelope(energy_discrete=E, n=len(X))
    elif p["density"] is not None:
        result = cfg.envelope(energy_spectral=energy_spectral(_density(p), s))
    else:
        res = stability_experiment(p["family"], [_number(x, "sweep") for x in p["sweep"]], d, s,
                                   int(p["N"]), p["N_dinf"], int(p["M"]))
        cfg.out.mkdir(parents=True, exist_ok=True)
        write_csv(cfg.out / "stability.csv", ["param", "energy", "dinf_lo", "dinf_hi", "ratio"],
                  [(r.param, r.energy, r.lo, r.hi, r.ratio) for r in res.rows])
        plotting.plot_stability(res, cfg.out / "stability.svg")
        result = cfg.envelope(gamma=res.gamma, constant=res.constant, rows=[asdict(r) for r in res.rows])
    write_json(cfg.out / "energy.json", result)
    return result


def _scaling_point(args):
    from .experiments import scaling_experiment

    d, p, s, eps, M, cpe, with_d = args
    return scaling_experiment(d, p, s, [eps], M, cpe, with_d).rows[0]


def cmd_scaling(cfg: ExperimentConfig) -> dict:
    """Norm and d-infinity scaling against eps for the bump families."""
    from . import plotting
    from .experiments import ScalingResult

    p = cfg.params
    d, pp, s = int(p["d"]), _number(p["p"], "p"), _number(p["s"], "s")
    eps_list = [_number(e, "eps") for e in p["eps"]]
    if not eps_list:
        raise ConfigError("eps sweep is empty")
    jobs = [(d, pp, s, e, int(p["M"]), int(p["cells_per_eps"]), bool(p["with_dinfty"])) for e in eps_list]
    if int(p["jobs"]) > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=int(p["jobs"])) as ex:
            rows = list(ex.map(_scaling_point, jobs))
    else:
        rows = [_scaling_point(j) for j in jobs]
    res = ScalingResult(d, pp, s, int(p["M"]), rows)
    flags = []
    if len(rows) < 2:
        flags.append("slope undefined: fewer than two eps values")
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_csv(cfg.out / "scaling.csv", ["eps", "N", "norm", "dinfty_lo", "witness"],
              [(r.eps, r.N, r.norm, r.dinfty_lo, r.witness) for r in rows])
    plotting.plot_scaling(res, cfg.out / "scaling.svg")
    ns, ds = res.norm_slope, res.dinfty_slope
    result = cfg.envelope(target=res.target, norm_slope=None if math.isnan(ns) else ns,
                          dinfty_slope=None if math.isnan(ds) else ds, flags=flags, rows=res.table())
    write_json(cfg.out / "scaling.json", result)
    return result


def _flow_panel(args):
    from . import energy, plotting

    fc, name, out, snapshots = args
    res = energy.run_flow(fc)
    X0, X = res.initial.positions, res.final.positions
    base = Path(out) / name
    rows = [(t, *pos.ravel(), E) for (t, pos), E in zip(res.snapshots, res.energies)]
    header = ["t"] + [f"x{i}_{a + 1}" for i in range(fc.n) for a in range(fc.d)] + ["energy"]
    write_csv(f"{base}_trajectory.csv", header, rows)
    summary = {"name": name, "config": asdict(fc), "aborted": res.aborted, "t_final": res.final.t,
               "energy_initial": res.energies[0], "energy_final": res.energies[-1],
               "energy_slope": res.energy_slope(), "nn": res.nn_stats()}
    if fc.potential == "perturbed":
        cl = res.clusters()
        summary["clusters"] = {"link": 2 * fc.eps, "count": cl.count, "mean_radius": cl.mean_radius}
        labels = cl.labels
    else:
        labels = None
    if snapshots and fc.d == 2:
        plotting.plot_particles(X0, f"{base}_initial.svg", title=f"{name} t=0")
        plotting.plot_particles(X, f"{base}_final.svg", title=f"{name} t={res.final.t:g}", labels=labels)
        plotting.plot_energy(res.times, res.energies, f"{base}_energy.svg", title=name)
    return summary


def cmd_flow(cfg: ExperimentConfig) -> dict:
    """Particle gradient flow, one run per panel."""
    from .energy import FlowConfig

    p = cfg.params
    seed = cfg.seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % 2**63)
        log.warning("no seed given; generated seed %d", seed)
        cfg = replace(cfg, seed=seed)
    base = {k: p[k] for k in FLOW_KEYS}
    panels = p["panels"]
    if panels is None:
        panels = [{"name": "run"}]
    elif panels == "fig1":
        panels = json.loads(resources.files("toruspot").joinpath("data", "fig1_recipe.json").read_text())["panels"]
    elif isinstance(panels, str):
        panels = _read_json(panels)["panels"]
    cfg.out.mkdir(parents=True, exist_ok=True)
    args = []
    for panel in panels:
        panel = dict(panel)
        name = str(panel.pop("name", f"panel{len(args)}"))
        bad = set(panel) - set(FLOW_KEYS)
        if bad:
            raise ConfigError(f"unknown panel keys: {sorted(bad)}")
        fc = FlowConfig(**{**base, **panel}, seed=seed)
        args.append((fc, name, str(cfg.out), bool(p["snapshots"])))
    summaries = [_flow_panel(a) for a in args]
    result = cfg.envelope(panels=summaries)
    write_json(cfg.out / "flow.json", result)
    return result


def cmd_verify(cfg: ExperimentConfig) -> dict:
    """Run the invariant suites, optionally recalibrating the set diagnostics."""
    from . import verify

    p = cfg.params
    seed = 0 if cfg.seed is None else cfg.seed
    payload = {}
    if p["calibrate"]:
        cal = verify.calibrate(int(p["calibration_count"]), seed)
        verify.write_calibration(cal, cfg.out / verify.CALIBRATION_FILE)
        if p["write_shipped"]:
            verify.write_calibration(cal)
        payload["calibration"] = cal
    else:
        cal = verify.load_calibration()
    results = verify.run_suites(seed, float(p["scale"]), p["suites"], calibration=cal)
    for r in results:
        log.info(r.line())
    result = cfg.envelope(**payload, **verify.report(results))
    write_json(cfg.out / "verify.json", result)
    return result


def cmd_oracle(cfg: ExperimentConfig) -> dict:
    """Write d-infinity fixtures whose expected values come from exhaustive search."""
    from .dinfty import bottleneck_bruteforce

    p = cfg.params
    rng = np.random.default_rng(0 if cfg.seed is None else cfg.seed)
    fixtures = {
        "antipodal": ([[0.0]], [[0.5]], 0.5),
        "self": ([[0.1, 0.2], [-0.3, 0.4]], [[0.1, 0.2], [-0.3, 0.4]], 0.0),
    }
    for i in range(int(p["count"])):
        n = int(rng.integers(1, int(p["n_max"]) + 1))
        d = int(rng.choice(p["dims"]))
        X, Y = rng.random((n, d)) - 0.5, rng.random((n, d)) - 0.5
        fixtures[f"perm{i:04d}"] = (X.tolist(), Y.tolist(), bottleneck_bruteforce(X, Y))
    for name, (X, Y, val) in fixtures.items():
        n, m = len(X), len(Y)
        write_json(cfg.out / f"{name}.json", {
            "rho1": {"points": X, "weights": [1.0 / n] * n},
            "rho2": {"points": Y, "weights": [1.0 / m] * m},
            "expected": val,
        })
    result = cfg.envelope(fixtures=sorted(fixtures))
    write_json(cfg.out / "oracle_index.json", result)
    return result


COMMANDS = {
    "dinfty": cmd_dinfty,
    "discrepancy": cmd_discrepancy,
    "potential": cmd_potential,
    "energy": cmd_energy,
    "scaling": cmd_scaling,
    "flow": cmd_flow,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
}


def _exit_code(cmd: str, result: dict) -> int:
    if cmd == "verify" and not result.get("passed", False):
        return EXIT_INPUT
    if cmd == "dinfty" and result.get("matches_expected") is False:
        return EXIT_INPUT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with command parameters")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
    common.add_argument("--full", action="store_true", help="full-size runs (more particles, samples and fixtures)")
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="toruspot", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).splitlines()[0])
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = _read_json(args.config) if args.config else {}
        cfg = ExperimentConfig.build(args.command, raw, args.seed, args.out, args.full)
        result = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(to_json(result, indent=2))
    return _exit_code(args.command, result)


if __name__ == "__main__":
    sys.exit(main())
