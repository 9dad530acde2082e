"""Command-line driver: ``bbgky-qem {hierarchy,simulate,mitigate,metrics,reproduce}``.

Exit codes: 0 success, 2 configuration error, 3 size guard, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import BACKEND
from .config import ConfigError, RunConfig
from .errors import GuardError
from .hamiltonian import HamiltonianParseError, load_hamiltonian, load_observable
from .hierarchy import HierarchyError, export_graph, partition_full, string_id, subhierarchy_radius, z_ratio
from .metrics import MetricError, Trajectory, fit_quadratic, l_norm, p_metric
from .pipeline import (
    REALIZATIONS,
    ModelSpec,
    RealizationRun,
    Simulation,
    noisy_current,
    noisy_table,
    run_realization,
    simulate,
    split_seed,
)

log = logging.getLogger("bbgky_qem")

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_NUMERIC = 0, 2, 3, 4

PRESETS = {
    "table1-like": REALIZATIONS,
    "fig5-like": [(0.1, 0.1), (0.1, 0.2)],
    "fig6-like": [(0.5, 0.1), (0.5, 0.2)],
}


# ---------------------------------------------------------------------------
# artifacts


class Outputs:
    """Writes files under one directory and remembers what it wrote."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def write(self, name: str, text: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.files.append(name)
        return path

    def json(self, name: str, payload) -> Path:
        return self.write(name, json.dumps(payload, indent=1, sort_keys=True) + "\n")

    def manifest(
        self, command: str, cfg: RunConfig, seeds: dict, started: float, summary: dict,
        invocation: dict | None = None, name: str = "manifest.json",
    ) -> Path:
        artifacts = [
            {"path": f, "sha256": hashlib.sha256((self.root / f).read_bytes()).hexdigest()}
            for f in sorted(set(self.files))
        ]
        payload = {
            "software": {"name": "bbgky_qem", "version": __version__, "backend": BACKEND},
            "command": command,
            "invocation": invocation or {},
            "config": cfg.to_dict(),
            "seeds": seeds,
            "wall_clock_s": round(time.time() - started, 3),
            "artifacts": artifacts,
            "summary": summary,
        }
        path = self.root / name
        path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
        return path


def _rows_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def _model(cfg: RunConfig):
    m = cfg.model
    if m.schwinger is not None:
        spec = ModelSpec(m.schwinger.nqubits, m.schwinger.omega, m.schwinger.m, m.schwinger.mu5)
        return spec.hamiltonian(), spec.current()
    return load_hamiltonian(m.file), load_observable(m.observable)


def _simulate(cfg: RunConfig) -> Simulation:
    h, J = _model(cfg)
    g = cfg.grid
    return simulate(h, J, g.T, g.nT, cfg.noise.p_dep, g.ed_factor)


# ---------------------------------------------------------------------------
# commands


def cmd_hierarchy(cfg: RunConfig, out: Outputs) -> dict:
    h, J = _model(cfg)
    R, _, graph = subhierarchy_radius(J.strings, h)
    census = {
        "R": R,
        "sizes": [graph.size(r) for r in range(R + 1)],
        "layers": graph.census(),
        "closed": graph.size(R) == len(graph.Q(R + 1)),
        "z_next": [z_ratio(graph, r, "next") for r in range(R + 1)],
        "z_full": [z_ratio(graph, r, "full") for r in range(R + 1)],
        "n_terms": len(h.terms),
    }
    out.json("census.json", census)
    out.write("graph.json", export_graph(graph, "json"))
    out.write("graph.dot", export_graph(graph, "dot"))
    summary = {"R": R, "sizes": census["sizes"]}
    if cfg.hierarchy.partition:
        part = partition_full(h)
        report = part.report()
        q0_label = part.labels[string_id(J.strings[0], h.nqubits)]
        report["component_of_Q0_size"] = int(np.count_nonzero(part.labels == q0_label))
        report["component_of_Q0_matches_QR"] = report["component_of_Q0_size"] == graph.size(R)
        out.json("partition.json", report)
        summary["components_non_identity"] = report["components_non_identity"]
    return summary


def _write_simulation(sim: Simulation, run_table, out: Outputs, prefix: str = "") -> None:
    out.write(prefix + "table.csv", run_table.to_csv())
    out.write(prefix + "table.json", run_table.meta_json() + "\n")
    out.write(prefix + "J_ed.csv", sim.ed.to_csv())
    out.write(prefix + "J_ED.csv", sim.ED.to_csv())


def cmd_simulate(cfg: RunConfig, out: Outputs) -> dict:
    sim = _simulate(cfg)
    table = noisy_table(sim, cfg.noise.seed, cfg.grid.nS, cfg.noise.eta)
    _write_simulation(sim, table, out)
    noisy = noisy_current(table, sim.observable)
    out.write("J_noisy.csv", noisy.to_csv())
    summary = {
        "L_trotter": sim.L_trotter,
        "L_noisy": l_norm(noisy, sim.ED)[0],
        "max_abs_J_ED": float(np.abs(sim.ED.values).max()),
    }
    out.json("summary.json", summary)
    return summary


def _write_run(run: RealizationRun, out: Outputs, prefix: str = "") -> None:
    for o in run.radii:
        res = o.result
        out.write(f"{prefix}mh_r{o.r}.csv", res.to_csv())
        out.json(f"{prefix}mh_r{o.r}.json", res.diagnostics())
        out.write(f"{prefix}J_mh_r{o.r}.csv", o.current.to_csv())
    out.write(prefix + "J_noisy.csv", run.noisy.to_csv())
    out.write(prefix + "metrics.csv", _rows_csv(run.rows()))
    out.json(prefix + "metrics.json", {
        "rows": run.rows(),
        "fit_ED": run.fit_ED.to_dict(),
        "fit_noisy": run.fit_noisy.to_dict(),
    })


def cmd_mitigate(cfg: RunConfig, out: Outputs) -> dict:
    sim = _simulate(cfg)
    mc = cfg.mitigation
    R = sim.graph.R
    radii = [r for r in mc.r if r <= R]
    if len(radii) < len(mc.r):
        log.warning("radii above R=%d dropped: %s", R, [r for r in mc.r if r > R])
    labels = _labels(cfg)
    run = run_realization(
        sim, cfg.noise.seed, mc.seed, radii, mc.schedule(), cfg.grid.nS, cfg.noise.eta,
        mc.zmode, cfg.metrics.tmax, labels=labels,
    )
    _write_simulation(sim, run.table, out)
    _write_run(run, out)
    return {
        "L_trotter": sim.L_trotter,
        "L_noisy": run.L_noisy[0],
        "P_noisy": run.P_noisy[0],
        "L_mh": {o.r: o.L[0] for o in run.radii},
        "P_mh": {o.r: o.P[0] for o in run.radii},
    }


def _labels(cfg: RunConfig) -> dict:
    s = cfg.model.schwinger
    return {"m": s.m, "mu5": s.mu5} if s is not None else {"model": cfg.model.file}


def _read_traj(path: Path) -> Trajectory:
    rows = list(csv.DictReader(path.read_text().splitlines()))
    if not rows:
        raise ConfigError(f"empty trajectory file {path}")
    return Trajectory(
        np.array([float(r["value"]) for r in rows]),
        np.array([float(r["error"]) for r in rows]),
        np.array([float(r["t"]) for r in rows]),
        path.stem,
    )


def cmd_metrics(cfg: RunConfig, out: Outputs) -> dict:
    """Recompute L and P from trajectory CSVs already in the output directory."""
    root = out.root
    ref_path = root / "J_ED.csv"
    if not ref_path.exists():
        raise ConfigError(f"{ref_path} not found; run `simulate` or `mitigate` first")
    ref = _read_traj(ref_path)
    fit_ref = fit_quadratic(ref, cfg.metrics.tmax)
    rows = []
    others = sorted(root.glob("J_noisy.csv")) + sorted(
        root.glob("J_mh_r*.csv"), key=lambda p: int(re.findall(r"\d+", p.stem)[-1])
    )
    ed = root / "J_ed.csv"
    if ed.exists():
        others.insert(0, ed)
    for path in others:
        traj = _read_traj(path)
        L = l_norm(traj, ref)
        P = p_metric(fit_quadratic(traj, cfg.metrics.tmax), fit_ref)
        rows.append({"trajectory": path.stem, "L": L[0], "L_err": L[1], "P": P[0], "P_err": P[1]})
    out.write("metrics_recomputed.csv", _rows_csv(rows))
    out.json("metrics_recomputed.json", {"rows": rows, "fit_ED": fit_ref.to_dict()})
    return {r["trajectory"]: {"L": r["L"], "P": r["P"]} for r in rows}


def _reproduce_job(args) -> tuple[list[dict], dict, dict[str, str]]:
    cfg_dict, m, mu5, seed = args
    cfg = RunConfig.from_dict(cfg_dict)
    cfg.model.schwinger = replace(cfg.model.schwinger, m=m, mu5=mu5)
    sim = _simulate(cfg)
    mc = cfg.mitigation
    radii = [r for r in mc.r if r <= sim.graph.R]
    run = run_realization(
        sim, seed, seed, radii, mc.schedule(), cfg.grid.nS, cfg.noise.eta, mc.zmode,
        cfg.metrics.tmax, labels={"m": m, "mu5": mu5},
    )
    buf = _MemoryOutputs()
    _write_simulation(sim, run.table, buf)
    _write_run(run, buf)
    zdata = {
        "r": radii,
        "z_next": [z_ratio(sim.graph, r, "next") for r in radii],
        "z_full": [z_ratio(sim.graph, r, "full") for r in radii],
    }
    traj = {
        "t": sim.ED.times.tolist(), "ED": sim.ED.values.tolist(), "ed": sim.ed.values.tolist(),
        "noisy": run.noisy.values.tolist(), "noisy_err": run.noisy.errors.tolist(),
        **{f"mh_r{o.r}": o.current.values.tolist() for o in run.radii},
        **{f"mh_r{o.r}_err": o.current.errors.tolist() for o in run.radii},
    }
    return run.rows(), {"z": zdata, "traj": traj}, buf.files


class _MemoryOutputs(Outputs):
    def __init__(self):
        self.files: dict[str, str] = {}

    def write(self, name: str, text: str):
        self.files[name] = text


def cmd_reproduce(cfg: RunConfig, out: Outputs, preset: str, seeds: list[int], jobs: int) -> dict:
    if cfg.model.schwinger is None:
        raise ConfigError("reproduce presets need a schwinger model")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    tasks = [(cfg.to_dict(), m, mu5, s) for m, mu5 in PRESETS[preset] for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_reproduce_job, tasks))
    else:
        results = [_reproduce_job(t) for t in tasks]
    rows: list[dict] = []
    for (_, m, mu5, s), (run_rows, extra, files) in zip(tasks, results):
        sub = f"m{m}_mu{mu5}_seed{s}/"
        for name, text in files.items():
            out.write(sub + name, text)
        rows.extend(run_rows)
        _gnuplot_traj(out, sub, extra["traj"])
        _gnuplot_z(out, sub, extra["z"])
    out.write("runs.csv", _rows_csv(rows))
    table = _aggregate(rows)
    out.write("table.csv", _rows_csv(table))
    _gnuplot_L(out, table)
    return {"preset": preset, "rows": len(table), "table": table}


def _aggregate(rows: list[dict]) -> list[dict]:
    """Seed-averaged L and P per (m, mu5, r); errors combine spread and propagation."""
    keys = sorted({(r["m"], r["mu5"], r["r"]) for r in rows})
    out = []
    for m, mu5, rr in keys:
        sel = [r for r in rows if (r["m"], r["mu5"], r["r"]) == (m, mu5, rr)]
        row = {"m": m, "mu5": mu5, "r": rr, "seeds": len(sel), "z_next": sel[0]["z_next"], "z_full": sel[0]["z_full"],
               "L_trotter": sel[0]["L_trotter"]}
        for name in ("L_noisy", "L_mh", "P_noisy", "P_mh"):
            v = np.array([r[name] for r in sel])
            e = np.array([r[name + "_err"] for r in sel])
            row[name] = float(v.mean())
            spread = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
            row[name + "_err"] = float(np.hypot(np.sqrt(np.sum(e**2)) / len(v), spread))
        out.append(row)
    return out


def _gnuplot_traj(out: Outputs, sub: str, traj: dict) -> None:
    cols = list(traj)
    lines = ["# " + " ".join(cols)]
    for i in range(len(traj["t"])):
        lines.append(" ".join(repr(float(traj[c][i])) for c in cols))
    out.write(sub + "current.dat", "\n".join(lines) + "\n")
    mh = [c for c in cols if c.startswith("mh_r") and not c.endswith("_err")]
    idx = {c: i + 1 for i, c in enumerate(cols)}
    plots = [
        f"'current.dat' u 1:{idx['ED']} w l t 'ED'",
        f"'current.dat' u 1:{idx['ed']} w l dt 2 t 'ed'",
        f"'current.dat' u 1:{idx['noisy']}:{idx['noisy_err']} w yerr t 'Noisy'",
    ] + [f"'current.dat' u 1:{idx[c]}:{idx[c + '_err']} w yerr t '{c}'" for c in mh]
    out.write(sub + "current.gp", "set xlabel 't'\nset ylabel '<J>'\nplot " + ", \\\n     ".join(plots) + "\n")


def _gnuplot_z(out: Outputs, sub: str, z: dict) -> None:
    lines = ["# r z_next z_full"]
    lines += [f"{r} {a!r} {b!r}" for r, a, b in zip(z["r"], z["z_next"], z["z_full"])]
    out.write(sub + "z.dat", "\n".join(lines) + "\n")
    out.write(sub + "z.gp", "set xlabel 'r'\nset ylabel 'z'\nplot 'z.dat' u 1:2 w lp t '|Q_r|/|Q_{r+1}|', "
              "'z.dat' u 1:3 w lp t '|Q_r|/|Q_R|'\n")


def _gnuplot_L(out: Outputs, table: list[dict]) -> None:
    for m, mu5 in sorted({(r["m"], r["mu5"]) for r in table}):
        sel = [r for r in table if (r["m"], r["mu5"]) == (m, mu5)]
        name = f"L_m{m}_mu{mu5}"
        lines = ["# r L_trotter L_noisy L_noisy_err L_mh L_mh_err z_next z_full"]
        for r in sel:
            lines.append(" ".join(repr(float(r[k])) if k != "r" else str(r[k]) for k in
                                  ("r", "L_trotter", "L_noisy", "L_noisy_err", "L_mh", "L_mh_err", "z_next", "z_full")))
        out.write(name + ".dat", "\n".join(lines) + "\n")
        out.write(name + ".gp", f"set xlabel 'r'\nset logscale y\nplot '{name}.dat' u 1:2 w l t 'L_Trotter', "
                  f"'{name}.dat' u 1:3:4 w yerr t 'L_Noisy', '{name}.dat' u 1:5:6 w yerr t 'L_MH'\n")


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config (or a manifest.json to re-run)")
    common.add_argument("--seed", type=int, help="master seed for noise and chain (overrides config)")
    common.add_argument("--out", help="output directory (overrides outputs.directory)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for parameter sweeps")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="bbgky-qem", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("hierarchy", parents=[common], help="layer census, partition and graph export")
    sub.add_parser("simulate", parents=[common], help="ED runs and a noisy measurement table")
    sub.add_parser("mitigate", parents=[common], help="simulate, then mitigate at each radius")
    sub.add_parser("metrics", parents=[common], help="recompute L and P from trajectory CSVs")
    rp = sub.add_parser("reproduce", parents=[common], help="run a preset over all realizations")
    rp.add_argument("--preset", choices=sorted(PRESETS), help="default: table1-like")
    rp.add_argument("--seeds", type=int, nargs="+", help="master seeds (default: noise.seed)")
    return p


def _recorded_invocation(path: str | None) -> dict:
    """Preset and seeds stored in a manifest, so re-running it replays the same sweep."""
    if not path or not path.endswith(".json"):
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError):
        return {}
    return data.get("invocation") or {} if isinstance(data, dict) else {}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.noise.seed = args.seed
            cfg.mitigation.seed = args.seed
        if args.out:
            cfg.outputs.directory = args.out
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = Outputs(Path(cfg.outputs.directory))
        started = time.time()
        invocation = None
        seeds = {
            "noise": cfg.noise.seed,
            "mitigation": cfg.mitigation.seed,
            "shots": split_seed(cfg.noise.seed, "shots"),
            "chains": {f"r{r}": split_seed(cfg.mitigation.seed, f"chain/r{r}") for r in cfg.mitigation.r},
        }
        if args.command == "hierarchy":
            summary = cmd_hierarchy(cfg, out)
        elif args.command == "simulate":
            summary = cmd_simulate(cfg, out)
        elif args.command == "mitigate":
            summary = cmd_mitigate(cfg, out)
        elif args.command == "metrics":
            summary = cmd_metrics(cfg, out)
        else:
            recorded = _recorded_invocation(args.config)
            preset = args.preset or recorded.get("preset", "table1-like")
            master = args.seeds or recorded.get("seeds") or [cfg.noise.seed]
            seeds = {"masters": master}
            invocation = {"preset": preset, "seeds": master}
            summary = cmd_reproduce(cfg, out, preset, master, args.jobs)
        name = "metrics_manifest.json" if args.command == "metrics" else "manifest.json"
        out.manifest(args.command, cfg, seeds, started, summary, invocation, name)
        print(json.dumps(summary, indent=1, sort_keys=True, default=float))
        return EXIT_OK
    except (ConfigError, HamiltonianParseError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardError as exc:
        print(f"guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError, MetricError, HierarchyError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
