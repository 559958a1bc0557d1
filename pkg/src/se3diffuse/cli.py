"""Command-line driver: experiments, table caching, CSV/JSON/PDB artifacts.

Subcommands:
  igso3 {eval,sample,score,table}  series evaluation, sampling, scores, cache
  schedule                         noise-schedule curves as CSV
  toy {forward,reverse,compare}    the discrete-target SO(3) experiment
  sample-backbones                 reverse walk on SE(3)^N, PDB output

Every command writes a run-manifest JSON alongside its outputs. Exit
codes: 0 success, 1 usage error, 2 numerical-domain error, 3 I/O error.
The environment variable SE3DIFFUSE_CACHE names a directory of reusable
IGSO3 tables.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import backbone, igso3, process, schedules, so3, toy

CACHE_ENV = "SE3DIFFUSE_CACHE"

IGSO3_DEFAULTS = {"t": None, "terms": 2000, "grid": 1000, "n": 10000, "seed": 0,
                  "out": None}
SCHEDULE_DEFAULTS = {"beta_min": 0.1, "beta_max": 20.0, "sigma_min": 0.1,
                     "sigma_max": 1.5, "kind": "logarithmic", "points": 101,
                     "out": None}
TOY_DEFAULTS = {"atoms": 3, "paths": 5000, "T": 4.0, "steps": 200, "seed": 0,
                "atom_seed": 0, "out_dir": None}
BACKBONE_DEFAULTS = {"n_residues": 32, "n_steps": 500, "eps": 0.01, "zeta": 0.1,
                     "seed": 0, "init_seed": 0, "score": "fixed-target",
                     "out": None, "trajectory": False}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems must exit 1, not argparse's 2
        raise UsageError(message)


def _fmt(x) -> str:
    """Shortest round-trip decimal form; keeps CSV output byte-stable."""
    return repr(float(x))


@dataclass
class RunManifest:
    """Reproducibility record written next to every command's outputs."""

    command: str
    config: dict
    seed: int | None
    outputs: list[str] = field(default_factory=list)
    duration_s: float = 0.0


def _write_manifest(manifest: RunManifest, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge precedence: builtin defaults < --config file < explicit flags."""
    config = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            try:
                loaded = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"bad --config file: {exc}") from exc
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        config.update(loaded)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    missing = [k for k, v in config.items() if v is None]
    if missing:
        raise UsageError(f"missing required options: {sorted(missing)}")
    return config


# ---------------------------------------------------------------- igso3

def _trunc_config(cfg: dict) -> igso3.TruncationConfig:
    return igso3.TruncationConfig(
        series_terms=int(cfg["terms"]), angle_grid=int(cfg["grid"])
    )


def _table_cache_path(t: float, cfg: igso3.TruncationConfig) -> str | None:
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    name = f"igso3_t{_fmt(t)}_L{cfg.series_terms}_M{cfg.angle_grid}.csv"
    return os.path.join(root, name)


def dump_table(table: igso3.IGSO3Table, path: str, series_terms: int) -> None:
    """Table cache record: a header line (t, M, L, mass) plus grid rows."""
    with open(path, "w") as fh:
        fh.write(
            f"# igso3-table t={_fmt(table.t)} M={len(table.omega_grid)}"
            f" L={series_terms} mass={_fmt(table.raw_mass)}\n"
        )
        fh.write("omega,f,df,cdf\n")
        for row in zip(table.omega_grid, table.f_vals, table.df_vals, table.cdf_vals):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def load_table(path: str) -> igso3.IGSO3Table:
    try:
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("# igso3-table"):
                raise OSError(f"{path} is not an IGSO3 table dump")
            meta = dict(kv.split("=") for kv in header.split()[2:])
            fh.readline()  # column names
            data = np.loadtxt(fh, delimiter=",")
        return igso3.IGSO3Table(
            t=float(meta["t"]),
            omega_grid=data[:, 0],
            f_vals=data[:, 1],
            df_vals=data[:, 2],
            cdf_vals=data[:, 3],
            raw_mass=float(meta["mass"]),
        )
    except (ValueError, KeyError, IndexError) as exc:
        raise OSError(f"corrupt IGSO3 table file {path}: {exc}") from exc


def _get_table(t: float, cfg: igso3.TruncationConfig) -> igso3.IGSO3Table:
    cache = _table_cache_path(t, cfg)
    if cache and os.path.exists(cache):
        return load_table(cache)
    return igso3.build_table(t, cfg)


def cmd_igso3(args: argparse.Namespace) -> RunManifest:
    defaults = dict(IGSO3_DEFAULTS)
    if args.igso3_cmd == "table":
        defaults["out"] = ""  # optional; empty means cache directory
    cfg = _resolve(args, defaults)
    trunc = _trunc_config(cfg)
    t = float(cfg["t"])
    manifest = RunManifest(command=f"igso3 {args.igso3_cmd}", config=cfg,
                           seed=int(cfg["seed"]))

    if args.igso3_cmd == "eval":
        grid = np.linspace(0.0, np.pi, trunc.angle_grid)
        f = igso3.f_igso3(grid, t, trunc)
        df = igso3.df_igso3_domega(grid, t, trunc)
        with open(cfg["out"], "w") as fh:
            fh.write("omega,f,df\n")
            for row in zip(grid, f, df):
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        manifest.outputs.append(cfg["out"])

    elif args.igso3_cmd == "sample":
        rng = np.random.default_rng(int(cfg["seed"]))
        table = _get_table(t, trunc)
        base = np.broadcast_to(np.eye(3), (int(cfg["n"]), 3, 3))
        quats = so3.quat_from_rotation(igso3.sample_igso3(base, table, rng))
        with open(cfg["out"], "w") as fh:
            fh.write("a,b,c,d\n")
            for q in quats:
                fh.write(",".join(_fmt(v) for v in q) + "\n")
        manifest.outputs.append(cfg["out"])

    elif args.igso3_cmd == "score":
        rng = np.random.default_rng(int(cfg["seed"]))
        table = _get_table(t, trunc)
        base = np.broadcast_to(np.eye(3), (int(cfg["n"]), 3, 3))
        samples = igso3.sample_igso3(base, table, rng)
        scores = igso3.conditional_score(base, samples, t, trunc)
        local = so3.transpose(samples) @ scores
        coeffs = np.stack([local[..., 2, 1], local[..., 0, 2], local[..., 1, 0]], -1)
        omega = so3.rotation_angle(samples)
        with open(cfg["out"], "w") as fh:
            fh.write("omega,s1,s2,s3\n")
            for om, c in zip(omega, coeffs):
                fh.write(",".join(_fmt(v) for v in (om, *c)) + "\n")
        manifest.outputs.append(cfg["out"])

    else:  # table
        out = cfg["out"] or _table_cache_path(t, trunc)
        if not out:
            raise UsageError(
                f"igso3 table needs --out or the {CACHE_ENV} environment variable"
            )
        os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
        if os.path.exists(out):
            load_table(out)  # cache hit: validate and keep
        else:
            dump_table(igso3.build_table(t, trunc), out, trunc.series_terms)
        manifest.outputs.append(out)

    return manifest


# ------------------------------------------------------------- schedule

def cmd_schedule(args: argparse.Namespace) -> RunManifest:
    cfg = _resolve(args, SCHEDULE_DEFAULTS)
    ts = schedules.TranslationSchedule(float(cfg["beta_min"]), float(cfg["beta_max"]))
    rs = schedules.RotationSchedule(
        float(cfg["sigma_min"]), float(cfg["sigma_max"]), str(cfg["kind"])
    )
    s = np.linspace(0.0, 1.0, int(cfg["points"]))
    rows = zip(
        s,
        schedules.beta(s, ts),
        schedules.G_x(s, ts),
        1.0 - np.exp(-schedules.G_x(s, ts)),
        schedules.sigma_r(s, rs),
        schedules.rot_variance(s, rs),
        schedules.g_r(s, rs),
    )
    with open(cfg["out"], "w") as fh:
        fh.write("s,beta,G_x,trans_var,sigma_r,rot_var,g_r\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return RunManifest(command="schedule", config=cfg, seed=None,
                       outputs=[cfg["out"]])


# ------------------------------------------------------------------ toy

def _toy_run_dir_write(
    out_dir: str, marginals: dict[float, np.ndarray], target: toy.DiscreteTarget
) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    outputs = []
    times = sorted(marginals)
    for idx, t in enumerate(times):
        samples = marginals[t]
        quats = so3.quat_from_rotation(samples)
        rel = so3.transpose(target.atoms)[:, None] @ samples[None]
        angles = so3.rotation_angle(rel)  # (K, n)
        path = os.path.join(out_dir, f"t_{idx:04d}.csv")
        header = "path_id,a,b,c,d," + ",".join(
            f"angle_to_atom_{k}" for k in range(len(target.weights))
        )
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for pid in range(samples.shape[0]):
                vals = [str(pid)] + [_fmt(v) for v in quats[pid]]
                vals += [_fmt(angles[k, pid]) for k in range(angles.shape[0])]
                fh.write(",".join(vals) + "\n")
        outputs.append(path)
    return outputs


def _toy_target_and_config(cfg: dict) -> tuple[toy.DiscreteTarget, toy.ToyRunConfig]:
    target = toy.random_target(int(cfg["atoms"]), seed=int(cfg["atom_seed"]))
    run_cfg = toy.ToyRunConfig(
        n_paths=int(cfg["paths"]),
        final_time=float(cfg["T"]),
        n_steps=int(cfg["steps"]),
    )
    return target, run_cfg


def cmd_toy(args: argparse.Namespace) -> RunManifest:
    if args.toy_cmd == "compare":
        defaults = {"run_a": None, "run_b": None, "out": None}
        cfg = _resolve(args, defaults)
        report = _toy_compare(cfg["run_a"], cfg["run_b"])
        with open(cfg["out"], "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return RunManifest(command="toy compare", config=cfg, seed=None,
                           outputs=[cfg["out"]])

    cfg = _resolve(args, TOY_DEFAULTS)
    target, run_cfg = _toy_target_and_config(cfg)
    rng = np.random.default_rng(int(cfg["seed"]))
    if args.toy_cmd == "forward":
        marginals = toy.run_forward(target, run_cfg, rng)
    else:
        marginals = toy.run_reverse(target, run_cfg, rng)
    outputs = _toy_run_dir_write(cfg["out_dir"], marginals, target)
    manifest = RunManifest(command=f"toy {args.toy_cmd}", config=cfg,
                           seed=int(cfg["seed"]), outputs=outputs)
    manifest.config = dict(
        cfg,
        grid_times=[_fmt(t) for t in sorted(marginals)],
        atom_quaternions=[
            [_fmt(v) for v in q] for q in so3.quat_from_rotation(target.atoms)
        ],
    )
    return manifest


def _toy_compare(run_a: str, run_b: str) -> dict:
    from scipy import stats

    def load_run(d):
        with open(os.path.join(d, "manifest.json")) as fh:
            manifest = json.load(fh)
        times = [float(t) for t in manifest["config"]["grid_times"]]
        return manifest, times

    manifest_a, times_a = load_run(run_a)
    manifest_b, times_b = load_run(run_b)
    if len(times_a) != len(times_b) or np.max(
        np.abs(np.array(times_a) - np.array(times_b))
    ) > 1e-12:
        raise UsageError("runs were recorded on different time grids")

    ks_list = []
    for idx in range(len(times_a)):
        angs = []
        for d in (run_a, run_b):
            data = np.loadtxt(
                os.path.join(d, f"t_{idx:04d}.csv"), delimiter=",", skiprows=1
            )
            angs.append(data[:, 5:].min(axis=1))
        ks_list.append(float(stats.ks_2samp(angs[0], angs[1]).statistic))
    return {
        "times": times_a,
        "ks": ks_list,
        "max_ks": max(ks_list),
    }


# ------------------------------------------------------- sample-backbones

def _extended_chain(n_residues: int) -> process.FrameSet:
    """Deterministic denoising target: identity frames strung along x."""
    spacing = 0.38  # nm, roughly one CA-CA step
    translations = np.zeros((n_residues, 3))
    translations[:, 0] = spacing * np.arange(n_residues)
    rotations = np.broadcast_to(np.eye(3), (n_residues, 3, 3)).copy()
    return process.center(process.FrameSet(rotations, translations))


def cmd_sample_backbones(args: argparse.Namespace) -> RunManifest:
    cfg = _resolve(args, BACKBONE_DEFAULTS)
    if cfg["score"] not in ("prior-only", "fixed-target"):
        raise UsageError("--score must be prior-only or fixed-target")

    trans_sched = schedules.TranslationSchedule()
    rot_sched = schedules.RotationSchedule()
    sim = process.SimConfig(
        n_steps=int(cfg["n_steps"]),
        eps=float(cfg["eps"]),
        noise_scale=float(cfg["zeta"]),
        seed=int(cfg["seed"]),
    )
    n = int(cfg["n_residues"])
    init = process.reference_sample(n, np.random.default_rng(int(cfg["init_seed"])))
    if cfg["score"] == "fixed-target":
        score = process.fixed_target_score(_extended_chain(n), trans_sched, rot_sched)
    else:
        score = process.zero_score
    rng = np.random.default_rng(int(cfg["seed"]))
    traj = process.reverse_walk(
        init, score, trans_sched, rot_sched, sim, rng,
        record=bool(cfg["trajectory"]),
    )

    outputs = []
    final = traj[-1][1]
    pdb_path = cfg["out"] + ".pdb"
    backbone.write_pdb(pdb_path, backbone.frameset_to_atoms(final))
    outputs.append(pdb_path)

    if cfg["trajectory"]:
        traj_path = cfg["out"] + "_trajectory.csv"
        with open(traj_path, "w") as fh:
            fh.write("t,chain_id,residue_index,a,b,c,d,x,y,z\n")
            for t, state in traj:
                quats = so3.quat_from_rotation(state.rotations)
                for i in range(len(state)):
                    row = [_fmt(t), "0", str(i)]
                    row += [_fmt(v) for v in quats[i]]
                    row += [_fmt(v) for v in state.translations[i]]
                    fh.write(",".join(row) + "\n")
        outputs.append(traj_path)

    return RunManifest(command="sample-backbones", config=cfg,
                       seed=int(cfg["seed"]), outputs=outputs)


# ----------------------------------------------------------------- main

def build_parser() -> _Parser:
    parser = _Parser(prog="se3diffuse")
    sub = parser.add_subparsers(dest="command", required=True)

    p_igso3 = sub.add_parser("igso3", help="heat-kernel series utilities")
    p_igso3.add_argument("igso3_cmd", choices=["eval", "sample", "score", "table"])
    for flag, typ in [("--t", float), ("--terms", int), ("--grid", int),
                      ("--n", int), ("--seed", int)]:
        p_igso3.add_argument(flag, type=typ)
    p_igso3.add_argument("--out")
    p_igso3.add_argument("--config")

    p_sched = sub.add_parser("schedule", help="dump schedule curves as CSV")
    for flag, typ in [("--beta-min", float), ("--beta-max", float),
                      ("--sigma-min", float), ("--sigma-max", float),
                      ("--points", int)]:
        p_sched.add_argument(flag, type=typ)
    p_sched.add_argument("--kind", choices=["logarithmic", "linear"])
    p_sched.add_argument("--out")
    p_sched.add_argument("--config")

    p_toy = sub.add_parser("toy", help="discrete-target SO(3) experiment")
    p_toy.add_argument("toy_cmd", choices=["forward", "reverse", "compare"])
    for flag, typ in [("--atoms", int), ("--paths", int), ("--T", float),
                      ("--steps", int), ("--seed", int), ("--atom-seed", int)]:
        p_toy.add_argument(flag, type=typ)
    p_toy.add_argument("--out-dir")
    p_toy.add_argument("--run-a")
    p_toy.add_argument("--run-b")
    p_toy.add_argument("--out")
    p_toy.add_argument("--config")

    p_bb = sub.add_parser("sample-backbones", help="reverse walk to a PDB file")
    for flag, typ in [("--n-residues", int), ("--n-steps", int), ("--eps", float),
                      ("--zeta", float), ("--seed", int), ("--init-seed", int)]:
        p_bb.add_argument(flag, type=typ)
    p_bb.add_argument("--score", choices=["prior-only", "fixed-target"])
    p_bb.add_argument("--out")
    p_bb.add_argument("--trajectory", action="store_true", default=None)
    p_bb.add_argument("--config")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        start = time.monotonic()
        if args.command == "igso3":
            manifest = cmd_igso3(args)
        elif args.command == "schedule":
            manifest = cmd_schedule(args)
        elif args.command == "toy":
            manifest = cmd_toy(args)
        else:
            manifest = cmd_sample_backbones(args)
        manifest.duration_s = time.monotonic() - start
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except igso3.NumericalDomainError as exc:
        print(f"numerical-domain error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3

    if manifest.command in ("toy forward", "toy reverse"):
        manifest_path = os.path.join(manifest.config["out_dir"], "manifest.json")
    elif manifest.command == "sample-backbones":
        manifest_path = manifest.config["out"] + ".manifest.json"
    else:
        manifest_path = manifest.outputs[0] + ".manifest.json"
    try:
        _write_manifest(manifest, manifest_path)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
