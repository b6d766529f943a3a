"""Command-line driver: synth, register, reduce, predict, report.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""
import argparse
import json
import os
import sys
import time
import warnings

import numpy as np

from . import config as cfgmod
from . import io
from .femesh import InterpolationError, MappingError, MeshLocator
from .geometry import GeometryError
from .pipeline import OfflineSettings, evaluate, fit_reduced_model, nearest_index, \
    register_manifold
from .reduction import ReductionError
from .registration import GreedyResult, RegistrationError, TemplateSpace
from .synthetic import ManifoldSpec, generate

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

# space kind, sensor smoothing and map regularization per manifold; smoothing is
# matched to feature width, the stronger map penalty keeps large front shifts regressable
SYNTH_DEFAULTS = {"square_front": ("rect", 1.0, 1e-4), "annulus_gaussian": ("polar", 100.0, 1e-4),
                  "partitioned_front": ("dd", 1.0, 1e-3)}


class InputError(Exception):
    pass


class NumericalFailure(Exception):
    pass


def _msg(text):
    print(text, file=sys.stderr)


def _settings(cfg):
    return OfflineSettings(sensor_approach=cfg.sensor_approach, xi_s=cfg.xi_s,
                           sensor_cells=cfg.sensor_cells, norm=cfg.norm, pod_tol=cfg.pod_tol,
                           pod_n=cfg.pod_n, r2_threshold=cfg.r2_threshold, reg=cfg.reg)


def _space_params(cfg):
    if cfg.space_kind == "rect":
        return {"kind": "rect", "J": cfg.J}
    if cfg.space_kind == "polar":
        return {"kind": "polar", "J_r": cfg.J_r, "J_f": cfg.J_f}
    if cfg.space_kind == "dd":
        return {"kind": "dd", "J": cfg.J, "norm": cfg.map_norm}
    raise InputError(f"unknown space kind {cfg.space_kind!r}")


def _load_inputs(cfg, test=False):
    keys = ["mesh", "partition", "snapshots", "params"]
    cfgmod.check_files(cfg, keys)
    geometry = io.read_partition(cfg.partition)
    mesh = io.read_mesh(cfg.mesh, geometry)
    U = io.read_matrix(cfg.snapshots)
    mus = io.read_params(cfg.params)
    if U.shape[0] != mesh.n_nodes:
        raise InputError(f"snapshot matrix has {U.shape[0]} rows, mesh has {mesh.n_nodes} nodes")
    if U.shape[1] != mus.shape[0]:
        raise InputError(f"{U.shape[1]} snapshots but {mus.shape[0]} parameter rows")
    return geometry, mesh, U, mus


def _out_dir(cfg, args):
    out = args.out or cfg.output
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args):
    if not args.config:
        raise InputError("--config is required")
    cfg = cfgmod.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args):
    """Generate a synthetic manifold plus a ready-to-run config."""
    cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    out = _out_dir(cfg, args)
    spec = ManifoldSpec(cfg.synth_kind, n_train=cfg.n_train, n_test=cfg.n_test, seed=cfg.seed,
                        mesh_cells=cfg.mesh_cells or None, design=cfg.design)
    prob, mtr, U, mte, Ut = generate(spec)
    files = {"mesh": "mesh.txt", "partition": "partition.json", "snapshots": "snapshots.npy",
             "params": "params.csv", "test_snapshots": "test_snapshots.npy",
             "test_params": "test_params.csv"}
    io.write_mesh(os.path.join(out, files["mesh"]), prob.mesh)
    io.write_partition(os.path.join(out, files["partition"]), prob.geometry)
    io.write_matrix(os.path.join(out, files["snapshots"]), U)
    io.write_params(os.path.join(out, files["params"]), mtr)
    io.write_matrix(os.path.join(out, files["test_snapshots"]), Ut)
    io.write_params(os.path.join(out, files["test_params"]), mte)
    for k, v in files.items():
        setattr(cfg, k, v)
    cfg.output = "."
    if cfg.template < 0:
        cfg.template = nearest_index(mtr, 0.5 * (np.array(spec.lo) + np.array(spec.hi)))
    if args.config is None:
        cfg.space_kind, cfg.xi_s, cfg.reg.xi = SYNTH_DEFAULTS[cfg.synth_kind]
    cfgmod.save(cfg, os.path.join(out, "run.ini"))
    print(f"wrote {cfg.synth_kind} manifold ({U.shape[1]} train, {Ut.shape[1]} test) to {out}")
    return EXIT_OK


def cmd_register(args):
    cfg = _load_config(args)
    out = _out_dir(cfg, args)
    geometry, mesh, U, mus = _load_inputs(cfg)
    space = io.rebuild_space(_space_params(cfg), geometry)
    settings = _settings(cfg)
    template = cfg.template
    if template < 0:
        template = nearest_index(mus, 0.5 * (mus.min(axis=0) + mus.max(axis=0)))
    if template >= U.shape[1]:
        raise InputError(f"template index {template} exceeds {U.shape[1]} snapshots")
    t0 = time.perf_counter()
    greedy, _ = register_manifold(mesh, space, U, mus, settings, template,
                                  workers=args.workers, log=print)
    wall = time.perf_counter() - t0
    for it, failed in enumerate(greedy.failures):
        for k in failed:
            _msg(f"warning: registration of snapshot {k} failed at greedy iteration {it}")
    if greedy.basis.shape[1] == 0 and U.shape[1] > 1:
        raise NumericalFailure("registration produced an empty mapping basis")
    fp = cfgmod.fingerprint(cfg)
    np.savez(os.path.join(out, "mapping.npz"), format_version=np.int64(io.FORMAT_VERSION),
             fingerprint=np.str_(fp), space=np.str_(json.dumps(_space_params(cfg))),
             basis=greedy.basis.astype("<f8"), coefficients=greedy.coefficients.astype("<f8"),
             maps=greedy.maps.astype("<f8"), eigenvalues=greedy.eigenvalues.astype("<f8"),
             mus=mus.astype("<f8"), template=np.int64(template))
    io.write_matrix(os.path.join(out, "mapping_basis.txt"), greedy.basis)
    io.write_csv(os.path.join(out, "mapping_coefficients.csv"),
                 [f"mu{i + 1}" for i in range(mus.shape[1])]
                 + [f"a{i + 1}" for i in range(greedy.coefficients.shape[1])],
                 [[float(v) for v in np.concatenate([m, a])]
                  for m, a in zip(mus, greedy.coefficients)])
    io.write_csv(os.path.join(out, "registration_report.csv"),
                 ["iteration", "templates", "max_f", "failures", "wall_time"],
                 [[it, it + 1, float(np.max(f)), len(fl), float(tm)]
                  for it, (f, fl, tm) in enumerate(zip(greedy.f_history, greedy.failures,
                                                       greedy.timings))])
    print(f"registration done: M={greedy.basis.shape[1]}, "
          f"max f*={greedy.max_f[-1]:.3e}, {wall:.1f}s")
    return EXIT_OK


def _load_mapping(path, fp, force):
    with np.load(path, allow_pickle=False) as z:
        if str(z["fingerprint"]) != fp and not force:
            raise InputError(f"{path}: config fingerprint mismatch (use --force to override)")
        g = GreedyResult(TemplateSpace(), z["basis"], z["coefficients"], z["maps"],
                         z["eigenvalues"])
        return g, z["mus"]


def cmd_reduce(args):
    cfg = _load_config(args)
    out = _out_dir(cfg, args)
    geometry, mesh, U, mus = _load_inputs(cfg)
    settings = _settings(cfg)
    fp = cfgmod.fingerprint(cfg)
    greedy, space = None, None
    if cfg.registered:
        path = os.path.join(out, "mapping.npz")
        if not os.path.exists(path):
            raise InputError(f"mapping bundle {path} not found; run 'register' first")
        greedy, mus_map = _load_mapping(path, fp, args.force)
        if mus_map.shape != mus.shape or not np.array_equal(mus_map, mus):
            raise InputError("mapping bundle was trained on different parameters")
        space = io.rebuild_space(_space_params(cfg), geometry)
    meta = {"space": _space_params(cfg) if space is not None else {},
            "registered": bool(cfg.registered)}
    model, _ = fit_reduced_model(mesh, geometry, space, U, mus, settings, greedy,
                                 fingerprint=fp, meta=meta)
    io.save_model(os.path.join(out, "model.npz"), model)
    lam = model.eigenvalues
    io.write_csv(os.path.join(out, "eigenvalues.csv"), ["n", "lambda", "ratio"],
                 [[n + 1, float(v), float(v / lam[0]) if lam[0] > 0 else 0.0]
                  for n, v in enumerate(lam)])
    sweep = cfg.sweep()
    if sweep:
        locator = MeshLocator(mesh)

        def truth(k):
            return lambda mu, nodes: locator.interpolate(U[:, k], nodes)
        rows = _sweep_rows(model, mus, [truth(k) for k in range(len(mus))], sweep)
        io.write_csv(os.path.join(out, "eavg_train.csv"), ["N", "E_avg"], rows)
        if cfg.test_snapshots and cfg.test_params:
            cfgmod.check_files(cfg, ["test_snapshots", "test_params"])
            Ut = io.read_matrix(cfg.test_snapshots)
            mt = io.read_params(cfg.test_params)
            rows = _sweep_rows(model, mt, [lambda mu, nodes, k=k: locator.interpolate(
                Ut[:, k], nodes) for k in range(len(mt))], sweep)
            io.write_csv(os.path.join(out, "eavg_test.csv"), ["N", "E_avg"], rows)
    print(f"reduced model: N={model.n}, M={model.m}")
    return EXIT_OK


def _sweep_rows(model, mus, truths, sweep):
    sweep = [n for n in sweep if 1 <= n <= model.n]
    errs = {n: [] for n in sweep}
    # evaluate one parameter at a time so each gets its own truth
    for mu, tf in zip(mus, truths):
        e, _ = evaluate(model, mu[None, :], tf, sweep)
        for n in sweep:
            errs[n].append(e[n])
    return [[n, float(np.mean(errs[n]))] for n in sweep]


def cmd_predict(args):
    cfg = _load_config(args)
    out = _out_dir(cfg, args)
    model_path = args.model or os.path.join(out, "model.npz")
    if not os.path.exists(model_path):
        raise InputError(f"model bundle {model_path} not found")
    model = io.load_model(model_path)
    fp = cfgmod.fingerprint(cfg)
    if model.fingerprint != fp:
        if not args.force:
            raise InputError("model fingerprint does not match the config (use --force)")
        _msg("warning: fingerprint mismatch ignored (--force)")
    params = args.params or cfg.test_params
    if not params or not os.path.exists(params):
        raise InputError(f"parameter file {params!r} not found")
    mus = io.read_params(params)
    dim = model.solution.lo.size
    if mus.shape[1] != dim:
        raise InputError(f"parameters have dimension {mus.shape[1]}, model expects {dim}")
    pdir = os.path.join(out, "predictions")
    os.makedirs(pdir, exist_ok=True)
    rows = []
    for k, mu in enumerate(mus):
        nodes, u, rep = model.predict_field(mu)
        if not rep.in_box:
            _msg(f"warning: parameter {k} lies outside the training box")
        io.write_mesh(os.path.join(pdir, f"mesh_{k + 1}.txt"), model.mesh, nodes)
        io.write_matrix(os.path.join(pdir, f"field_{k + 1}.txt"), u[:, None])
        rows.append([k + 1] + [float(v) for v in mu]
                    + [int(rep.passed), float(rep.min_det), float(rep.min_radius_ratio),
                       int(not rep.in_box)])
    io.write_csv(os.path.join(out, "predict_report.csv"),
                 ["k"] + [f"mu{i + 1}" for i in range(dim)]
                 + ["bijective", "min_det", "min_radius_ratio", "out_of_box"], rows)
    n_bad = sum(1 for r in rows if not r[-4])
    print(f"predicted {len(rows)} parameters, {n_bad} with inverted elements")
    return EXIT_NUMERIC if n_bad else EXIT_OK


def cmd_report(args):
    run = args.out or (cfgmod.load(args.config).output if args.config else ".")
    os.makedirs(run, exist_ok=True)
    missing = []

    def table(name):
        path = os.path.join(run, name)
        if not os.path.exists(path):
            missing.append(name)
            return None, []
        return io.read_csv(path)

    _, eig = table("eigenvalues.csv")
    io.write_csv(os.path.join(run, "report_eigenvalues.csv"), ["n", "ratio"],
                 [[int(r[0]), float(r[2])] for r in eig])
    rows = []
    for name, label in (("eavg_train.csv", "train"), ("eavg_test.csv", "test")):
        _, t = table(name)
        rows += [[label, int(r[0]), float(r[1])] for r in t]
    io.write_csv(os.path.join(run, "report_eavg.csv"), ["set", "N", "E_avg"], rows)
    head, pred = table("predict_report.csv")
    rr = []
    if pred:
        i = head.index("min_radius_ratio")
        rr = sorted(float(r[i]) for r in pred)
    io.write_csv(os.path.join(run, "report_radius_ratio.csv"), ["rank", "min_radius_ratio"],
                 [[k + 1, v] for k, v in enumerate(rr)])
    _, reg = table("registration_report.csv")
    io.write_csv(os.path.join(run, "report_registration.csv"), ["iteration", "max_f"],
                 [[int(r[0]), float(r[2])] for r in reg])
    if missing:
        _msg("warning: missing artifacts: " + ", ".join(missing))
    print(f"report written to {run}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "register": cmd_register, "reduce": cmd_reduce,
            "predict": cmd_predict, "report": cmd_report}


def build_parser():
    p = argparse.ArgumentParser(prog="regmor",
                                description="Registration-based model reduction pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        s = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        s.add_argument("--config", help="run configuration file")
        s.add_argument("--out", help="output directory (overrides paths.output)")
        s.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="worker processes for registration")
        s.add_argument("--seed", type=int, help="override run.seed")
        s.add_argument("--force", action="store_true",
                       help="accept bundles with a mismatched config fingerprint")
        if name == "predict":
            s.add_argument("--model", help="model bundle (default OUT/model.npz)")
            s.add_argument("--params", help="parameter CSV (default paths.test_params)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except (InputError, cfgmod.ConfigError, io.FormatError, FileNotFoundError,
            GeometryError) as exc:
        _msg(f"input error [{args.command}]: {exc}")
        return EXIT_INPUT
    except (NumericalFailure, RegistrationError, MappingError, InterpolationError,
            ReductionError, np.linalg.LinAlgError, FloatingPointError) as exc:
        _msg(f"numerical failure [{args.command}]: {exc}")
        return EXIT_NUMERIC
    except ValueError as exc:
        _msg(f"input error [{args.command}]: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
