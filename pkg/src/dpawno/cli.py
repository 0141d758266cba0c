"""Command-line experiment runner.

Subcommands: gen-data, train, evaluate, uq, reliability, gradcheck.
Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O error.

Primary outputs (datasets, checkpoints, metric/PDF/report files) are
byte-identical across re-runs with the same configuration and seed; wall
times and timestamps live only in sidecar files (*.meta.json, train_log.csv).
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import datagen as dg
from . import gradcheck as gc
from . import reliability as rel
from . import training as tr
from . import uq
from . import wno as wno_mod
from .config import PRESETS, ExperimentConfig, load_config
from .errors import (
    ChecksumMismatch,
    DatasetIoError,
    DpawnoError,
    FormatVersionMismatch,
    NonFiniteLoss,
    NonFiniteState,
    NonFiniteValue,
    NotPositiveDefinite,
    UsageError,
)

CONFIG_KEYS_HELP = """\
configuration keys (INI sections):
  [run]         seed, benchmark
  [pde]         nu | epsilon, alpha | gamma;  nx, ny, dt, bc, bc_value,
                domain, partial_terms, advection (central|upwind)
  [data]        n_train, nt_train, n_test, nt_test
  [ic.train.N]  kind (cosine|sine|square2d|shape2d|grf|explicit), count,
  [ic.test.N]   amplitudes / value (list, lo..hi grid, uniform: lo, hi),
                frequencies, shape, kernel-fields for grf
  [wno]         width, layers, family, levels, extension, fc1_dim, bands
  [train]       epochs, learning_rate, batch_size, schedule
                (auto: T0 @ HOLD, TMAX @ REACH  or  pairs: E:T ...),
                grad_clip, checkpoint_every
  [probe]       x (, y), t (list of step indices)
  [eval]        steps, snapshots
  [grf]         kernel (exp_sine_squared|rbf), alpha, length_scale,
                periodicity, jitter
  [limit_state] threshold, horizon, use_magnitude
  [reliability] n, diverged_as_failure
Override any key with --set SECTION.KEY=VALUE (repeatable).
"""


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def _write_sidecar(path, doc):
    doc = dict(doc)
    doc["written_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_cfg(args) -> ExperimentConfig:
    return load_config(preset=args.preset, path=args.config, overrides=args.set or ())


def _ensure_outdir(path):
    if not path:
        raise UsageError("--out is required")
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise DatasetIoError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _add_common(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS, help="shipped benchmark preset")
    src.add_argument("--config", help="path to a configuration file")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="parallel chunks for sample-independent evaluation")


# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    out = _ensure_outdir(args.out)
    full = cfg.full_spec()
    train = dg.generate(full, cfg.families("train"), cfg.n_train, cfg.nt_train,
                        cfg.seed, purpose="data")
    dg.save(train, os.path.join(out, "train.dpds"))
    test = dg.generate(full, cfg.families("test"), cfg.n_test, cfg.nt_test,
                       cfg.seed, purpose="test")
    dg.save(test, os.path.join(out, "test.dpds"))
    _write_sidecar(os.path.join(out, "gen-data.meta.json"), {
        "config": cfg.name,
        "seed": cfg.seed,
        "train": {"n": cfg.n_train, "nt": cfg.nt_train,
                  "family": train.family_desc},
        "test": {"n": cfg.n_test, "nt": cfg.nt_test, "family": test.family_desc},
    })
    print(f"wrote {out}/train.dpds ({cfg.n_train} x {cfg.nt_train + 1} states) "
          f"and {out}/test.dpds ({cfg.n_test} x {cfg.nt_test + 1})")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    out = _ensure_outdir(args.out)
    wcfg = cfg.wno_config()
    model = wno_mod.WnoModel.initialize(wcfg, cfg.seed)
    ckpt = os.path.join(out, "model.dpaw")
    if args.mode == "physics-only":
        # the zero-initialized model is exactly the known-physics solver
        model.save(ckpt)
        _write_sidecar(os.path.join(out, "train.meta.json"),
                       {"config": cfg.name, "mode": args.mode, "epochs": 0})
        print(f"wrote identity checkpoint {ckpt}")
        return 0
    dataset = dg.load(os.path.join(args.data, "train.dpds"))
    spec = cfg.data_only_spec() if args.mode == "data-only" else cfg.partial_spec()
    tcfg = cfg.train_config()
    log_rows = []

    def log_sink(epoch, t_steps, mean_loss, wall_ms):
        log_rows.append((epoch, t_steps, mean_loss, wall_ms))

    def checkpoint_fn(epoch, m):
        m.save(os.path.join(out, f"checkpoint_epoch{epoch + 1}.dpaw"))

    report = tr.train(model, dataset, spec, tcfg, log_sink=log_sink,
                      checkpoint_fn=checkpoint_fn)
    model.save(ckpt)
    # wall_ms makes the log a sidecar, not a primary output
    _write_csv(os.path.join(out, "train_log.csv"),
               ["epoch", "T", "mean_loss", "wall_ms"],
               [(str(e), str(t), l, w) for e, t, l, w in log_rows])
    _write_sidecar(os.path.join(out, "train.meta.json"), {
        "config": cfg.name,
        "mode": args.mode,
        "epochs": tcfg.epochs,
        "final_loss": report.losses[-1],
        "wall_time_s": report.wall_time_s,
    })
    print(f"trained {tcfg.epochs} epochs (loss {report.losses[0]:.4g} -> "
          f"{report.losses[-1]:.4g}); wrote {ckpt}")
    return 0


def _surrogates(cfg, args):
    """(name -> surrogate) for the models being compared."""
    out = {}
    if args.dpa:
        out["dpa-wno"] = tr.AugmentedSurrogate(cfg.partial_spec(),
                                               wno_mod.WnoModel.load(args.dpa),
                                               workers=args.workers)
    if getattr(args, "data_only", None):
        out["data-only"] = tr.AugmentedSurrogate(cfg.data_only_spec(),
                                                 wno_mod.WnoModel.load(args.data_only),
                                                 workers=args.workers)
    out["physics-only"] = tr.PhysicsSurrogate(cfg.partial_spec(), workers=args.workers)
    return out


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    out = _ensure_outdir(args.out)
    test = dg.load(os.path.join(args.data, "test.dpds"))
    truth = test.trajectories
    steps = min(cfg.eval_steps, test.n_steps)
    horizon = test.n_steps
    surrogates = _surrogates(cfg, args)
    probe_x, _ = cfg.probes()[0]
    grid = cfg.partial_spec().grid()
    index, snapped = uq.nearest_grid_index(grid, probe_x)
    snap_steps = [t for t in cfg.snapshots() if t <= test.n_steps]

    truth_probe = np.stack(
        [uq.probe_trajectories(truth, index, t) for t in range(1, steps + 1)])
    rows = []
    snapshot_fields = {}
    for name, sur in surrogates.items():
        stats = tr.rollout_statistics(sur, test.ics, horizon,
                                      probe_index=index, snapshots=snap_steps,
                                      truth=truth, mse_steps=steps)
        er2 = uq.mean_hellinger_from_samples(stats["probe"][:steps], truth_probe)
        rows.append((name, stats["mse"], er2, str(int(np.sum(stats["diverged"])))))
        snapshot_fields[name] = stats["snapshots"]
    _write_csv(os.path.join(out, "metrics.csv"),
               ["model", "er1_mse", "er2_mean_hellinger", "diverged"], rows)

    for t_snap in snap_steps:
        header, cols = ["x"], [np.asarray(grid[0] if isinstance(grid, tuple) else grid)]
        if isinstance(grid, tuple):
            x, y = grid
            gx, gy = np.meshgrid(x, y)
            header, cols = ["x", "y"], [gx.ravel(), gy.ravel()]
        for i in range(min(3, truth.shape[0])):
            header.append(f"true_s{i}")
            cols.append(truth[i, t_snap, 0].ravel())
            for name in surrogates:
                header.append(f"{name}_s{i}")
                cols.append(snapshot_fields[name][t_snap][i, 0].ravel())
        _write_csv(os.path.join(out, f"snapshot_t{t_snap}.csv"), header,
                   list(zip(*cols)))
    _write_sidecar(os.path.join(out, "evaluate.meta.json"), {
        "config": cfg.name, "steps": steps,
        "probe_x": snapped, "probe_index": index,
        "models": sorted(surrogates),
    })
    print(f"wrote {out}/metrics.csv for {', '.join(rows[i][0] for i in range(len(rows)))}")
    return 0


def _density_or_delta(samples):
    try:
        return uq.estimate_pdf(samples)
    except DpawnoError:
        v = float(samples[0])
        eps = max(1e-6, 1e-6 * abs(v))
        return uq.Density(np.array([v - eps, v, v + eps]),
                          np.array([0.0, 1.0, 0.0]), eps)


def cmd_uq(args) -> int:
    cfg = _load_cfg(args)
    out = _ensure_outdir(args.out)
    test = dg.load(os.path.join(args.data, "test.dpds"))
    surrogates = _surrogates(cfg, args)
    grid = cfg.partial_spec().grid()
    meta = {"config": cfg.name, "probes": []}
    for k, (x_star, t_star) in enumerate(cfg.probes()):
        if t_star > test.n_steps:
            raise UsageError(
                f"probe step {t_star} beyond test trajectories ({test.n_steps})")
        index, snapped = uq.nearest_grid_index(grid, x_star)
        densities = {"truth": _density_or_delta(
            uq.probe_trajectories(test.trajectories, index, t_star))}
        for name, sur in surrogates.items():
            stats = tr.rollout_statistics(sur, test.ics, t_star,
                                          probe_index=index)
            densities[name] = _density_or_delta(stats["probe"][t_star - 1])
        lo = min(d.support[0] for d in densities.values())
        hi = max(d.support[-1] for d in densities.values())
        bins = max(len(d.support) for d in densities.values())
        rebinned = {n: uq.rebin(d, lo, hi, bins) for n, d in densities.items()}
        support = rebinned["truth"].support
        _write_csv(
            os.path.join(out, f"pdf_probe{k}.csv"),
            ["support", "mass_model", "mass_truth", "mass_partial", "mass_dataonly"],
            [(s,
              rebinned.get("dpa-wno", rebinned["truth"]).mass[i],
              rebinned["truth"].mass[i],
              rebinned["physics-only"].mass[i],
              rebinned.get("data-only", rebinned["truth"]).mass[i])
             for i, s in enumerate(support)])
        meta["probes"].append({"x": snapped, "t": t_star, "index": index,
                               "bandwidths": {n: d.bandwidth
                                              for n, d in densities.items()}})
    _write_sidecar(os.path.join(out, "uq.meta.json"), meta)
    print(f"wrote {len(cfg.probes())} PDF tables to {out}")
    return 0


def cmd_reliability(args) -> int:
    cfg = _load_cfg(args)
    out = _ensure_outdir(args.out)
    grf = cfg.grf_spec()
    ls = cfg.limit_state()
    n = cfg.reliability_n
    full = cfg.full_spec()
    candidates = {"exact": tr.PhysicsSurrogate(full, workers=args.workers)}
    if args.dpa:
        candidates["dpa-wno"] = tr.AugmentedSurrogate(
            cfg.partial_spec(), wno_mod.WnoModel.load(args.dpa), workers=args.workers)
    lines = []
    for name in sorted(candidates):
        report = rel.estimate_reliability(
            candidates[name], grf, ls, n, cfg.seed, full,
            diverged_as_failure=cfg.diverged_as_failure)
        lines.append(report.to_json(
            model=name, kernel=grf.kernel, alpha=grf.alpha,
            length_scale=grf.length_scale, periodicity=grf.periodicity,
            g_t=ls.threshold, horizon=ls.horizon))
        print(f"{name}: reliability {report.reliability * 100:.2f}% "
              f"({report.failures}/{n} failures, {report.diverged} diverged)")
    with open(os.path.join(out, "reliability.jsonl"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def cmd_gradcheck(args) -> int:
    names = PRESETS if args.all else (args.preset or "burgers1d-missing-diffusion-desk",)
    if isinstance(names, str):
        names = (names,)
    worst_overall = 0.0
    for name in names:
        cfg = load_config(preset=name, overrides=args.set or ())
        errors = gc.gradient_fidelity(cfg.partial_spec(), seed=args.seed)
        worst = max(errors.values())
        worst_overall = max(worst_overall, worst)
        status = "ok" if worst < 1e-5 else "FAIL"
        print(f"{name}: max relative gradient error {worst:.3e} [{status}]")
        if args.verbose:
            for block, err in sorted(errors.items()):
                print(f"    {block}: {err:.3e}")
    if worst_overall >= 1e-5:
        raise NonFiniteLoss(
            f"gradient fidelity {worst_overall:.3e} exceeds 1e-5")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpawno",
        description=(
            "Differentiable PDE stepping with a learnable wavelet-operator "
            "correction: data generation, training, evaluation, uncertainty "
            "quantification, and Monte Carlo reliability analysis."),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=CONFIG_KEYS_HELP)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate train/test ground truth",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog=CONFIG_KEYS_HELP)
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a model against stored ground truth",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog=CONFIG_KEYS_HELP)
    _add_common(p)
    p.add_argument("--data", required=True, help="directory with train.dpds")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("dpa", "data-only", "physics-only"),
                   default="dpa",
                   help="dpa: partial physics + correction; data-only: pure "
                        "next-step operator; physics-only: identity checkpoint")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="ensemble error metrics and snapshots",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog=CONFIG_KEYS_HELP)
    _add_common(p)
    p.add_argument("--data", required=True, help="directory with test.dpds")
    p.add_argument("--dpa", help="trained checkpoint")
    p.add_argument("--data-only", dest="data_only", help="data-only checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("uq", help="response PDFs at the configured probes",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog=CONFIG_KEYS_HELP)
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--dpa", help="trained checkpoint")
    p.add_argument("--data-only", dest="data_only", help="data-only checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_uq)

    p = sub.add_parser("reliability", help="Monte Carlo failure probability",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog=CONFIG_KEYS_HELP)
    _add_common(p)
    p.add_argument("--dpa", help="trained checkpoint (exact solver always runs)")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_reliability)

    p = sub.add_parser("gradcheck", help="reduced-size gradient fidelity suite")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--all", action="store_true", help="run every preset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except (UsageError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (NonFiniteLoss, NonFiniteState, NonFiniteValue,
            NotPositiveDefinite) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DatasetIoError, ChecksumMismatch, FormatVersionMismatch,
            OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
