"""Command-line front end: deterministic seed sweeps over the experiment
harness and the bound calculators, with CSV / summary-JSON / SVG artifacts.

Exit codes: 0 ok, 1 config error (field-level message on stderr), 2 partial
failure (some sweep cells failed; survivors are still written).
"""

from __future__ import annotations

import argparse
import json
import math
import multiprocessing
import os
import sys
import traceback
from dataclasses import asdict, replace

import numpy as np

from . import data, harness, nn, pruning, records, saturator, theory
from .rng import derive_seed

FORMATS = ("csv", "json", "svg")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # exit discipline: 1 = config error (argparse's default exit(2) is
    # reserved for partial sweep failure)
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: config error: {message}\n")
        sys.exit(1)


def _split_csv(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _as_floats(value):
    items = value if isinstance(value, (list, tuple)) else _split_csv(value)
    try:
        return [float(v) for v in items]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected a comma list of numbers, got {value!r}") from exc


def _as_ints(value):
    items = value if isinstance(value, (list, tuple)) else _split_csv(value)
    try:
        return tuple(int(v) for v in items)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected a comma list of integers, got {value!r}") from exc


def _as_strs(value):
    return list(value) if isinstance(value, (list, tuple)) else _split_csv(value)


# ---- sweep cells (top-level: must pickle for the worker pool) ---------------


def _dataset_from_payload(p) -> data.Dataset:
    if p["kind"] == "gaussian":
        return data.gaussian_random_labels(p["n"], p["d"], p["seed"])
    return data.Dataset(
        X=np.asarray(p["X"], dtype=float),
        y=np.asarray(p["y"], dtype=float),
        z=np.asarray(p["z"], dtype=float),
        component=np.asarray(p["component"]),
        seed=p["seed"],
    )


def _memcap_cell(
    net_spec,
    dataset_payload,
    method,
    keep,
    work_seed,
    record_seed,
    train_kw,
    retrain_from_init,
    drop_rate,
):
    ds = _dataset_from_payload(dataset_payload)
    cfg = nn.TrainConfig(**train_kw)
    res = harness.memorization_capacity(
        tuple(net_spec),
        ds,
        method,
        keep,
        work_seed,
        train_cfg=cfg,
        retrain_from_init=retrain_from_init,
        drop_rate=drop_rate,
    )
    recs = [
        records.ExperimentRecord(
            method, keep, record_seed, res.epochs, "memorized_fraction", res.fraction
        ),
        records.ExperimentRecord(
            method, keep, record_seed, res.epochs, "collapsed", float(res.collapsed)
        ),
    ]
    if math.isfinite(res.final_loss):
        recs.append(
            records.ExperimentRecord(
                method, keep, record_seed, res.epochs, "final_loss", res.final_loss
            )
        )
    return recs


def _trace_cell(spec_kw, label, record_seed):
    spec = harness.TraceSpec(**spec_kw)
    out = []
    for rec in harness.imp_correlation_trace(spec):
        method = label if label is not None else rec.method
        out.append(replace(rec, method=method, seed=record_seed))
    return out


def _mi_cell(method, keep, num_datasets, init_seed, record_seed, loss, drop_rate, head):
    keys = harness.toy_mask_samples(method, keep, num_datasets, init_seed, loss=loss, drop_rate=drop_rate)
    h_head, h_all, converged = harness.entropy_stability(keys, head=head)
    mk = lambda epoch, metric, value: records.ExperimentRecord(
        method, keep, record_seed, epoch, metric, float(value)
    )
    return [
        mk(num_datasets, "mask_entropy_bits", h_all),
        mk(min(head, num_datasets), "mask_entropy_head_bits", h_head),
        mk(num_datasets, "entropy_gap_bits", abs(h_all - h_head)),
        mk(num_datasets, "distinct_masks", len(set(keys))),
        mk(num_datasets, "entropy_converged", converged),
    ]


_CELL_FNS = {"memcap": _memcap_cell, "imp-trace": _trace_cell, "mi-toy": _mi_cell}


def _run_cell(payload):
    name, idx, kw = payload
    try:
        return idx, None, _CELL_FNS[name](**kw)
    except Exception:
        return idx, traceback.format_exc(limit=4), None


def _map_cells(name, cells, workers):
    """Run cells in a worker pool (inline when workers <= 1); single writer:
    results come back to the caller, nothing is written from workers."""
    payloads = [(name, i, kw) for i, kw in enumerate(cells)]
    if workers <= 1 or len(payloads) <= 1:
        return [_run_cell(p) for p in payloads]
    with multiprocessing.Pool(min(workers, len(payloads))) as pool:
        return list(pool.imap_unordered(_run_cell, payloads))


def _collect(name, cells, labels, workers):
    recs, failures = [], []
    for idx, err, cell_recs in _map_cells(name, cells, workers):
        if err is None:
            recs.extend(cell_recs)
        else:
            failures.append({"cell": labels[idx], "error": err})
    return recs, failures


# ---- artifact writing -------------------------------------------------------


def _keep_series(summary, metric):
    series = []
    for method, by_keep in sorted(summary.get(metric, {}).items()):
        pts = sorted((float(k), v) for k, v in by_keep.items())
        xs = [k for k, _ in pts]
        ys = [v["mean"] for _, v in pts]
        yerr = [v["stderr"] or 0.0 for _, v in pts]
        series.append((method, xs, ys, yerr))
    return series


def _epoch_series(recs, metric):
    groups = {}
    for r in recs:
        if r.metric == metric:
            groups.setdefault(r.method, {}).setdefault(r.epoch, []).append(r.value)
    series = []
    for method in sorted(groups):
        pts = sorted(groups[method].items())
        xs = [float(e) for e, _ in pts]
        stats = [records.mean_stderr(vals) for _, vals in pts]
        series.append(
            (method, xs, [s[0] for s in stats], [s[1] or 0.0 for s in stats])
        )
    return series


def _emit_sweep(args, name, recs, failures, x_axis):
    os.makedirs(args.out, exist_ok=True)
    stem = args.tag or name
    formats = _as_strs(args.formats)
    for f in formats:
        if f not in FORMATS:
            raise ConfigError(f"formats: unknown format {f!r}, expected subset of {FORMATS}")
    recs = records.sort_records(recs)
    if "csv" in formats:
        records.write_records_csv(recs, os.path.join(args.out, f"{stem}.csv"))
    summary = records.summarize(recs)
    if "json" in formats:
        records.write_summary_json(summary, os.path.join(args.out, f"{stem}_summary.json"))
    if "svg" in formats:
        for metric in sorted(summary):
            series = (
                _keep_series(summary, metric)
                if x_axis == "keep"
                else _epoch_series(recs, metric)
            )
            records.write_svg_lines(
                os.path.join(args.out, f"{stem}_{metric}.svg"),
                series,
                title=f"{name}: {metric}",
                xlabel=x_axis,
                ylabel=metric,
            )
    if failures:
        with open(os.path.join(args.out, f"{stem}_failures.json"), "w") as fh:
            json.dump(failures, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for f in failures:
            sys.stderr.write(f"cell failed: {f['cell']}\n")
        return 2
    return 0


def _write_report(args, name, report) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if "json" in _as_strs(args.formats) and args.out:
        os.makedirs(args.out, exist_ok=True)
        stem = args.tag or name
        with open(os.path.join(args.out, f"{stem}.json"), "w") as fh:
            fh.write(text + "\n")


# ---- subcommand runners ------------------------------------------------------


def _check_methods(methods):
    for m in methods:
        if m not in pruning.METHODS:
            raise ConfigError(f"methods: unknown method {m!r}, expected one of {pruning.METHODS}")
    return methods


def _check_keeps(keeps):
    for k in keeps:
        if not 0 < k <= 1:
            raise ConfigError(f"keeps: keep fractions must be in (0, 1], got {k}")
    return keeps


def _check_common(args) -> None:
    if args.num_seeds < 1:
        raise ConfigError("num_seeds: must be >= 1")
    if args.workers < 1:
        raise ConfigError("workers: must be >= 1")


def _cmd_memcap(args) -> int:
    _check_common(args)
    methods = _check_methods(_as_strs(args.methods))
    keeps = _check_keeps(_as_floats(args.keeps))
    if (args.idx_images is None) != (args.idx_labels is None):
        raise ConfigError("idx_images/idx_labels: both or neither must be given")
    train_kw = dict(
        loss=args.loss,
        optimizer=args.optimizer,
        learning_rate=args.lr,
        batch_size=None,
        max_epochs=args.max_epochs,
        loss_tol=args.loss_tol,
    )
    base = None
    if args.idx_images is not None:
        full = data.idx_dataset(args.idx_images, args.idx_labels)
        lim = args.limit if args.limit > 0 else full.n
        base = data.Dataset(
            X=full.X[:lim], y=full.y[:lim], z=full.z[:lim],
            component=full.component[:lim], seed=full.seed,
        )
        net_spec = (base.d, args.hidden, args.hidden, 1)
    else:
        net_spec = (args.d, args.hidden, args.hidden, 1)
    cells, labels = [], []
    for i in range(args.num_seeds):
        work_seed = derive_seed(args.master_seed, "memcap", i)
        if base is None:
            dpay = {"kind": "gaussian", "n": args.n, "d": args.d,
                    "seed": derive_seed(work_seed, "data")}
        else:
            ds = base
            if args.input_noise > 0:
                ds = data.noisify_inputs(base, args.input_noise, derive_seed(work_seed, "noise"))
            dpay = {"kind": "arrays", "X": ds.X, "y": ds.y, "z": ds.z,
                    "component": ds.component, "seed": ds.seed}
        for method in methods:
            for keep in keeps:
                cells.append(dict(
                    net_spec=list(net_spec),
                    dataset_payload=dpay,
                    method=method,
                    keep=keep,
                    work_seed=work_seed,
                    record_seed=i,
                    train_kw=train_kw,
                    retrain_from_init=not args.finetune,
                    drop_rate=args.drop_rate,
                ))
                labels.append(f"memcap method={method} keep={keep:g} seed={i}")
    recs, failures = _collect("memcap", cells, labels, args.workers)
    return _emit_sweep(args, "memcap", recs, failures, x_axis="keep")


def _cmd_imp_trace(args) -> int:
    _check_common(args)
    lrs = _as_floats(args.lrs) if args.lrs else None
    noises = _as_floats(args.gradient_noises) if args.gradient_noises else None
    if lrs and noises:
        raise ConfigError("lrs/gradient_noises: give at most one sweep at a time")
    sweep = [(None, None)]
    if lrs:
        sweep = [(f"lr={v:g}", {"learning_rate": v}) for v in lrs]
    elif noises:
        sweep = [(f"gnoise={v:g}", {"gradient_noise_scale": v}) for v in noises]
    base_kw = dict(
        n=args.n,
        d=args.d,
        noise_var=args.noise_var,
        student_dims=_as_ints(args.student),
        teacher_dims=_as_ints(args.teacher),
        drop_rate=args.drop_rate,
        rounds=args.rounds,
        epochs_per_round=args.epochs_per_round,
        learning_rate=args.lr,
        optimizer=args.optimizer,
        loss=args.loss,
        gradient_noise_scale=args.gradient_noise,
        fresh_samples=args.fresh_samples,
        eval_every=args.eval_every,
        prune=not args.no_prune,
    )
    cells, labels = [], []
    for label, override in sweep:
        for i in range(args.num_seeds):
            kw = dict(base_kw, seed=derive_seed(args.master_seed, "trace", label or "", i))
            if override:
                kw.update(override)
            cells.append(dict(spec_kw=kw, label=label, record_seed=i))
            labels.append(f"imp-trace {label or 'run'} seed={i}")
    recs, failures = _collect("imp-trace", cells, labels, args.workers)
    return _emit_sweep(args, "imp-trace", recs, failures, x_axis="epoch")


def _cmd_mi_toy(args) -> int:
    _check_common(args)
    methods = _check_methods(_as_strs(args.methods))
    if "random" in methods:
        raise ConfigError("methods: 'random' has no deterministic mask given (init, dataset)")
    keeps = _check_keeps(_as_floats(args.keeps))
    if args.num_datasets < 1:
        raise ConfigError("num_datasets: must be >= 1")
    cells, labels = [], []
    for i in range(args.num_seeds):
        init_seed = derive_seed(args.master_seed, "toy-init", i)
        for method in methods:
            for keep in keeps:
                cells.append(dict(
                    method=method,
                    keep=keep,
                    num_datasets=args.num_datasets,
                    init_seed=init_seed,
                    record_seed=i,
                    loss=args.loss,
                    drop_rate=args.drop_rate,
                    head=args.head,
                ))
                labels.append(f"mi-toy method={method} keep={keep:g} init={i}")
    recs, failures = _collect("mi-toy", cells, labels, args.workers)
    return _emit_sweep(args, "mi-toy", recs, failures, x_axis="keep")


def _cmd_saturate(args) -> int:
    try:
        inst = saturator.build_saturating(args.n, args.d, args.p, args.master_seed)
    except ValueError as exc:
        raise ConfigError(str(exc))
    except RuntimeError as exc:
        sys.stderr.write(f"saturate: {exc}\n")
        return 2
    rep = saturator.verify_saturating(inst)
    lip = (
        saturator.estimate_lipschitz(inst, samples=args.lipschitz_samples, seed=args.master_seed)
        if args.lipschitz_samples > 0
        else None
    )
    report = {
        "n": inst.n,
        "d": inst.d,
        "p": inst.p,
        "seed": inst.seed,
        "build_attempts": inst.build_attempts,
        "passed": rep.passed,
        "failures": rep.failures,
        "checks": rep.checks,
        "lipschitz_estimate": lip,
        "mi_account": saturator.saturating_mi_account(
            inst, W_diam=args.weight_diam, J=args.param_lipschitz, eps=args.eps
        ),
    }
    _write_report(args, "saturate", report)
    return 0


def _cmd_bounds(args) -> int:
    try:
        with open(args.inputs) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"inputs: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"inputs: not valid JSON ({exc})")
    if not isinstance(doc, dict):
        raise ConfigError("inputs: expected a JSON object of BoundInputs fields")
    try:
        bi = theory.BoundInputs(**doc)
    except TypeError as exc:
        raise ConfigError(f"inputs: {exc}")
    except ValueError as exc:
        raise ConfigError(f"inputs: {exc}")
    ent = theory.entropy_upper_bound(bi.p, bi.gamma)
    pc = (
        theory.peff_continuous(bi.I_bits, bi.gamma * bi.p, bi.W_diam, bi.J, bi.eps)
        if bi.eps > 0
        else None
    )
    peff = pc if pc is not None else bi.I_bits
    lip = theory.lipschitz_lower_bound(bi, peff)
    try:
        vc = theory.vc_mi_bound(bi.d, bi.n, bi.I_bits, bi.delta)
        vc_note = "evaluated with d_vc=d, m=n"
    except ValueError as exc:
        vc, vc_note = None, str(exc)
    report = {
        "inputs": asdict(bi),
        "c0": theory.c0(bi),
        "entropy_cap_bits": {"exact": ent.exact_bits, "asymptotic": ent.asymptotic_bits},
        "peff_ratio_bits": theory.peff_ratio(bi.gamma) if bi.gamma < 1 else None,
        "peff_continuous": pc,
        "peff_used": peff,
        "lipschitz_lower_bound": {
            "value": lip.value,
            "precondition_ok": lip.precondition_ok,
            "precondition_lhs": lip.precondition_lhs,
            "precondition_rhs": lip.precondition_rhs,
        },
        "lemma1_rhs": theory.lemma1_rhs(
            2.0 * bi.sigma2, theory.bits_to_nats(bi.I_bits), bi.delta
        ),
        "vc_mi_bound": vc,
        "vc_mi_bound_note": vc_note,
    }
    _write_report(args, "bounds", report)
    return 0


_DATA_FREE = ("magnitude_init", "synflow")


def _cmd_prune(args) -> int:
    if args.method not in pruning.METHODS:
        raise ConfigError(f"method: unknown method {args.method!r}")
    try:
        net = nn.load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise ConfigError(f"checkpoint: {exc}")
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"checkpoint: not a valid checkpoint ({exc})")
    ds = None
    if args.data is not None:
        try:
            ds = data.dataset_from_csv(args.data)
        except OSError as exc:
            raise ConfigError(f"data: {exc}")
    elif args.synthetic_n > 0:
        ds = data.gaussian_random_labels(
            args.synthetic_n, net.layer_dims[0], derive_seed(args.master_seed, "data")
        )
    if ds is None and args.method not in _DATA_FREE and args.method != "random":
        raise ConfigError(f"data: method {args.method!r} needs --data or --synthetic-n")
    cfg = nn.TrainConfig(
        loss=args.loss,
        optimizer=args.optimizer,
        learning_rate=args.lr,
        batch_size=None,
        max_epochs=args.max_epochs,
        loss_tol=args.loss_tol,
    )
    if not 0 < args.keep <= 1:
        raise ConfigError(f"keep: must be in (0, 1], got {args.keep}")
    mask = harness.derive_mask(
        net,
        ds,
        args.method,
        args.keep,
        seed=derive_seed(args.master_seed, "mask"),
        train_cfg=cfg,
        drop_rate=args.drop_rate,
        synflow_iterations=args.synflow_iterations,
    )
    mask.apply_to(net)
    os.makedirs(args.out, exist_ok=True)
    stem = args.tag or "prune"
    report = {
        "method": args.method,
        "keep": args.keep,
        "kept": mask.count,
        "total": net.num_weights,
        "per_layer_kept": list(mask.per_layer_counts()),
        "collapsed_layers": list(mask.collapsed_layers()),
        "bits": mask.bits.astype(int).tolist(),
    }
    _write_report(args, f"{stem}_mask", report)
    ckpt = os.path.join(args.out, f"{stem}_checkpoint.json")
    nn.save_checkpoint(net, ckpt)
    return 0


_RUNNERS = {
    "memcap": _cmd_memcap,
    "imp-trace": _cmd_imp_trace,
    "mi-toy": _cmd_mi_toy,
    "saturate": _cmd_saturate,
    "bounds": _cmd_bounds,
    "prune": _cmd_prune,
}


# ---- parser -----------------------------------------------------------------


def _build_parser():
    io_parent = argparse.ArgumentParser(add_help=False)
    io_parent.add_argument("--config", help="flat JSON config file; explicit flags override it")
    io_parent.add_argument("--out", default=".", help="output directory")
    io_parent.add_argument("--formats", default="csv,json",
                           help="comma subset of csv,json,svg")
    io_parent.add_argument("--tag", default=None, help="output filename stem")
    io_parent.add_argument("--master-seed", type=int, default=0)

    sweep_parent = argparse.ArgumentParser(add_help=False)
    sweep_parent.add_argument("--num-seeds", type=int, default=10)
    sweep_parent.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                              help="worker processes; 1 = run inline")

    parser = _Parser(prog="sparsecap", description=__doc__)
    subs = parser.add_subparsers(dest="cmd", parser_class=_Parser)
    registry = {}

    p = subs.add_parser("memcap", parents=[io_parent, sweep_parent],
                        help="memorization capacity vs. keep fraction per pruning method")
    p.add_argument("--n", type=int, default=30, help="training points (synthetic task)")
    p.add_argument("--d", type=int, default=30, help="input dimension (synthetic task)")
    p.add_argument("--hidden", type=int, default=24, help="hidden width of the d->h->h->1 net")
    p.add_argument("--methods", default=",".join(pruning.METHODS))
    p.add_argument("--keeps", default="1.0,0.8,0.6,0.4,0.2,0.1,0.05")
    p.add_argument("--loss", choices=nn.LOSSES, default="bce")
    p.add_argument("--optimizer", choices=nn.OPTIMIZERS, default="sgd")
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--max-epochs", type=int, default=8000)
    p.add_argument("--loss-tol", type=float, default=5e-3)
    p.add_argument("--drop-rate", type=float, default=0.2, help="per-round drop for imp")
    p.add_argument("--finetune", action="store_true",
                   help="magnitude_after keeps trained weights instead of rewinding")
    p.add_argument("--idx-images", default=None, help="IDX image file (image task)")
    p.add_argument("--idx-labels", default=None, help="IDX label file (image task)")
    p.add_argument("--limit", type=int, default=512, help="image rows to keep (0 = all)")
    p.add_argument("--input-noise", type=float, default=0.0,
                   help="variance of Gaussian noise added to image inputs")
    registry["memcap"] = p

    p = subs.add_parser("imp-trace", parents=[io_parent, sweep_parent],
                        help="noise-correlation trace across iterative pruning rounds")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--noise-var", type=float, default=1.0)
    p.add_argument("--student", default="50,100,100,100,100,1")
    p.add_argument("--teacher", default="50,50,50,1")
    p.add_argument("--drop-rate", type=float, default=0.2)
    p.add_argument("--rounds", type=int, default=16)
    p.add_argument("--epochs-per-round", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=nn.OPTIMIZERS, default="adam")
    p.add_argument("--loss", choices=nn.LOSSES, default="mse")
    p.add_argument("--gradient-noise", type=float, default=0.0)
    p.add_argument("--fresh-samples", type=int, default=2000)
    p.add_argument("--eval-every", type=int, default=1,
                   help="epochs between correlation evals (0 = leg boundaries only)")
    p.add_argument("--no-prune", action="store_true", help="dense control run")
    p.add_argument("--lrs", default=None, help="sweep: comma list of learning rates")
    p.add_argument("--gradient-noises", default=None,
                   help="sweep: comma list of gradient noise scales")
    registry["imp-trace"] = p

    p = subs.add_parser("mi-toy", parents=[io_parent, sweep_parent],
                        help="exact mask entropy on the tiny hypercube task")
    p.add_argument("--methods", default="magnitude_after,snip,grasp,synflow,imp")
    p.add_argument("--keeps", default="0.5")
    p.add_argument("--loss", choices=nn.LOSSES, default="mse")
    p.add_argument("--num-datasets", type=int, default=4000)
    p.add_argument("--head", type=int, default=1000,
                   help="prefix size for the entropy stability check")
    p.add_argument("--drop-rate", type=float, default=0.2)
    registry["mi-toy"] = p

    p = subs.add_parser("saturate", parents=[io_parent],
                        help="build + verify the planted high-capacity sparse layer")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--d", type=int, default=400)
    p.add_argument("--p", type=int, default=2000)
    p.add_argument("--lipschitz-samples", type=int, default=200,
                   help="random pairs for the Lipschitz estimate (0 = skip)")
    p.add_argument("--weight-diam", type=float, default=1.0)
    p.add_argument("--param-lipschitz", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.01)
    registry["saturate"] = p

    p = subs.add_parser("bounds", parents=[io_parent],
                        help="evaluate every closed-form bound on a JSON input document")
    p.add_argument("--inputs", required=True, help="JSON file of BoundInputs fields")
    registry["bounds"] = p

    p = subs.add_parser("prune", parents=[io_parent],
                        help="apply one pruning method to a saved checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--method", required=True)
    p.add_argument("--keep", type=float, required=True)
    p.add_argument("--data", default=None, help="dataset CSV (as written by the datagen module)")
    p.add_argument("--synthetic-n", type=int, default=0,
                   help="draw this many synthetic Gaussian rows instead of --data")
    p.add_argument("--loss", choices=nn.LOSSES, default="bce")
    p.add_argument("--optimizer", choices=nn.OPTIMIZERS, default="sgd")
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--max-epochs", type=int, default=8000)
    p.add_argument("--loss-tol", type=float, default=5e-3)
    p.add_argument("--drop-rate", type=float, default=0.2)
    p.add_argument("--synflow-iterations", type=int, default=100)
    registry["prune"] = p

    return parser, registry


def _merge_config(parser, registry, argv, args):
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: not valid JSON ({exc})")
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a flat JSON object")
    sub = registry[args.cmd]
    dests = {a.dest for a in sub._actions}
    for key in cfg:
        if key not in dests:
            raise ConfigError(f"config: unknown field {key!r} for subcommand {args.cmd!r}")
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser, registry = _build_parser()
    args = parser.parse_args(argv)
    if args.cmd is None:
        parser.error("a subcommand is required (memcap, imp-trace, mi-toy, saturate, bounds, prune)")
    try:
        if args.config:
            args = _merge_config(parser, registry, argv, args)
        return _RUNNERS[args.cmd](args)
    except ConfigError as exc:
        sys.stderr.write(f"sparsecap {args.cmd}: config error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
