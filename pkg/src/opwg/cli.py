"""Command-line entry points: generate, cluster, bench, segment, select-lambda.

Exit codes: 0 on success, 1 for usage or configuration errors (including
penalty-bound violations), 2 for runtime failures. The master seed comes from
--seed, falling back to the OPWG_SEED environment variable, then 0; all
randomness is derived from it through named substreams. Every command writes a
sidecar JSON echoing the effective configuration next to its outputs.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import datasets as ds_mod
from . import metrics as metrics_mod
from .em import ConfigError, PwgConfig, WeightedDataset, fit
from .imageseg import read_image, segment, write_image
from .rng import derive_seed
from .selection import lambda_bound, select_lambda
from .stream import OpwgConfig, StreamState, finalize, predict, process_batch

ALGORITHMS = ("opwg", "pgmm", "wgmm", "gmm")
BENCH_DEFAULT_ALGORITHMS = ("opwg", "pgmm", "gmm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1, not argparse's default 2
        raise UsageError(message)


def _master_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("OPWG_SEED")
    return int(env) if env else 0


def _parse_grid(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as err:
        raise UsageError(f"bad grid {text!r}: {err}") from None


def _load_config_file(path: str) -> dict:
    """Key = value lines; '#' starts a comment; keys use flag spelling."""
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"bad config line {raw!r} in {path}")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser):
    """Fill args from --config for every flag not given on the command line."""
    if getattr(args, "config", None) is None:
        return
    file_values = _load_config_file(args.config)
    given = set(getattr(args, "_explicit", ()))
    for action in parser._actions:
        dest = action.dest
        if dest in ("help", "config") or dest not in file_values:
            continue
        if dest in given:
            continue  # command-line flags win
        text = file_values[dest]
        convert = action.type if action.type is not None else str
        try:
            setattr(args, dest, convert(text))
        except (TypeError, ValueError) as err:
            raise UsageError(f"bad config value {dest}={text!r}: {err}") from None


class _TrackExplicit(argparse.Action):
    """Record which options were given explicitly so config files can defer."""

    def __call__(self, parser, namespace, values, option_string=None):
        explicit = getattr(namespace, "_explicit", set())
        explicit.add(self.dest)
        namespace._explicit = explicit
        setattr(namespace, self.dest, values)


def _add(parser, *names, **kwargs):
    kwargs.setdefault("action", _TrackExplicit)
    parser.add_argument(*names, **kwargs)


def _write(path, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _sidecar(path, command: str, seed: int, config: dict, outputs: list[str]):
    doc = {"command": command, "seed": seed, "config": config, "outputs": outputs}
    _write(path, json.dumps(doc, indent=2))


def _effective(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys if hasattr(args, k)}


# ---------------------------------------------------------------------------
# algorithm runners (top-level so bench jobs can be pickled)


def _build_opwg_config(args, seed: int) -> OpwgConfig:
    online = PwgConfig(
        k_max=args.k_max,
        lam=args.lam,
        epsilon=args.epsilon,
        covariance_kind=args.cov,
        max_iterations=args.max_iter,
        tolerance=args.tol,
        rng_seed=derive_seed(seed, "init", "online"),
    )
    offline_lam = args.offline_lam if args.offline_lam is not None else args.lam
    offline = PwgConfig(
        k_max=args.k_max,
        lam=offline_lam,
        epsilon=args.epsilon,
        covariance_kind=args.offline_cov,
        max_iterations=args.max_iter,
        tolerance=args.tol,
        rng_seed=derive_seed(seed, "init", "offline"),
    )
    grid = _parse_grid(args.offline_grid) if args.offline_grid else None
    return OpwgConfig(
        online=online,
        offline=offline,
        offline_lambda_grid=grid,
        prototype_weight_rule=args.weight_rule,
    )


def _check_bound(lam: float, k_max: int, dim: int, cov: str, what: str):
    bound = lambda_bound(k_max, dim, cov)
    if not 0.0 <= lam < bound:
        raise ConfigError(
            f"{what}: lambda={lam} outside [0, {bound:.6g}) for k_max={k_max}, "
            f"covariance {cov}, dim {dim}"
        )


def _validate_cluster_args(args, dim: int):
    if args.algorithm == "opwg":
        _check_bound(args.lam, args.k_max, dim, args.cov, "online stage")
        if args.offline_grid:
            for lam in _parse_grid(args.offline_grid):
                _check_bound(lam, args.k_max, dim, args.offline_cov, "offline grid")
        else:
            offline_lam = args.offline_lam if args.offline_lam is not None else args.lam
            _check_bound(offline_lam, args.k_max, dim, args.offline_cov, "offline stage")
    elif args.algorithm == "pgmm":
        _check_bound(args.lam, args.k_max, dim, args.cov, "pgmm")
    # wgmm forces lam=0 and gmm is lam=0 at fixed K; both trivially satisfy the bound


def _run_algorithm(algorithm: str, dataset, args, seed: int):
    """Cluster the dataset; returns (labels, k_found, model_json)."""
    points = dataset.points
    if algorithm == "opwg":
        config = _build_opwg_config(args, seed)
        order = ds_mod.StreamOrder(args.mode, args.sort_axis)
        batches = ds_mod.order_and_batch(dataset, order, args.batch, seed=derive_seed(seed, "shuffle"))
        state = StreamState(config)
        for batch in batches:
            process_batch(state, batch)
        result, label_fn = finalize(state)
        return label_fn(points), result.model.active_k, result.model

    data = WeightedDataset.from_points(points)
    if algorithm == "pgmm":
        config = PwgConfig(
            k_max=args.k_max, lam=args.lam, epsilon=args.epsilon, covariance_kind=args.cov,
            max_iterations=args.max_iter, tolerance=args.tol,
            rng_seed=derive_seed(seed, "init", "pgmm"),
        )
    elif algorithm == "wgmm":
        config = PwgConfig(
            k_max=args.k_max, lam=0.0, epsilon=args.epsilon, covariance_kind=args.cov,
            max_iterations=args.max_iter, tolerance=args.tol,
            rng_seed=derive_seed(seed, "init", "wgmm"),
        )
    elif algorithm == "gmm":
        if args.k is None:
            raise UsageError("algorithm 'gmm' needs --k (fixed component count)")
        config = PwgConfig(
            k_max=args.k, lam=0.0, epsilon=args.epsilon, covariance_kind=args.cov,
            max_iterations=args.max_iter, tolerance=args.tol,
            rng_seed=derive_seed(seed, "init", "gmm"),
        )
    else:
        raise UsageError(f"unknown algorithm {algorithm!r}")
    result = fit(data, config)
    return predict(result.model, points), result.model.active_k, result.model


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    seed = _master_seed(args.seed)
    if args.name == "gmm":
        dataset = ds_mod.make_gmm(args.k, args.n, seed=derive_seed(seed, "generator"))
    else:
        dataset = ds_mod.make_suite(args.name, args.n, seed=derive_seed(seed, "generator"))
    _write(args.out, ds_mod.save_csv(dataset))
    meta = _effective(args, ("name", "n", "k"))
    _sidecar(Path(args.out).with_suffix(".meta.json"), "generate", seed, meta, [str(args.out)])
    print(f"wrote {dataset.n} samples, {len(np.unique(dataset.labels))} classes -> {args.out}")
    return 0


def cmd_cluster(args) -> int:
    seed = _master_seed(args.seed)
    dataset = ds_mod.load_csv(Path(args.data).read_text(), name=Path(args.data).stem)
    _validate_cluster_args(args, dataset.points.shape[1])

    started = time.perf_counter()
    labels, k_found, model = _run_algorithm(args.algorithm, dataset, args, seed)
    runtime_ms = (time.perf_counter() - started) * 1000.0

    prefix = args.out
    _write(f"{prefix}.model.json", model.to_json())
    _write(f"{prefix}.labels.csv", "label\n" + "\n".join(str(int(v)) for v in labels) + "\n")
    outputs = [f"{prefix}.model.json", f"{prefix}.labels.csv"]

    line = f"algorithm={args.algorithm} K_found={k_found} runtime_ms={runtime_ms:.1f}"
    if len(np.unique(dataset.labels)) > 1:
        f1 = metrics_mod.pairwise_f1(dataset.labels, labels)
        score = metrics_mod.nmi(dataset.labels, labels)
        line += f" f1={f1:.4f} nmi={score:.4f}"
    print(line)

    keys = ("algorithm", "data", "k_max", "lam", "epsilon", "cov", "offline_cov",
            "offline_lam", "offline_grid", "mode", "sort_axis", "batch", "weight_rule", "k")
    _sidecar(f"{prefix}.meta.json", "cluster", seed, _effective(args, keys), outputs)
    return 0


def _bench_job(payload: dict) -> list[dict]:
    """One (dataset, mode, repetition) cell: run each algorithm on shared data."""
    args = argparse.Namespace(**payload["args"])
    seed = payload["seed"]
    name = payload["dataset"]
    if name.startswith("gmm"):
        dataset = ds_mod.make_gmm(int(name[3:]), payload["n"], seed=derive_seed(seed, "generator"))
    else:
        dataset = ds_mod.make_suite(name, payload["n"], seed=derive_seed(seed, "generator"))

    rows = []
    k_from_pgmm = None
    for algorithm in payload["algorithms"]:
        cell = argparse.Namespace(**vars(args))
        cell.algorithm = algorithm
        cell.mode = payload["mode"]
        if algorithm == "gmm":
            cell.k = k_from_pgmm if k_from_pgmm is not None else args.k_max
        started = time.perf_counter()
        try:
            labels, k_found, _ = _run_algorithm(algorithm, dataset, cell, seed)
            runtime_ms = (time.perf_counter() - started) * 1000.0
            f1 = metrics_mod.pairwise_f1(dataset.labels, labels)
            score = metrics_mod.nmi(dataset.labels, labels)
            row = {
                "dataset": name, "mode": payload["mode"], "algorithm": algorithm,
                "seed": seed, "rep": payload["rep"], "K_found": k_found,
                "f1": f"{f1:.6f}", "nmi": f"{score:.6f}", "runtime_ms": f"{runtime_ms:.1f}",
                "error": "",
            }
            if algorithm == "pgmm":
                k_from_pgmm = k_found
        except Exception as err:  # noqa: BLE001 - record per-row, keep the harness going
            row = {
                "dataset": name, "mode": payload["mode"], "algorithm": algorithm,
                "seed": seed, "rep": payload["rep"], "K_found": "",
                "f1": "", "nmi": "", "runtime_ms": "", "error": str(err),
            }
        rows.append(row)
    return rows


RESULT_COLUMNS = ("dataset", "mode", "algorithm", "seed", "rep", "K_found",
                  "f1", "nmi", "runtime_ms", "error")


def cmd_bench(args) -> int:
    seed = _master_seed(args.seed)
    if args.suite == "suite":
        names = list(ds_mod.SUITE_NAMES)
    elif args.suite == "gmm":
        names = [f"gmm{k}" for k in ds_mod.GMM_COMPONENT_CHOICES]
    elif args.suite == "all":
        names = list(ds_mod.SUITE_NAMES) + [f"gmm{k}" for k in ds_mod.GMM_COMPONENT_CHOICES]
    else:
        names = [args.suite]
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    for algorithm in algorithms:
        if algorithm not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {algorithm!r}")
    # dimension is always 2 for the synthetic suites
    probe = argparse.Namespace(**vars(args))
    for mode in modes:
        probe.mode = mode
        for algorithm in algorithms:
            probe.algorithm = algorithm
            probe.k = args.k_max
            _validate_cluster_args(probe, 2)

    jobs = []
    for name in names:
        for mode in modes:
            for rep in range(args.repeats):
                jobs.append(
                    {
                        "dataset": name, "mode": mode, "rep": rep, "n": args.n,
                        "seed": derive_seed(seed, name, mode, "rep", rep),
                        "algorithms": algorithms,
                        "args": {k: v for k, v in vars(args).items() if k != "_explicit"},
                    }
                )

    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            all_rows = [row for rows in pool.map(_bench_job, jobs) for row in rows]
    else:
        all_rows = [row for job in jobs for row in _bench_job(job)]
    all_rows.sort(key=lambda r: (r["dataset"], r["mode"], r["rep"], r["algorithm"]))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_lines = [",".join(RESULT_COLUMNS)]
    results_lines += [",".join(str(row[c]) for c in RESULT_COLUMNS) for row in all_rows]
    (out_dir / "results.csv").write_text("\n".join(results_lines) + "\n")

    summary = _summarize(all_rows)
    (out_dir / "summary.csv").write_text(summary)
    keys = ("suite", "repeats", "n", "batch", "modes", "algorithms", "k_max", "lam", "jobs")
    _sidecar(out_dir / "meta.json", "bench", seed, _effective(args, keys),
             [str(out_dir / "results.csv"), str(out_dir / "summary.csv")])
    print(summary, end="")
    return 0


def _summarize(rows: list[dict]) -> str:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        if row["error"]:
            continue
        groups.setdefault((row["dataset"], row["mode"], row["algorithm"]), []).append(row)
    lines = ["dataset,mode,algorithm,runs,f1_mean,f1_std,nmi_mean,nmi_std,K_mean,K_std"]
    for key in sorted(groups):
        got = groups[key]
        f1 = np.array([float(r["f1"]) for r in got])
        nm = np.array([float(r["nmi"]) for r in got])
        ks = np.array([float(r["K_found"]) for r in got])
        lines.append(
            f"{key[0]},{key[1]},{key[2]},{len(got)},"
            f"{f1.mean():.4f},{f1.std():.4f},{nm.mean():.4f},{nm.std():.4f},"
            f"{ks.mean():.2f},{ks.std():.2f}"
        )
    return "\n".join(lines) + "\n"


def cmd_segment(args) -> int:
    seed = _master_seed(args.seed)
    image = read_image(args.image)
    grid = _parse_grid(args.offline_grid)
    config = OpwgConfig(
        online=PwgConfig(
            k_max=args.k_max, lam=args.online_lam, covariance_kind=args.cov,
            max_iterations=args.max_iter, tolerance=args.tol,
            rng_seed=derive_seed(seed, "init", "online"),
            lambda_bound_policy="warn",
        ),
        offline=PwgConfig(
            k_max=args.k_max, lam=grid[0], covariance_kind=args.cov,
            max_iterations=args.max_iter, tolerance=args.tol,
            rng_seed=derive_seed(seed, "init", "offline"),
            lambda_bound_policy="warn",
        ),
        offline_lambda_grid=grid,
    )
    label_map = segment(image, config)
    rendering = label_map.render(args.render, image=image)
    write_image(args.out, rendering)

    sidecar = Path(args.out).with_suffix(".json")
    doc = {
        "command": "segment",
        "seed": seed,
        "config": _effective(args, ("image", "k_max", "online_lam", "offline_grid",
                                    "cov", "render", "max_iter", "tol")),
        "k_found": label_map.fit.model.active_k,
        "pixel_counts": label_map.pixel_counts(),
        "model": json.loads(label_map.fit.model.to_json()),
        "outputs": [str(args.out)],
    }
    _write(sidecar, json.dumps(doc, indent=2))
    print(f"segmented {label_map.width}x{label_map.height} image into "
          f"{label_map.fit.model.active_k} clusters -> {args.out}")
    return 0


def cmd_select_lambda(args) -> int:
    seed = _master_seed(args.seed)
    dataset = ds_mod.load_csv(Path(args.data).read_text())
    data = WeightedDataset.from_points(dataset.points)
    config = PwgConfig(
        k_max=args.k_max, lam=0.0, epsilon=args.epsilon, covariance_kind=args.cov,
        max_iterations=args.max_iter, tolerance=args.tol,
        rng_seed=derive_seed(seed, "init", "select"),
    )
    choice = select_lambda(data, config, _parse_grid(args.grid))
    for lam, bic in choice.evaluated:
        marker = " <- selected" if lam == choice.lam else ""
        print(f"lambda={lam:g} bic={bic:.3f}{marker}")
    if args.out:
        _write(args.out, choice.result.model.to_json())
        keys = ("data", "grid", "k_max", "cov", "epsilon")
        _sidecar(Path(args.out).with_suffix(".meta.json"), "select-lambda", seed,
                 _effective(args, keys), [str(args.out)])
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(prog="opwg", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    gen = sub.add_parser("generate", parents=[], help="write a synthetic dataset CSV")
    _add(gen, "name", choices=list(ds_mod.SUITE_NAMES) + ["gmm"])
    _add(gen, "--n", type=int, default=3000)
    _add(gen, "--k", type=int, default=2, help="component count for the gmm generator")
    _add(gen, "--seed", type=int, default=None)
    _add(gen, "--out", required=True)
    _add(gen, "--config", default=None)
    gen.set_defaults(func=cmd_generate)

    def common_fit_flags(p, with_stream: bool):
        _add(p, "--k-max", dest="k_max", type=int, default=25)
        _add(p, "--lambda", dest="lam", type=float, default=0.005)
        _add(p, "--epsilon", type=float, default=1e-6)
        _add(p, "--cov", choices=["diag", "full"], default="diag")
        _add(p, "--max-iter", dest="max_iter", type=int, default=200)
        _add(p, "--tol", type=float, default=1e-6)
        _add(p, "--seed", type=int, default=None)
        _add(p, "--config", default=None)
        if with_stream:
            _add(p, "--mode", choices=["A", "B"], default="A")
            _add(p, "--sort-axis", dest="sort_axis", choices=["x", "y"], default="x")
            _add(p, "--batch", type=int, default=1000)
            _add(p, "--weight-rule", dest="weight_rule",
                 choices=["pi", "pi_times_n"], default="pi_times_n")
            _add(p, "--offline-cov", dest="offline_cov",
                 choices=["diag", "full"], default="full")
            _add(p, "--offline-lambda", dest="offline_lam", type=float, default=None)
            _add(p, "--offline-grid", dest="offline_grid", default=None,
                 help="comma-separated candidates; selection is by BIC")

    clu = sub.add_parser("cluster", help="cluster a CSV dataset")
    _add(clu, "--algorithm", choices=list(ALGORITHMS), default="opwg")
    _add(clu, "--data", required=True)
    _add(clu, "--out", required=True, help="output path prefix")
    _add(clu, "--k", type=int, default=None, help="fixed component count (gmm)")
    common_fit_flags(clu, with_stream=True)
    clu.set_defaults(func=cmd_cluster)

    ben = sub.add_parser("bench", help="run the benchmark grid and write CSVs")
    _add(ben, "--suite", default="gmm",
         help="'suite', 'gmm', 'all', or one dataset name (e.g. blobs, gmm5)")
    _add(ben, "--repeats", type=int, default=3)
    _add(ben, "--n", type=int, default=3000)
    _add(ben, "--modes", default="A,B")
    _add(ben, "--algorithms", default=",".join(BENCH_DEFAULT_ALGORITHMS))
    _add(ben, "--jobs", type=int, default=1)
    _add(ben, "--out", required=True, help="output directory")
    common_fit_flags(ben, with_stream=True)
    ben.set_defaults(func=cmd_bench, batch=100)

    seg = sub.add_parser("segment", help="segment a PNG/PPM image by color")
    _add(seg, "--image", required=True)
    _add(seg, "--out", required=True, help="output image path (.png or .ppm)")
    _add(seg, "--k-max", dest="k_max", type=int, default=25)
    _add(seg, "--online-lambda", dest="online_lam", type=float, default=0.03)
    _add(seg, "--offline-grid", dest="offline_grid", default="0.006,0.005,0.004")
    _add(seg, "--cov", choices=["diag", "full"], default="diag")
    _add(seg, "--render", choices=["palette", "mean-color"], default="palette")
    _add(seg, "--max-iter", dest="max_iter", type=int, default=200)
    _add(seg, "--tol", type=float, default=1e-6)
    _add(seg, "--seed", type=int, default=None)
    _add(seg, "--config", default=None)
    seg.set_defaults(func=cmd_segment)

    sel = sub.add_parser("select-lambda", help="pick the penalty strength by BIC")
    _add(sel, "--data", required=True)
    _add(sel, "--grid", required=True, help="comma-separated candidates")
    _add(sel, "--out", default=None, help="write the winning model JSON here")
    _add(sel, "--k-max", dest="k_max", type=int, default=25)
    _add(sel, "--epsilon", type=float, default=1e-6)
    _add(sel, "--cov", choices=["diag", "full"], default="diag")
    _add(sel, "--max-iter", dest="max_iter", type=int, default=200)
    _add(sel, "--tol", type=float, default=1e-6)
    _add(sel, "--seed", type=int, default=None)
    _add(sel, "--config", default=None)
    sel.set_defaults(func=cmd_select_lambda)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        for action in parser._subparsers._group_actions:
            if isinstance(action, argparse._SubParsersAction):
                _apply_config_file(args, action.choices[args.subcommand])
        return args.func(args)
    except (UsageError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - runtime failure boundary
        print(f"failure: {err}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
