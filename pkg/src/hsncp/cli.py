"""Command-line entry points.

Subcommands: ``elicit``, ``moments``, ``simulate``, ``fit``, ``summarize``.
Configuration is a single JSON file (unknown keys are rejected), data is
CSV with header ``group,value`` plus an optional ``truth`` column, chains
are JSON-lines.  Exit codes: 0 ok, 2 config error, 3 data error,
4 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .elicit import elicit_all, match_correlation
from .errors import ConfigError, DataError, NumericError
from .kernel import KernelModel
from .levy import LevyParams
from .mcmc import ChainRecord, SamplerConfig, run_chain
from .moments import correlation_grid, prior_correlation
from .prior_sim import FIXTURE_SCENARIOS, simulate_fixture, simulate_prior
from .summaries import (cluster_entropy, point_estimate_vi,
                        predictive_density_grid, similarity_matrix)

__all__ = ["main"]


# ----- config plumbing --------------------------------------------------------


def _check_keys(d: dict, allowed, required, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(d)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def _parse_levy(d: dict, where: str) -> LevyParams:
    _check_keys(d, {"family", "a", "sigma", "tau"}, {"family", "a"}, where)
    family = d["family"]
    try:
        if family == "gamma":
            return LevyParams.gamma(float(d["a"]), float(d.get("tau", 1.0)))
        if family == "generalized_gamma":
            return LevyParams.generalized_gamma(float(d["a"]),
                                                float(d.get("sigma", 0.0)),
                                                float(d.get("tau", 1.0)))
        if family == "stable":
            return LevyParams.stable(float(d["a"]), float(d.get("sigma", 0.5)))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown family {family!r}")


def _levy_dict(p: LevyParams) -> dict:
    return {"family": p.family, "a": p.a, "sigma": p.sigma, "tau": p.tau}


def _parse_kernel(d: dict, where: str) -> KernelModel:
    _check_keys(d, {"mode", "mu0", "sigma0_sq", "kernel_var", "alpha0", "beta0"},
                {"mode"}, where)
    try:
        if d["mode"] == "fixed_variance":
            return KernelModel.fixed_variance(float(d["mu0"]),
                                              float(d["sigma0_sq"]),
                                              float(d["kernel_var"]))
        if d["mode"] == "mean_variance":
            return KernelModel.mean_variance(float(d["mu0"]),
                                             float(d["sigma0_sq"]),
                                             float(d["alpha0"]),
                                             float(d["beta0"]))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: mode must be fixed_variance or mean_variance")


def _kernel_dict(m: KernelModel) -> dict:
    out = {"mode": m.mode, "mu0": m.mu0, "sigma0_sq": m.sigma0_sq}
    if m.mode == "fixed_variance":
        out["kernel_var"] = m.kernel_var
    else:
        out["alpha0"] = m.alpha0
        out["beta0"] = m.beta0
    return out


def read_data_csv(path: str):
    """Read ``group,value[,truth]`` CSV; returns (group keys in first-seen
    order, per-group value arrays, per-group truth arrays or None)."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open data file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header not in (["group", "value"], ["group", "value", "truth"]):
            raise DataError(f"{path}: header must be group,value[,truth], "
                            f"got {header}")
        has_truth = len(header) == 3
        keys, order = {}, []
        values, truths = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno}: expected "
                                f"{len(header)} fields, got {len(row)}")
            key = row[0].strip()
            try:
                val = float(row[1])
            except ValueError:
                raise DataError(f"{path}: line {lineno}: value {row[1]!r} "
                                f"is not a number") from None
            if key not in keys:
                keys[key] = len(order)
                order.append(key)
                values.append([])
                truths.append([])
            values[keys[key]].append(val)
            if has_truth:
                try:
                    truths[keys[key]].append(int(row[2]))
                except ValueError:
                    raise DataError(f"{path}: line {lineno}: truth {row[2]!r} "
                                    f"is not an integer") from None
    groups = [np.asarray(v, dtype=float) for v in values]
    truth = [np.asarray(t, dtype=np.int64) for t in truths] if has_truth else None
    return order, groups, truth


def write_data_csv(path: Path, keys, groups, truth=None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "value", "truth"] if truth is not None
                        else ["group", "value"])
        for ell, key in enumerate(keys):
            for i, v in enumerate(groups[ell]):
                row = [key, repr(float(v))]
                if truth is not None:
                    row.append(int(truth[ell][i]))
                writer.writerow(row)


def _out_dir(args, cfg) -> Path:
    out = args.out or cfg.get("out") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require_seed(args, cfg) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise ConfigError("a seed is required for reproducibility "
                          "(config key 'seed' or --seed)")
    return int(seed)


# ----- subcommands -------------------------------------------------------------


def cmd_elicit(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"data", "lambda", "out"}, {"data"}, "elicit config")
    _, groups, _ = read_data_csv(cfg["data"])
    result = elicit_all(groups, lam=float(cfg.get("lambda", 0.7)))
    out = _out_dir(args, cfg) / "elicitation.json"
    out.write_text(json.dumps(result.to_dict(), indent=2) + "\n")
    print(f"wrote {out}")
    return 0


def cmd_moments(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"rho", "rho0", "kernel", "interval", "grid", "out"},
                {"rho", "rho0", "kernel", "interval"}, "moments config")
    rho = _parse_levy(cfg["rho"], "rho")
    rho0 = _parse_levy(cfg["rho0"], "rho0")
    model = _parse_kernel(cfg["kernel"], "kernel")
    interval = tuple(map(float, cfg["interval"]))
    if "grid" in cfg:
        _check_keys(cfg["grid"], {"rho_a", "rho0_a"}, set(), "moments grid")
        from dataclasses import replace
        rho_grid = [replace(rho, a=float(a)) for a in cfg["grid"].get("rho_a", [rho.a])]
        rho0_grid = [replace(rho0, a=float(a)) for a in cfg["grid"].get("rho0_a", [rho0.a])]
        rows = correlation_grid(rho_grid, rho0_grid, model, interval)
        out = _out_dir(args, cfg) / "correlation_grid.csv"
        with open(out, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {out}")
    else:
        cor = prior_correlation(rho, rho0, model, interval)
        print(f"prior correlation over {interval}: {cor:.6f}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, {"scenario", "n_per_group", "sigma_t", "prior", "seed", "out"},
                set(), "simulate config")
    seed = _require_seed(args, cfg)
    rng = np.random.default_rng(seed)
    if "prior" in cfg:
        p = cfg["prior"]
        _check_keys(p, {"rho", "rho0", "kernel", "group_sizes", "epsilon",
                        "sigma_f_sq"},
                    {"rho", "rho0", "kernel", "group_sizes", "sigma_f_sq"},
                    "simulate prior")
        sizes = [int(n) for n in p["group_sizes"]]
        if not sizes:
            raise ConfigError("simulate prior: group_sizes must be nonempty")
        ds = simulate_prior(_parse_levy(p["rho"], "rho"),
                            _parse_levy(p["rho0"], "rho0"),
                            _parse_kernel(p["kernel"], "kernel"),
                            sizes, float(p.get("epsilon", 1e-6)),
                            float(p["sigma_f_sq"]), rng)
    else:
        if "scenario" not in cfg:
            raise ConfigError("simulate config needs 'scenario' or 'prior'")
        if cfg["scenario"] not in FIXTURE_SCENARIOS:
            raise ConfigError(f"unknown scenario {cfg['scenario']!r}; "
                              f"choose from {FIXTURE_SCENARIOS}")
        n = cfg.get("n_per_group")
        if n is None or (np.isscalar(n) and int(n) < 1):
            raise ConfigError("simulate config needs n_per_group >= 1")
        kwargs = {}
        if "sigma_t" in cfg:
            kwargs["sigma_t"] = float(cfg["sigma_t"])
        ds = simulate_fixture(cfg["scenario"], n, rng, **kwargs)
    keys = [str(ell) for ell in range(ds.n_groups())]
    out = _out_dir(args, cfg) / "data.csv"
    write_data_csv(out, keys, ds.groups, ds.room_labels)
    print(f"wrote {out}")
    return 0


def _resolve_fit_config(cfg: dict):
    """Fill in elicited pieces and return (resolved config dict, data parts)."""
    _check_keys(cfg, {"data", "rho", "rho0", "kernel", "noise_prior",
                      "correlation", "mcmc", "seed", "out"},
                {"data", "rho", "rho0", "kernel", "mcmc"}, "fit config")
    keys, groups, _ = read_data_csv(cfg["data"])
    if cfg["kernel"] == "elicit" or cfg.get("noise_prior", "elicit") == "elicit":
        eres = elicit_all(groups)
    if cfg["kernel"] == "elicit":
        model = KernelModel.mean_variance(eres.mu0, eres.sigma0_sq,
                                          eres.alpha0, eres.beta0)
    else:
        model = _parse_kernel(cfg["kernel"], "kernel")
    noise = cfg.get("noise_prior", "elicit")
    if noise == "elicit":
        alpha_f, beta_f = eres.alpha_f, eres.beta_f
    else:
        _check_keys(noise, {"alpha_f", "beta_f"}, {"alpha_f", "beta_f"},
                    "noise_prior")
        alpha_f, beta_f = float(noise["alpha_f"]), float(noise["beta_f"])
    rho = _parse_levy(cfg["rho"], "rho")
    rho0 = _parse_levy(cfg["rho0"], "rho0")
    if "correlation" in cfg:
        c = cfg["correlation"]
        _check_keys(c, {"target", "interval", "free"}, {"target"}, "correlation")
        interval = tuple(map(float, c.get("interval",
                                          (min(g.min() for g in groups),
                                           max(g.max() for g in groups)))))
        rho, rho0 = match_correlation(float(c["target"]),
                                      c.get("free", "rho.a"),
                                      rho, rho0, model, interval)
    mc = cfg["mcmc"]
    _check_keys(mc, {"iterations", "burn_in", "thin", "epsilon", "chains"},
                {"iterations"}, "mcmc")
    iterations = int(mc["iterations"])
    burn_in = int(mc.get("burn_in", 0))
    thin = int(mc.get("thin", 1))
    epsilon = float(mc.get("epsilon", 1e-6))
    chains = int(mc.get("chains", 1))
    if not (iterations >= burn_in >= 0):
        raise ConfigError("mcmc: need iterations >= burn_in >= 0")
    if thin < 1 or chains < 1 or epsilon <= 0:
        raise ConfigError("mcmc: need thin >= 1, chains >= 1, epsilon > 0")
    resolved = {
        "data": cfg["data"],
        "rho": _levy_dict(rho),
        "rho0": _levy_dict(rho0),
        "kernel": _kernel_dict(model),
        "noise_prior": {"alpha_f": alpha_f, "beta_f": beta_f},
        "mcmc": {"iterations": iterations, "burn_in": burn_in, "thin": thin,
                 "epsilon": epsilon, "chains": chains},
    }
    sampler_cfg = SamplerConfig(rho=rho, rho0=rho0, model=model,
                                epsilon=epsilon, alpha_f=alpha_f, beta_f=beta_f)
    return resolved, sampler_cfg, keys, groups


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    if "manifest_version" in cfg:  # re-run from a manifest
        seed = cfg.get("seed")
        cfg = cfg["config"]
        if args.seed is not None:
            seed = args.seed
    else:
        seed = None
    if seed is None:
        seed = _require_seed(args, cfg)
    resolved, sampler_cfg, keys, groups = _resolve_fit_config(cfg)
    out_dir = _out_dir(args, cfg)
    mc = resolved["mcmc"]
    t0 = time.perf_counter()
    seeds = [int(s) for s in
             np.random.SeedSequence(int(seed)).generate_state(mc["chains"])]

    def one(chain_seed):
        return run_chain(groups, sampler_cfg, mc["iterations"], mc["burn_in"],
                         mc["thin"], chain_seed)

    if mc["chains"] == 1 or args.threads <= 1:
        chains = [one(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            chains = list(pool.map(one, seeds))
    wall = time.perf_counter() - t0

    chain_files = []
    for k, records in enumerate(chains):
        name = f"chain-{k:02d}.jsonl"
        with open(out_dir / name, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec.to_json_dict()) + "\n")
        chain_files.append(name)
    config_blob = json.dumps(resolved, sort_keys=True).encode()
    manifest = {
        "manifest_version": 1,
        "seed": int(seed),
        "config": resolved,
        "config_sha256": hashlib.sha256(config_blob).hexdigest(),
        "package_version": __version__,
        "backend": BACKEND,
        "group_keys": keys,
        "group_sizes": [int(len(g)) for g in groups],
        "wall_time_s": wall,
        "chain_files": chain_files,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {out_dir}/manifest.json ({mc['chains']} chain(s), "
          f"{wall:.1f}s, backend={BACKEND})")
    return 0


def read_chain(path: str):
    records = []
    try:
        fh = open(path)
    except OSError as exc:
        raise DataError(f"cannot open chain file {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(ChainRecord.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{path}: line {lineno}: bad chain record "
                                f"({exc})") from exc
    if not records:
        raise DataError(f"{path}: no records")
    return records


def cmd_summarize(args) -> int:
    chain = read_chain(args.chain)
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    g = len(chain[0].labels)
    sizes = [len(lab) for lab in chain[0].labels]
    group_ids = np.concatenate([np.full(n, ell, dtype=np.int64)
                                for ell, n in enumerate(sizes)])

    sim = similarity_matrix(chain)
    np.savetxt(out_dir / "similarity.csv", sim.matrix, delimiter=",", fmt="%.6g")

    estimate = point_estimate_vi(chain)
    with open(out_dir / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "group", "cluster"])
        for i, (gid, lab) in enumerate(zip(group_ids, estimate)):
            writer.writerow([i, int(gid), int(lab)])

    rows = cluster_entropy(estimate, group_ids)
    with open(out_dir / "entropy.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["cluster", "size", "entropy",
                                                "max_entropy"])
        writer.writeheader()
        writer.writerows(rows)

    if args.grid:
        try:
            lo, hi, n = args.grid.split(":")
            grid = np.linspace(float(lo), float(hi), int(n))
        except ValueError:
            raise ConfigError("--grid must be lo:hi:n") from None
    else:
        phis = np.concatenate([np.concatenate(rec.atom_phi)
                               for rec in chain[:10]])
        sd = max(float(np.sqrt(max(rec.sigma_f_sq for rec in chain))), 1.0)
        grid = np.linspace(phis.min() - 3 * sd, phis.max() + 3 * sd, 512)
    dens = np.column_stack([grid] + [predictive_density_grid(chain, ell, grid)
                                     for ell in range(g)])
    header = ",".join(["y"] + [f"density_group_{ell}" for ell in range(g)])
    np.savetxt(out_dir / "density.csv", dens, delimiter=",", fmt="%.6g",
               header=header, comments="")
    print(f"wrote similarity.csv, labels.csv, entropy.csv, density.csv "
          f"to {out_dir}")
    return 0


# ----- entry point --------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsncp",
        description="Hierarchical shot-noise Cox process mixtures")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for parallel chains")

    for name, fn in (("elicit", cmd_elicit), ("moments", cmd_moments),
                     ("simulate", cmd_simulate), ("fit", cmd_fit)):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("summarize")
    p.add_argument("--chain", required=True, help="chain JSON-lines file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--grid", default=None, help="density grid as lo:hi:n")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
