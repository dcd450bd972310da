"""Batch command-line front end.

Usage::

    sparse-subarrays {design,attrs,bounds,montecarlo,compressive} --config run.ini [--seed S] [--out DIR] [--threads T]

Every output file starts with a ``# config_sha256=... seed=...`` line.  The
hash covers the effective configuration (file plus command-line overrides),
so two runs with byte-identical inputs produce byte-identical outputs.

Exit codes: 0 success, 2 configuration or infeasible-instance error, 3
numerical failure.
"""
import argparse
import configparser
import io
import json
import logging
import os
import sys

import numpy as np

from . import benchmarks
from .beampattern import attributes_from_positions, ebp_rho, evaluate_pattern
from .bounds import PRIOR_FIM, bound_curve
from .compressive import draw_measurement, isometry_ratio
from .errors import (ConfigError, ConstraintViolation, DegenerateGeometry, InfeasibleInstance,
                     InvalidArgument, NumericalFailure)
from .estimation import make_steering_dictionary, run_campaign
from .geometry import build_subarray_layout, expand_super_array, make_design_grid
from .io import provenance_header, read_array_file, write_array_file
from .placement import ObjectiveWeights, build_dictionary, local_refine, select_optimum

log = logging.getLogger("sparse_subarrays")

DEFAULTS = {
    "layout": {"rows": "4", "cols": "4", "dx": "0.5", "dy": "0.6", "margin": "0.0",
               "overhang": "0.5"},
    "grid": {"width": "20", "height": "20", "pitch": "1.0"},
    "design": {"n_subarrays": "8", "alpha": "1", "beta": "1", "gamma": "1", "n_init": "16",
               "tau": "", "rounds": "3", "n_pattern": "256", "n_final": "512",
               "theta_max": "30", "eps": "2", "save_dictionary": "no"},
    "array": {"file": "", "benchmark": "", "target_bw": "7.9"},
    "bounds": {"snr_db": "-20:20:1", "prior": str(PRIOR_FIM), "n_line": "1024"},
    "montecarlo": {"snr_db": "-20:20:2", "trials": "200", "k": "1", "min_sep": "0.16",
                   "interferer_db": "0", "rounds": "3", "estimator": "nomp",
                   "ccdf_snr_db": "-5"},
    "compressive": {"m_list": "4", "m_sweep": "1,2,4,8,16", "sparsity": "8",
                    "isometry_trials": "100000", "snr_db": "-20:20:2", "trials": "200",
                    "k": "1", "identity": "no"},
    "run": {"seed": "", "out": "out"},
}


def parse_range(text):
    """``start:stop:step`` (inclusive) or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, c = (float(t) for t in text.split(":"))
            if c <= 0:
                raise ValueError
            return np.round(np.arange(a, b + c / 2, c), 10)
        return np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise ConfigError(f"bad range specification {text!r}") from None


class RunConfig:
    """Sectioned key-value configuration with typed accessors."""

    def __init__(self, parser):
        self.parser = parser

    @classmethod
    def load(cls, path=None, overrides=None):
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_dict(DEFAULTS)
        if path:
            if not os.path.exists(path):
                raise ConfigError(f"config file {path} not found")
            try:
                with open(path) as fh:
                    cp.read_file(fh)
            except configparser.Error as exc:
                raise ConfigError(f"{path}: {exc}") from None
        for key, value in (overrides or {}).items():
            sec, opt = key.split(".")
            cp.set(sec, opt, str(value))
        return cls(cp)

    def text(self):
        buf = io.StringIO()
        self.parser.write(buf)
        return buf.getvalue()

    def get(self, sec, key):
        return self.parser.get(sec, key)

    def num(self, sec, key, kind=float):
        try:
            return kind(self.parser.get(sec, key))
        except ValueError:
            raise ConfigError(f"[{sec}] {key}: expected {kind.__name__}") from None

    def flag(self, sec, key):
        try:
            return self.parser.getboolean(sec, key)
        except ValueError:
            raise ConfigError(f"[{sec}] {key}: expected yes/no") from None

    @property
    def seed(self):
        s = self.parser.get("run", "seed").strip()
        if not s:
            raise ConfigError("a seed is required ([run] seed or --seed)")
        try:
            return int(s)
        except ValueError:
            raise ConfigError("seed must be an integer") from None

    def layout(self):
        return build_subarray_layout(self.num("layout", "rows", int), self.num("layout", "cols", int),
                                     self.num("layout", "dx"), self.num("layout", "dy"),
                                     self.num("layout", "margin"), self.num("layout", "overhang"))

    def grid(self):
        return make_design_grid(self.num("grid", "width"), self.num("grid", "height"),
                                self.num("grid", "pitch"))

    def weights(self):
        return ObjectiveWeights(self.num("design", "alpha"), self.num("design", "beta"),
                                self.num("design", "gamma"))


class Outputs:
    def __init__(self, root, header):
        self.root = root
        self.header = header
        os.makedirs(root, exist_ok=True)

    def path(self, name):
        return os.path.join(self.root, name)

    def write_text(self, name, body):
        with open(self.path(name), "w") as fh:
            fh.write(self.header)
            fh.write(body)


def _array_positions(cfg, args, layout):
    """Element positions from --array / --benchmark or the [array] section."""
    bench = args.benchmark or cfg.get("array", "benchmark").strip()
    path = args.array or cfg.get("array", "file").strip()
    if bench == "compact":
        conf = benchmarks.compact_array(layout)
        return bench, conf, expand_super_array(conf, layout)
    if bench == "naive":
        conf = benchmarks.naive_array(layout, cfg.num("array", "target_bw"))
        return bench, conf, expand_super_array(conf, layout, check=False)
    if bench:
        raise ConfigError(f"unknown benchmark {bench!r}")
    if not path:
        raise ConfigError("no array given (use --array, --benchmark or [array])")
    conf = read_array_file(path)
    return os.path.basename(path), conf, expand_super_array(conf, layout)


def cmd_design(cfg, args, out):
    layout, grid, weights = cfg.layout(), cfg.grid(), cfg.weights()
    tau = cfg.get("design", "tau").strip()
    tau = None if not tau else tuple(float(t) for t in tau.split(","))
    theta_max = cfg.num("design", "theta_max")
    eps = cfg.num("design", "eps", int)
    n_final = cfg.num("design", "n_final", int)
    d = build_dictionary(grid, layout, cfg.num("design", "n_subarrays", int),
                         cfg.num("design", "n_init", int), tau, cfg.seed,
                         n_pattern=cfg.num("design", "n_pattern", int), theta_max=theta_max,
                         eps=eps)
    log.info("dictionary: %d configurations", len(d))
    selected, _ = select_optimum(d, weights, layout, n_final=n_final)
    ref = local_refine(selected, layout, weights, d.ranges, pitch=grid.pitch,
                       rounds=cfg.num("design", "rounds", int), n=n_final,
                       theta_max=theta_max, eps=eps)
    write_array_file(out.path("selected.txt"), selected, out.header)
    write_array_file(out.path("array.txt"), ref.config, out.header)
    ref.write_trace(out.path("cost_trace.csv"), out.header)
    rows = []
    for name, conf in (("selected", selected), ("refined", ref.config)):
        a = attributes_from_positions(expand_super_array(conf, layout), n_final, eps, theta_max)
        rows.append(f"{name},{weights.alpha:g},{weights.beta:g},{weights.gamma:g},{a.csv_row()}")
    out.write_text("attributes.csv", "name,alpha,beta,gamma,bw_max,bw_min,bw_doa,msll,"
                   "directivity,ecc\n" + "\n".join(rows) + "\n")
    out.write_text("dictionary_summary.json", json.dumps(
        {"size": len(d), "layer_sizes": d.layer_sizes, "tau": list(d.tau),
         "ranges": d.ranges.as_dict()}, indent=1, sort_keys=True) + "\n")
    if cfg.flag("design", "save_dictionary"):
        d.save(out.path("dictionary.txt"), out.header)


def cmd_attrs(cfg, args, out):
    layout = cfg.layout()
    name, conf, D = _array_positions(cfg, args, layout)
    theta_max = cfg.num("design", "theta_max")
    n = cfg.num("design", "n_final", int)
    a = attributes_from_positions(D, n, cfg.num("design", "eps", int), theta_max)
    out.write_text("attributes.csv", "name," + a.csv_header() + "\n" + f"{name},{a.csv_row()}\n")
    write_array_file(out.path("array.txt"), conf, out.header)
    field = evaluate_pattern(D, n, ebp_rho(theta_max))
    field.to_binary(out.path("pattern.bin"))
    meta = {"n": field.n, "rho": field.rho, "layout": "row-major float64, rows = v, cols = u",
            "header_bytes": 16, "provenance": out.header.strip()}
    with open(out.path("pattern.meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_bounds(cfg, args, out):
    layout = cfg.layout()
    _, _, D = _array_positions(cfg, args, layout)
    curve = bound_curve(D, parse_range(cfg.get("bounds", "snr_db")),
                        cfg.num("bounds", "prior"), n_line=cfg.num("bounds", "n_line", int))
    curve.to_csv(out.path("bounds.csv"), out.header)


def _campaign(cfg, args, D, section, Phi=None):
    return run_campaign(D, parse_range(cfg.get(section, "snr_db")), cfg.num(section, "trials", int),
                        K=cfg.num(section, "k", int), seed=cfg.seed,
                        rounds=cfg.num("montecarlo", "rounds", int), Phi=Phi,
                        min_sep=cfg.num("montecarlo", "min_sep"),
                        interferer_level_db=cfg.num("montecarlo", "interferer_db"),
                        estimator=cfg.get("montecarlo", "estimator").strip(),
                        threads=args.threads)


def cmd_montecarlo(cfg, args, out):
    layout = cfg.layout()
    _, _, D = _array_positions(cfg, args, layout)
    res = _campaign(cfg, args, D, "montecarlo")
    res.to_csv(out.path("rmse.csv"), out.header)
    target = cfg.num("montecarlo", "ccdf_snr_db")
    i = int(np.argmin(np.abs(res.snr_db - target)))
    res.ccdf_csv(out.path("ccdf.csv"), i, out.header + f"# snr_db={res.snr_db[i]:g}\n")


def cmd_compressive(cfg, args, out):
    layout = cfg.layout()
    conf_name, conf, D = _array_positions(cfg, args, layout)
    ns, ne = conf.n_subarrays, layout.n_elements
    dictionary = make_steering_dictionary(D)
    sparsity = cfg.num("compressive", "sparsity", int)
    trials = cfg.num("compressive", "isometry_trials", int)
    lines = ["m_total,m_per_subarray,min_db,max_db"]
    for m in parse_range(cfg.get("compressive", "m_sweep")).astype(int):
        P = draw_measurement(ns, ne, int(m), seed=[cfg.seed, int(m)])
        lo, hi = isometry_ratio(P, dictionary, sparsity, trials, seed=[cfg.seed, int(m), 1])
        lines.append(f"{ns * m},{m},{lo:.6f},{hi:.6f}")
    out.write_text("isometry.csv", "\n".join(lines) + "\n")
    m_list = [int(x) for x in cfg.get("compressive", "m_list").split(",")]
    identity = cfg.flag("compressive", "identity")
    P = draw_measurement(ns, ne, m_list if len(m_list) > 1 else m_list[0],
                         seed=[cfg.seed, 0], identity=identity)
    res = _campaign(cfg, args, D, "compressive", Phi=P)
    res.to_csv(out.path("compressive_rmse.csv"), out.header + f"# measurement={P.to_json()}\n")


COMMANDS = {"design": cmd_design, "attrs": cmd_attrs, "bounds": cmd_bounds,
            "montecarlo": cmd_montecarlo, "compressive": cmd_compressive}


def build_parser():
    p = argparse.ArgumentParser(prog="sparse-subarrays", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
    p.add_argument("--out", help="output directory (overrides [run] out)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for Monte-Carlo trials")
    p.add_argument("--array", help="array file (cx cy pose per line)")
    p.add_argument("--benchmark", choices=["compact", "naive"], help="built-in reference array")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        overrides = {}
        if args.seed is not None:
            overrides["run.seed"] = args.seed
        if args.array:
            overrides["array.file"] = args.array
        if args.benchmark:
            overrides["array.benchmark"] = args.benchmark
        cfg = RunConfig.load(args.config, overrides)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        seed = cfg.seed
        out = Outputs(args.out or cfg.get("run", "out"), provenance_header(cfg.text(), seed))
        COMMANDS[args.command](cfg, args, out)
    except (ConfigError, InvalidArgument, InfeasibleInstance, ConstraintViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalFailure, DegenerateGeometry) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
