"""Command line front end.

Exit codes: 0 success, 2 configuration or input error, 3 window or
resource exhaustion, 4 a certified bound failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .cubes import AbelianDyadicSystem, HeisenbergNetSystem, WindowError
from .cylinders import AdmissibilityParams
from .group import GroupSpec, VerticalField, dist_G_array, dist_N, dist_Z_array
from .measure import FlowMeasure, estimate_doubling

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_CERT = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def fmt(x: float) -> str:
    """Twelve significant digits, locale independent."""
    return f"{float(x):#.12g}"


@dataclass
class ExperimentConfig:
    group: str = "abelian:m=1"
    beta: list = field(default_factory=lambda: [0.0])
    measure: str = "haar"
    delta: float = 0.5
    window_radius: float = 8.0
    gamma: float = 5.0
    lam: float = 2.1 * math.e ** 3
    seed: int = 0
    out: str | None = None
    samples: int | None = None
    doubling_cap: float = 1e3

    def validate(self):
        try:
            spec = GroupSpec.parse(self.group)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if len(self.beta) != spec.beta_dim:
            raise ConfigError(f"beta needs {spec.beta_dim} entries for {spec.describe()}")
        if not all(math.isfinite(b) for b in self.beta):
            raise ConfigError("beta must be finite")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if not self.gamma >= 5:
            raise ConfigError("gamma must be at least 5")
        if not self.lam * self.delta > math.e ** 3:
            raise ConfigError("lambda * delta must exceed e^3")
        if not spec.is_heisenberg and self.delta != 0.5:
            raise ConfigError("abelian dyadic cubes use delta = 1/2")
        if not self.window_radius > 0:
            raise ConfigError("window radius must be positive")
        if self.samples is not None and self.samples < 1:
            raise ConfigError("samples must be positive")
        self.flow_measure()
        return self

    @property
    def spec(self) -> GroupSpec:
        return GroupSpec.parse(self.group)

    @property
    def Z(self) -> VerticalField:
        return VerticalField(self.spec, np.asarray(self.beta, dtype=np.float64))

    @property
    def params(self) -> AdmissibilityParams:
        return AdmissibilityParams(self.gamma, self.lam, self.delta)

    def flow_measure(self) -> FlowMeasure:
        try:
            return FlowMeasure.from_preset(self.Z, self.measure)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def echo(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        # the output path is not part of the experiment; keeps reruns byte-identical
        d.pop("out")
        return d


_KEYS = {"group", "beta", "measure", "delta", "window_radius", "gamma", "lambda", "seed", "out", "samples",
         "doubling_cap"}


def load_config(path: str | None, args) -> ExperimentConfig:
    data = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(data) - _KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig()
    for key, val in data.items():
        setattr(cfg, "lam" if key == "lambda" else key, val)
    for key in ("group", "measure", "delta", "window_radius", "gamma", "lam", "seed", "out", "samples"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, val)
    if getattr(args, "beta", None) is not None:
        cfg.beta = parse_floats(args.beta)
    elif "beta" not in data and _parses(cfg.group):
        cfg.beta = [0.0] * GroupSpec.parse(cfg.group).beta_dim
    try:
        cfg.beta = [float(b) for b in cfg.beta]
        cfg.delta, cfg.gamma, cfg.lam = float(cfg.delta), float(cfg.gamma), float(cfg.lam)
        cfg.window_radius, cfg.seed = float(cfg.window_radius), int(cfg.seed)
        cfg.doubling_cap = float(cfg.doubling_cap)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config value: {exc}") from exc
    return cfg.validate()


def _parses(text) -> bool:
    try:
        GroupSpec.parse(text)
        return True
    except ValueError:
        return False


_CONSTANTS = {"e": math.e, "pi": math.pi, "-e": -math.e, "-pi": -math.pi}


def parse_floats(text: str) -> list:
    parts = [p for p in text.strip().strip("()[]").replace(";", ",").split(",") if p.strip()]
    out = []
    for p in parts:
        p = p.strip()
        try:
            out.append(_CONSTANTS[p] if p in _CONSTANTS else float(p))
        except ValueError as exc:
            raise ConfigError(f"malformed number {p!r}") from exc
    if not out or not all(math.isfinite(v) for v in out):
        raise ConfigError(f"malformed coordinates {text!r}")
    return out


def parse_point(text: str, spec: GroupSpec):
    """"n_1,...,n_d,a" (the last entry is the dilation a > 0)."""
    vals = parse_floats(text)
    if len(vals) != spec.dim + 1:
        raise ConfigError(f"point {text!r} needs {spec.dim} base coordinates and a")
    if not vals[-1] > 0:
        raise ConfigError("the dilation coordinate must be positive")
    return np.array(vals[:-1]), vals[-1]


def atomic_write(path: str, text: str):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(cfg: ExperimentConfig, text: str, stdout):
    if cfg.out:
        atomic_write(cfg.out, text)
    else:
        stdout.write(text)


def build_system(cfg: ExperimentConfig):
    mu = cfg.flow_measure()
    if not mu.is_uniform:
        D = estimate_doubling(mu, 2.0, cfg.window_radius, samples=200, seed=cfg.seed).D
        if D > cfg.doubling_cap:
            raise ConfigError(f"empirical doubling constant {D:g} exceeds the cap {cfg.doubling_cap:g}")
    if cfg.spec.is_heisenberg:
        try:
            return HeisenbergNetSystem(mu, cfg.delta, cfg.window_radius, seed=cfg.seed)
        except ValueError as exc:
            raise WindowError(str(exc)) from exc
    return AbelianDyadicSystem(mu)


def build_family_from(cfg: ExperimentConfig, depth, r0: float, policy):
    from .family import DyadicFamily

    system = build_system(cfg)
    try:
        return DyadicFamily(system, cfg.params, cfg.Z, up=depth[0], down=depth[1], r0=r0, p0_policy=policy)
    except WindowError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _depth(text: str):
    vals = parse_floats(text)
    if len(vals) != 2 or any(v < 0 or v != int(v) for v in vals):
        raise ConfigError("depth must be two non-negative integers 'up,down'")
    return int(vals[0]), int(vals[1])


def _policy(text: str):
    if text in ("smallest", "largest"):
        return text
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"unknown P0 policy {text!r}") from exc


# commands ----------------------------------------------------------------

def cmd_distance(cfg, args, stdout) -> int:
    spec = cfg.spec
    n, a = parse_point(args.x, spec)
    m, b = parse_point(args.y, spec)
    if args.metric == "dN":
        d = float(dist_N(spec, n, m))
    elif args.metric == "dG":
        d = float(dist_G_array(spec, n, a, m, b))
    else:
        d = float(dist_Z_array(cfg.Z, n, a, m, b))
    stdout.write(fmt(d) + "\n")
    return EXIT_OK


def cmd_partition(cfg, args, stdout) -> int:
    F = build_family_from(cfg, _depth(args.depth), args.r0, _policy(args.p0))
    lines = F.dump_lines()
    counts, ratios, children = {}, [], []
    for nd in F.walk():
        counts[nd.gen] = counts.get(nd.gen, 0) + 1
        if nd.gen < F.down:
            kids = F.children(nd)
            children.append(len(kids))
            ratios.extend(F.measure(nd) / F.measure(c) for c in kids)
    edges = np.linspace(0.0, max(1.0, math.ceil(math.log2(F.system.C1))), 9)
    hist, _ = np.histogram(np.log2(ratios), bins=edges)
    summary = {
        "config": cfg.echo(),
        "header": F.header(),
        "counts": {str(k): v for k, v in sorted(counts.items())},
        "max_children": max(children, default=0),
        "measure_ratio": {"min": min(ratios, default=None), "max": max(ratios, default=None),
                          "log2_hist": hist.tolist(), "log2_edges": edges.tolist()},
        "constants": {"C1": F.system.C1, "C2": cfg.params.C2},
    }
    header = json.dumps({"header": F.header(), "config": cfg.echo()}, sort_keys=True)
    emit(cfg, "\n".join([header] + lines) + "\n", stdout)
    if cfg.out:
        stdout.write(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    ok = summary["max_children"] <= F.system.C1 and all(r <= F.system.C1 * (1 + 1e-12) for r in ratios)
    return EXIT_OK if ok else EXIT_CERT


def _function(F, spec: str, rng):
    from .maximal import SimpleFunction, random_simple_function

    P0 = F.chain_node(0)
    if spec == "son":
        return SimpleFunction(F, [(1.0, F.children(P0)[0])])
    if spec == "p0":
        return SimpleFunction(F, [(1.0, P0)])
    if spec.startswith("random"):
        terms = int(spec.split(":", 1)[1]) if ":" in spec else 6
        return random_simple_function(F, rng, terms=terms)
    try:
        with open(spec, encoding="utf-8") as fh:
            items = json.load(fh)
        terms = []
        for item in items:
            node = F.root
            for i in item["path"]:
                node = F.children(node)[int(i)]
            terms.append((float(item["coef"]), node))
    except (OSError, ValueError, KeyError, IndexError, TypeError) as exc:
        raise ConfigError(f"cannot read function spec {spec!r}: {exc}") from exc
    return SimpleFunction(F, terms)


def cmd_czdecomp(cfg, args, stdout) -> int:
    from .maximal import cz_decompose

    rng = np.random.default_rng(cfg.seed)
    F = build_family_from(cfg, _depth(args.depth), args.r0, _policy(args.p0))
    f = _function(F, args.function, rng)
    if args.alpha == "auto":
        if args.function != "son":
            raise ConfigError("alpha 'auto' is defined for the son indicator only")
        P0 = F.chain_node(0)
        alpha = F.measure(F.children(P0)[0]) / F.measure(P0.parent)
    else:
        alpha = parse_floats(args.alpha)[0]
        if not alpha > 0:
            raise ConfigError("alpha must be positive")
    R = cz_decompose(F, f, alpha)
    samples = cfg.samples or 10_000
    err = 0.0
    if not f.is_zero:
        n, t = f.sample_support(rng, samples)
        diff = f.value_flow(n, t) - R.g.value_flow(n, t)
        for b in R.bad:
            diff -= b.value_flow(n, t)
        err = float(np.max(np.abs(diff)))
    report = R.to_dict()
    report["certificates"]["identity"] = err <= 1e-10
    report["identity_max_error"] = err
    report["function"] = f.describe()
    report["norm1_two_ways"] = [f.norm1(), f.norm1_refined()]
    report["config"] = cfg.echo()
    report["constants"].update({"C2": cfg.params.C2})
    emit(cfg, json.dumps(report, sort_keys=True, indent=1) + "\n", stdout)
    return EXIT_OK if all(report["certificates"].values()) else EXIT_CERT


def cmd_weak11(cfg, args, stdout) -> int:
    from .maximal import HLCatalog, alpha_grid, random_simple_function, weak11_campaign

    rng = np.random.default_rng(cfg.seed)
    F = build_family_from(cfg, _depth(args.depth), args.r0, _policy(args.p0))
    funcs = [random_simple_function(F, rng, terms=args.terms, max_gen=min(F.down, 3))
             for _ in range(args.functions)]
    grids = [alpha_grid(f, F.measure(F.root))[: args.alphas] for f in funcs]
    catalog = HLCatalog.around_family(F, per_decade=args.per_decade)
    rows = weak11_campaign(catalog, funcs, grids, cfg.params, samples=cfg.samples or 20_000, seed=cfg.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["function_id", "alpha", "level_measure", "bound", "margin"])
    for r in rows:
        w.writerow([r["function_id"], fmt(r["alpha"]), fmt(r["level_measure"]), fmt(r["bound"]), fmt(r["margin"])])
    emit(cfg, buf.getvalue(), stdout)
    bad = sum(r["margin"] < 0 for r in rows)
    info = {"rows": len(rows), "violations": bad, "C2": cfg.params.C2, "C1": F.system.C1,
            "catalog": catalog.describe(), "config": cfg.echo(),
            "note": "level sets of a lower bound of the maximal function"}
    sys.stderr.write(json.dumps(info, sort_keys=True) + "\n")
    return EXIT_OK if bad == 0 else EXIT_CERT


def cmd_counterexample(cfg, args, stdout) -> int:
    from .counterexample import CSV_HEADER, counterexample_table, diameter_chain

    try:
        rows = counterexample_table(args.r0, args.ell_max, (1.0,), lam=cfg.lam, gamma=cfg.gamma)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.csv_fields(1.0))
    emit(cfg, buf.getvalue(), stdout)
    L = math.log(args.r0)
    ok = True
    from .counterexample import default_heisenberg_constants

    c, _ = default_heisenberg_constants()
    for row in rows:
        E = 4 * 6 ** row.ell
        chain = diameter_chain(row.ell, args.r0, c)
        ok &= all(x >= y - 1e-9 * abs(y) for x, y in zip(chain, chain[1:]))
        ok &= row.log_a_low >= (-E - 2) * L - 1e-9 and row.log_a_high <= (-E + 2) * L + 1e-9
        ok &= 1.0 <= row.log_r0_r <= 2.0
    lr = [row.log_ratio_lb[1.0] for row in rows]
    ok &= all(b > a for a, b in zip(lr, lr[1:]))
    return EXIT_OK if ok else EXIT_CERT


# argument parsing ------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--group", help='"abelian:m=<m>" or "heisenberg"')
    p.add_argument("--beta", help="comma separated coefficients of Z")
    p.add_argument("--measure", help='"haar" or "power:s=<s>"')
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--window-radius", dest="window_radius", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--samples", type=int)


def _family_args(p, depth="3,6"):
    p.add_argument("--depth", default=depth, help="'up,down' generations around P0")
    p.add_argument("--r0", type=float, default=math.e ** 2)
    p.add_argument("--p0", default="smallest", help='"smallest", "largest" or a cube generation')


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="czflow", description="Flow cylinders, dyadic families and CZ certificates.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("distance", help="print a distance between two points")
    _common(p)
    p.add_argument("x")
    p.add_argument("y")
    p.add_argument("--metric", choices=("dN", "dG", "dZ"), default="dG")
    p = sub.add_parser("partition", help="dump a dyadic family as JSON lines")
    _common(p)
    _family_args(p, "0,3")
    p = sub.add_parser("czdecomp", help="CZ decomposition report")
    _common(p)
    _family_args(p)
    p.add_argument("--function", default="son", help='"son", "p0", "random[:terms]" or a JSON file')
    p.add_argument("--alpha", default="auto")
    p = sub.add_parser("weak11", help="weak type (1,1) campaign CSV")
    _common(p)
    _family_args(p, "2,4")
    p.add_argument("--functions", type=int, default=12)
    p.add_argument("--terms", type=int, default=4)
    p.add_argument("--alphas", type=int, default=8)
    p.add_argument("--per-decade", dest="per_decade", type=int, default=32)
    p = sub.add_parser("counterexample", help="counterexample table CSV")
    _common(p)
    p.add_argument("--ell-max", dest="ell_max", type=int, default=4)
    p.add_argument("--r0", type=float, default=math.e ** 2)
    return parser


COMMANDS = {
    "distance": cmd_distance,
    "partition": cmd_partition,
    "czdecomp": cmd_czdecomp,
    "weak11": cmd_weak11,
    "counterexample": cmd_counterexample,
}


def main(argv=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    try:
        args = make_parser().parse_args(argv)
        cfg = load_config(args.config, args)
        return COMMANDS[args.command](cfg, args, stdout)
    except ConfigError as exc:
        sys.stderr.write(f"czflow: error: {exc}\n")
        return EXIT_CONFIG
    except (WindowError, MemoryError) as exc:
        sys.stderr.write(f"czflow: window or resource exhausted: {exc}\n")
        return EXIT_RESOURCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
