"""Config-driven scenario runner: ``circlelab <scenario> --config FILE``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import config as cfgmod
from .circle_maps import Arc, PrimitiveMap, hyperbolic_matrix
from .errors import CircleLabError, ConfigError, PreconditionError

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


@dataclass
class Outcome:
    tables: dict = field(default_factory=dict)      # file name -> CSV body
    checks: list = field(default_factory=list)      # (name, passed, detail)
    extra: dict = field(default_factory=dict)       # additional manifest entries
    files: dict = field(default_factory=dict)       # file name -> raw text (no header)

    def check(self, name: str, passed: bool, detail: str = ""):
        self.checks.append((name, bool(passed), detail))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.6e}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def run_cascade(cfg: dict) -> Outcome:
    from . import cascade as cz
    p, grid, out = cfg["params"], cfg["grid"], Outcome()
    C = p.get("C")
    if C is None:
        C, ratios = cz.calibrate_commutator_constant(p["calibration_pairs"], a=p["a"], seed=cfg["seed"])
        out.extra["calibration"] = {"pairs": p["calibration_pairs"], "max_ratio": float(ratios.max()), "C": C}
    try:
        params = cz.select_params(p["lam"], p["a"], p.get("eps0"), C, p["delta"], p["k_max"])
    except PreconditionError as err:
        raise ConfigError(f"params: {err}") from None
    tol = cfgmod.tolerances(cfg)
    orders = tuple(p["orders"])
    if p["fixture"] == "linear_chart":
        report, _, _ = cz.run_linear_chart(params, p["prune_cap"], grid, p["fraction"], p["eps_scale"], orders)
    else:
        alph = cfgmod.alphabet(cfg)
        S0 = [cfgmod.word(alph, w) for w in p["s0"]]
        levels = cz.build_levels(S0, alph, params.k_max, p["prune_cap"], params.arc, grid // 2,
                                 threshold=tol.nonidentity_c0)
        if "F" in p:
            levels = cz.renormalize_levels(levels, cfgmod.word(alph, p["F"]), p.get("n", params.n), alph)
        report = cz.verify_decay(levels, params, alph, orders, grid)
    out.tables["cascade.csv"] = report.to_csv()
    out.extra["parameters"] = {"a": params.a, "eps0": params.eps0, "eps": params.eps * p["eps_scale"],
                               "lam": params.lam, "n": params.n, "C": params.C, "delta": params.delta}
    out.extra["conditions"] = report.checks
    bad = [r for r in report.rows if r.status != "PASS"]
    detail = f"{len(report.rows)} rows, {len(bad)} not PASS"
    notes = sorted({n for r in bad for n in r.notes.split(";") if n})
    if notes:
        detail += "; " + ", ".join(notes)
    out.check("cascade_decay", not report.failed, detail)
    return out


def run_distortion(cfg: dict) -> Outcome:
    from .cascade import build_levels
    from .expansion import alphabet_log_lipschitz, min_distortion_partition, partition_csv
    p, out = cfg["params"], Outcome()
    alph = cfgmod.alphabet(cfg)
    J = cfgmod.arc(p["J"])
    C = p.get("C") or alphabet_log_lipschitz(alph)
    S0 = [cfgmod.word(alph, w) for w in p["s0"]]
    F = cfgmod.word(alph, p["F"])
    n = p["n"]
    k_top = max(p["ks"])
    levels = build_levels(S0, alph, k_top, p["prune_cap"], J, 128)
    rows = []
    for k in p["ks"]:
        if k >= len(levels) or levels[k].degenerate:
            out.check(f"partition_k{k}", False, f"cascade level {k} unavailable")
            continue
        g = levels[k].members[0].word.conjugate(F, k * n)
        r = min_distortion_partition(g, alph, J, k, 4 ** k + 2 * n * k, C)
        rows.append(r)
        out.check(f"partition_k{k}", r.passed and r.sum_rule_ok,
                  f"min distortion {r.distortion:.3e} vs bound {r.bound:.3e}")
    out.tables["partition.csv"] = partition_csv(rows)
    bounds = [r.bound for r in rows if r.k >= 2]
    out.check("bound_decreasing", all(b2 < b1 for b1, b2 in zip(bounds, bounds[1:])), "bound column for k >= 2")
    out.extra["log_lipschitz_C"] = C
    return out


def run_expansion(cfg: dict) -> Outcome:
    from .expansion import build_cover, d2_growth_check, expandability_scan, m_bar, magnify
    p, out = cfg["params"], Outcome()
    alph = cfgmod.alphabet(cfg)
    scan = expandability_scan(alph, p["cap"], cfg["grid"])
    cover = build_cover(scan, alph, p["overlap"])
    out.files["cover.yaml"] = yaml.safe_dump(cover.to_dict(), sort_keys=False)
    rng = np.random.default_rng(cfg["seed"])
    mb = m_bar(cover)
    rows, sandwich, rbound, d2ok = [], True, True, True
    for i in range(p["sources"]):
        length = cover.L * math.exp(rng.uniform(math.log(p["min_fraction"]), math.log(0.99)))
        lo = float(rng.uniform(0.0, 1.0))
        mag = magnify(cover, Arc(lo, lo + length))
        d2 = d2_growth_check(mag, cover, mbar=mb)
        sandwich &= mag.sandwich_ok
        rbound &= mag.r_bound_ok
        d2ok &= d2.passed
        rows.append((i, lo, length, mag.r, mag.r_bound, mag.image.length, int(mag.sandwich_ok),
                     int(mag.r_bound_ok), d2.sup_d2, d2.verbatim_bound, int(d2.passed)))
    out.tables["magnify.csv"] = _csv(["index", "source_lo", "source_length", "r", "r_bound", "image_length",
                                      "sandwich_ok", "r_bound_ok", "sup_d2", "d2_bound", "d2_pass"], rows)
    out.extra["cover"] = {"s": cover.s, "m1": cover.m1, "M1": cover.M1, "L": cover.L, "Mbar": mb}
    out.check("cover", cover.m1 > 1.0 and cover.s >= 3, f"s={cover.s}, m1={cover.m1:.4f}, M1={cover.M1:.4f}")
    out.check("magnify_sandwich", sandwich, f"{p['sources']} sources")
    out.check("magnify_r_bound", rbound, f"{p['sources']} sources")
    out.check("d2_growth", d2ok, f"{p['sources']} sources")
    return out


def run_flow(cfg: dict) -> Outcome:
    from .flows import euler_flow, extract_field, translation_limit
    p, out = cfg["params"], Outcome()
    alph = cfgmod.alphabet(cfg)
    g, F = cfgmod.word(alph, p["g"]), cfgmod.word(alph, p["F"])
    dom = cfgmod.arc(p["chart_domain"]) if "chart_domain" in p else None
    rep = translation_limit(g, F, alph, cfgmod.arc(p["arc"]), p["j_max"], dom, cfg["grid"])
    out.tables["translation.csv"] = rep.to_csv()
    first, last = rep.rows[0].c1_dist, rep.rows[-1].c1_dist
    out.check("kappa_rule", rep.kappa is not None, f"kappa = {rep.kappa}")
    out.check("translation_limit", last <= first, f"C1 distance {first:.3e} -> {last:.3e}")
    if "field_words" in p:
        words = [cfgmod.word(alph, w) for w in p["field_words"]]
        farc = cfgmod.arc(p.get("field_arc", p["arc"]))
        fld = extract_field(words, alph, farc, p["m"])
        rows, consistent = [], True
        for t in (0.1 * p["t_max"], 0.5 * p["t_max"], p["t_max"]):
            prev = None
            for steps in p["steps"]:
                res = euler_flow(fld, p["x0"], t, steps)
                rows.append((t, steps, res.value, res.error_bound))
                # Richardson: the coarse bound must cover the change on refinement
                if prev is not None and abs(res.value - prev.value) > prev.error_bound + 1e-15:
                    consistent = False
                prev = res
        out.tables["euler.csv"] = _csv(["t", "steps", "x_t", "error_bound"], rows)
        out.extra["field"] = {"defect": fld.defect, "normalization": fld.normalization, "flips": fld.flips}
        out.check("euler_consistency", consistent, f"field defect {fld.defect:.3e}")
    return out


def _step_measure(cfg: dict, alph):
    from .ergodic import StepMeasure
    m = cfg["params"]["measure"]
    if m == "symmetric_letters":
        return StepMeasure.symmetric_letters(alph)
    return StepMeasure([(cfgmod.word(alph, a["word"]), a["p"]) for a in m], alph)


def run_walk(cfg: dict) -> Outcome:
    from .ergodic import EmpiricalMeasure, contraction_along_walk, random_orbit, stationarity_residual
    p, out = cfg["params"], Outcome()
    alph = cfgmod.alphabet(cfg)
    try:
        mu = _step_measure(cfg, alph)
    except PreconditionError as err:
        raise ConfigError(f"params/measure: {err}") from None
    orbit = random_orbit(mu, p["x0"], p["length"], cfg["seed"])
    nu = EmpiricalMeasure(orbit)
    res = stationarity_residual(mu, nu, p["cells"])
    edges = np.linspace(0.0, 1.0, p["cells"] + 1)
    out.tables["residual.csv"] = _csv(["cell", "lo", "mass", "residual"],
                                      [(i, float(edges[i]), float(m), float(r))
                                       for i, (m, r) in enumerate(zip(nu.masses(edges), res.per_cell))])
    out.check("stationarity", res.ratio < p["residual_max"],
              f"residual {res.residual:.3e}, half-width {res.half_width:.3e}, ratio {res.ratio:.2f}")
    if "ks_max" in p:
        ks = nu.ks_uniform()
        out.check("ks_uniform", ks < p["ks_max"], f"KS distance {ks:.4f}")
    if p["contraction_paths"] and p["contraction_horizon"]:
        st = contraction_along_walk(mu, p["contraction_paths"], p["contraction_horizon"], cfg["seed"])
        out.tables["contraction.csv"] = st.to_csv()
        if "contraction_max" in p:
            out.check("contraction", st.median[-1] < p["contraction_max"],
                      f"median c_l at l={p['contraction_horizon']}: {st.median[-1]:.3e}")
    return out


def spike_family(p: dict, grid: int = 4096):
    """(alphabet or None, spikes) for the configured family."""
    from .circle_maps import Alphabet
    from .ergodic import Spike
    xs = np.arange(grid) / grid
    if p["family"] == "cosine":
        amp = p["amplitude"]
        spikes = [Spike(0.5 + sgn * amp * np.cos(2 * np.pi * xs), p["r"], a, p["Q"], p["theta"], p["C"])
                  for sgn, a in ((1, 0.0), (-1, 0.5))]
        alph = None
    else:
        K = p["K"]
        # g_k repels at k/K + 1/2, so g_k^-1 expands (and zeta_k peaks) at k/K
        alph = Alphabet(tuple(PrimitiveMap.moebius(hyperbolic_matrix(p["s"], k / K + 0.5)) for k in range(K)))
        spikes = [Spike.from_word(alph.letter(k), alph, p["r"], k / K, grid, Q=p["Q"], theta=p["theta"], C=p["C"])
                  for k in range(K)]
    if "subset" in p:
        if max(p["subset"]) >= len(spikes):
            raise ConfigError(f"params/subset: index outside the family of {len(spikes)} spikes")
        spikes = [spikes[i] for i in p["subset"]]
    return alph, spikes


def run_spikes(cfg: dict) -> Outcome:
    from .ergodic import EmpiricalMeasure, greedy_unity, spike_csv, spike_validate, stationarity_residual
    p, out = cfg["params"], Outcome()
    alph, spikes = spike_family(p)
    reports = [spike_validate(s) for s in spikes]
    out.tables["spikes.csv"] = spike_csv(reports)
    out.check("spike_conditions", all(r.passed for r in reports),
              f"{sum(r.passed for r in reports)}/{len(reports)} spikes valid")
    res = greedy_unity(spikes, p["tol"], alphabet=alph)
    out.tables["unity.csv"] = _csv(["step", "sup_residual", "min_residual"],
                                   [(i, float(s), float(m)) for i, (s, m) in
                                    enumerate(zip(res.history, res.min_history))])
    out.check("greedy_unity", res.final < p["tol"] and min(res.min_history) >= 0,
              f"{res.rounds} rounds, final sup residual {res.final:.3e}, min residual {min(res.min_history):.3e}")
    if res.measure is not None:
        out.extra["measure"] = res.measure.to_list()
        rng = np.random.default_rng(cfg["seed"])
        nu = EmpiricalMeasure(rng.uniform(size=p["samples"]))
        sr = stationarity_residual(res.measure, nu, p["cells"])
        out.check("induced_measure_stationarity", sr.ratio < p["residual_max"],
                  f"residual {sr.residual:.3e}, half-width {sr.half_width:.3e}, ratio {sr.ratio:.2f}")
    return out


RUNNERS = {
    "cascade": run_cascade,
    "distortion": run_distortion,
    "expansion": run_expansion,
    "flow": run_flow,
    "walk": run_walk,
    "spikes": run_spikes,
}


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _manifest_hash(manifest: dict) -> str:
    stable = {k: v for k, v in manifest.items() if k not in ("wall_time_s", "started")}
    return hashlib.sha256(json.dumps(stable, sort_keys=True).encode()).hexdigest()


def run(cfg: dict, out_dir: Path, stream=None) -> int:
    """Run one validated scenario config; write artifacts and return the exit status."""
    scenario = cfg["scenario"]
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        outcome = RUNNERS[scenario](cfg)
    except ConfigError:
        raise
    except CircleLabError as err:
        # scenario-level failure (degeneracy, stall, precondition): a FAILED run
        outcome = Outcome()
        outcome.check(scenario, False, f"{type(err).__name__}: {err}")
    status = EXIT_OK if all(ok for _, ok, _ in outcome.checks) else EXIT_FAILED
    manifest = _jsonable({
        "tool": "circlelab",
        "version": __version__,
        "scenario": scenario,
        "seed": cfg["seed"],
        "config": cfg,
        "tolerances": cfg["tolerances"],
        "outputs": sorted([*outcome.tables, *outcome.files]),
        "checks": {name: ok for name, ok, _ in outcome.checks},
        "exit_status": status,
        **outcome.extra,
    })
    digest = _manifest_hash(manifest)
    manifest["manifest_sha256"] = digest
    manifest["started"] = time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started))
    manifest["wall_time_s"] = round(time.time() - started, 3)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for name, body in outcome.tables.items():
        (out_dir / name).write_text(f"# manifest sha256 {digest}\n{body}")
    for name, body in outcome.files.items():
        (out_dir / name).write_text(body)
    lines = [f"{'PASS' if ok else 'FAIL'} {scenario}:{name} {detail}".rstrip()
             for name, ok, detail in outcome.checks]
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line, file=stream or sys.stdout)
    return status


def _resolve_config(args, scenario: str, path) -> dict:
    if path is None:
        raw = {"scenario": scenario}
    else:
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
        if isinstance(raw, dict):
            raw.setdefault("scenario", scenario)
    if isinstance(raw, dict):
        if raw.get("scenario") != scenario and scenario != "all":
            raise ConfigError(f"config scenario {raw.get('scenario')!r} does not match subcommand {scenario!r}")
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.grid is not None:
            raw["grid"] = args.grid
    return cfgmod.validate(raw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circlelab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"circlelab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*cfgmod.SCENARIOS, "all"):
        sp = sub.add_parser(name, help=f"run the {name} scenario" if name != "all" else
                            "run every *.yaml config in a directory")
        sp.add_argument("--config", type=Path, default=None,
                        help="YAML config (a directory for 'all'); defaults apply when omitted")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        sp.add_argument("--threads", type=int, default=None, help="cap on worker threads")
        sp.add_argument("--grid", type=int, default=None, help="grid size (overrides the config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads is not None:
        import numba
        if args.threads < 1:
            print("config error: --threads must be positive", file=sys.stderr)
            return EXIT_CONFIG
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    if args.command == "all":
        root = args.config or Path("configs")
        if not root.is_dir():
            print(f"config error: {root} is not a directory", file=sys.stderr)
            return EXIT_CONFIG
        status = EXIT_OK
        for path in sorted(root.glob("*.yaml")):
            try:
                cfg = _resolve_config(args, "all", path)
            except ConfigError as err:
                print(f"FAIL {path.stem}: config error: {err}")
                status = max(status, EXIT_CONFIG)
                continue
            base = args.out or Path(cfg.get("out", "out"))
            status = max(status, run(cfg, base / path.stem))
        return status
    try:
        cfg = _resolve_config(args, args.command, args.config)
        out = args.out or Path(cfg.get("out", f"out/{args.command}"))
        return run(cfg, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
