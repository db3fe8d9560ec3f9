"""Command-line front end: ``umeit <subcommand> [-c config.ini] [--set section.key=value ...]``.

Every run writes its artifacts and a ``manifest.json`` (resolved config,
seed, metrics, artifact list, exit status) under ``[output] dir``. Exit
codes: 0 success, 2 precondition rejected, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from . import _backend
from .bench import (Measurements, Scenario, annulus_gradient_floor, holder_check, loglog_slope, median_ratios,
                    noninjectivity_demo, stability_sweep, tilt_sweep, write_records)
from .cgo import CgoSpec, measure_bundle, slab_reconstruct, write_bundle
from .config import RunConfig, load_config
from .elliptic import internal_functional, neumann_trace, read_trace, solve_elliptic, write_trace
from .errors import NumericalAbort, PreconditionError
from .fields import gradient, read_field, write_csv, write_field, write_pgm
from .geometry import annulus, boundary_integral, build_domain, disc, ovoid, rectangle, slab
from .hypersolve import RADIAL_INWARD, AXIS_X1, MarchConfig, march_nonlinear, march_polar
from .lorentz import classify_boundary, metric_single
from .models import illumination, sigma_from_model
from .modulation import recover_H, synthesize_J1

log = logging.getLogger("umeit")

SUBCOMMANDS = ("forward", "modulate", "classify", "reconstruct", "annulus", "cgo-slab",
               "bench-stability", "bench-noninjectivity", "bench-annulus")
EXIT_OK, EXIT_PRECONDITION, EXIT_ABORT = 0, 2, 3


class Run:
    """Output directory, artifact list and metrics of one invocation."""

    def __init__(self, cfg: RunConfig, subcommand, threads=1):
        self.cfg = cfg
        self.subcommand = subcommand
        self.threads = threads
        self.outdir = cfg["output"]["dir"]
        os.makedirs(self.outdir, exist_ok=True)
        self.artifacts = []
        self.metrics = {}

    def path(self, name):
        self.artifacts.append(name)
        return os.path.join(self.outdir, name)

    def field(self, name, f):
        write_field(self.path(f"{name}.field"), f)
        if self.cfg["output"]["pgm"]:
            write_pgm(self.path(f"{name}.pgm"), f.values)

    def map(self, fn, items):
        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                return list(ex.map(fn, items))
        return [fn(x) for x in items]

    def manifest(self, status, code, error=None, details=None):
        data = {
            "umeit_version": __version__, "backend": _backend.BACKEND, "subcommand": self.subcommand,
            "status": status, "exit_code": code, "seed": self.cfg.seed, "config": self.cfg.to_dict(),
            "metrics": self.metrics, "artifacts": sorted(set(self.artifacts)),
        }
        if error is not None:
            data["error"] = error
        if details:
            data["details"] = details
        with open(os.path.join(self.outdir, "manifest.json"), "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True, default=_plain, allow_nan=True)
        return data


def _plain(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


# ---------------------------------------------------------------- builders

def make_domain(cfg: RunConfig):
    d = cfg["domain"]
    kind = d["kind"]
    ny = d["ny"] or None
    if kind == "rectangle":
        spec = rectangle(d["Lx"], d["Ly"], d["nx"], ny)
    elif kind == "slab":
        spec = slab(d["L"], d["a"], d["nx"], ny)
    elif kind == "disc":
        spec = disc(d["R"], d["n"])
    elif kind == "ovoid":
        spec = ovoid(d["semi_a"], d["semi_b"], d["n"])
    elif kind == "annulus":
        spec = annulus(d["r_inner"], d["r_outer"], d["nr"], d["nphi"] or None)
    else:
        raise PreconditionError(f"[domain] kind = {kind!r} is not one of rectangle, slab, disc, ovoid, annulus")
    return build_domain(spec)


def make_sigma(cfg: RunConfig, domain):
    s = cfg["sigma"]
    if s["file"]:
        f = read_field(s["file"])
        if f.values.shape != domain.grid.shape:
            raise PreconditionError(f"[sigma] file grid {f.values.shape} does not match the domain {domain.grid.shape}")
        return f
    return sigma_from_model(domain, s["model"], **cfg.model_params("sigma"))


def make_illumination(cfg: RunConfig, domain):
    return illumination(domain, cfg["illumination"]["model"], **cfg.model_params("illumination"))


def march_config(cfg: RunConfig, domain):
    m = cfg["march"]
    direction = RADIAL_INWARD if domain.kind == "annulus" else AXIS_X1
    return MarchConfig(direction, m["cfl"], m["g_min"], m["margin_min"], m["picard_iters"])


def _reconstruct(domain, H, trace, mcfg):
    if domain.kind == "annulus":
        return march_polar(domain, H, trace, mcfg)
    return march_nonlinear(domain, H, trace, mcfg)


# ---------------------------------------------------------------- subcommands

def cmd_forward(run: Run):
    domain = make_domain(run.cfg)
    sigma = make_sigma(run.cfg, domain)
    u = solve_elliptic(domain, sigma, make_illumination(run.cfg, domain))
    H = internal_functional(sigma, u)
    tr = neumann_trace(domain, sigma, u)
    run.field("sigma", sigma)
    run.field("u", u)
    run.field("H", H)
    write_trace(run.path("trace.csv"), tr, domain)
    run.metrics.update(H_min=float(np.nanmin(H.values)), H_max=float(np.nanmax(H.values)),
                       flux_balance=boundary_integral(domain, tr.flux) if domain.is_tensor else None)


def cmd_modulate(run: Run):
    domain = make_domain(run.cfg)
    sigma = make_sigma(run.cfg, domain)
    f = make_illumination(run.cfg, domain)
    mod = run.cfg["modulation"]
    table = synthesize_J1(domain, sigma, f, mod["m_max"], mod["eps"],
                          progress=lambda i, n: log.info("lattice point %d/%d", i, n))
    table.to_csv(run.path("J1.csv"))
    H_rec = recover_H(domain, table)
    run.field("H_recovered", H_rec)
    H = internal_functional(sigma, solve_elliptic(domain, sigma, f))
    ok = np.isfinite(H.values) & np.isfinite(H_rec.values)
    run.metrics["H_rel_L2"] = float(np.linalg.norm(H_rec.values[ok] - H.values[ok]) / np.linalg.norm(H.values[ok]))


def cmd_classify(run: Run):
    domain = make_domain(run.cfg)
    sigma = make_sigma(run.cfg, domain)
    u = solve_elliptic(domain, sigma, make_illumination(run.cfg, domain))
    metric = metric_single(u, internal_functional(sigma, u), run.cfg["march"]["g_min"])
    cls = classify_boundary(domain, metric)
    cls.to_csv(run.path("classification.csv"))
    crossings = cls.null_crossings()
    rows = [(c, p, s, math.degrees(p) % 360.0) for c, p, s in crossings]
    write_csv(run.path("null_crossings.csv"), ["component", "param", "arclength", "angle_deg"], rows)
    tags, counts = np.unique(cls.tag, return_counts=True)
    run.metrics.update(null_crossings=len(rows), min_margin=float(np.nanmin(cls.margin)),
                       tag_counts={str(t): int(c) for t, c in zip(tags, counts)})


def cmd_reconstruct(run: Run):
    domain = make_domain(run.cfg)
    src = run.cfg["march"]["input"]
    sigma_true = None
    if src:
        H = read_field(os.path.join(src, "H.field"))
        if H.values.shape != domain.grid.shape:
            raise PreconditionError(f"[march] input H grid {H.values.shape} does not match the domain {domain.grid.shape}")
        trace = read_trace(os.path.join(src, "trace.csv"))
        sp = os.path.join(src, "sigma.field")
        sigma_true = read_field(sp) if os.path.exists(sp) else None
    else:
        sigma_true = make_sigma(run.cfg, domain)
        u = solve_elliptic(domain, sigma_true, make_illumination(run.cfg, domain))
        H, trace = internal_functional(sigma_true, u), neumann_trace(domain, sigma_true, u)
    res = _reconstruct(domain, H, trace, march_config(run.cfg, domain))
    _write_result(run, res, sigma_true)


def _write_result(run, res, sigma_true, prefix="recon"):
    extra = {}
    if sigma_true is not None:
        extra["sigma_rel_L2"] = res.error_vs(sigma_true)
    res.write(run.outdir, prefix, extra)
    run.artifacts += [f"{prefix}_u.field", f"{prefix}_sigma.field", f"{prefix}_failure_log.csv", f"{prefix}_manifest.json"]
    if run.cfg["output"]["pgm"]:
        write_pgm(run.path(f"{prefix}_sigma.pgm"), res.sigma.values)
    run.metrics.update(valid_fraction=float(res.valid_mask.mean()), trim_counts=res.trim_counts(),
                       substeps=res.substeps, **extra)
    run.metrics.update({k: v for k, v in res.stats.items() if isinstance(v, (int, float, str))})


def cmd_annulus(run: Run):
    domain = make_domain(run.cfg)
    if domain.kind != "annulus":
        raise PreconditionError(f"[domain] kind must be annulus for this subcommand, got {domain.kind!r}")
    sigma = make_sigma(run.cfg, domain)
    u = solve_elliptic(domain, sigma, make_illumination(run.cfg, domain))
    H, trace = internal_functional(sigma, u), neumann_trace(domain, sigma, u)
    res = march_polar(domain, H, trace, march_config(run.cfg, domain))
    run.metrics["min_grad_u"] = float(gradient(u).norm[1:-1].min())
    _write_result(run, res, sigma)


def _cgo_parts(run):
    cfg = run.cfg
    domain = make_domain(cfg)
    if domain.kind != "slab":
        raise PreconditionError(f"[domain] kind must be slab for cgo-slab, got {domain.kind!r}")
    if cfg["illumination"]["model"] != "cgo":
        raise PreconditionError("[illumination] model must be cgo for cgo-slab")
    k = cfg.model_params("illumination").get("k", 4.0)
    spec = CgoSpec(k, cfg["march"]["w"], cfg["march"]["slabs"], cfg["domain"]["a"])
    return domain, spec, k


def cmd_cgo_slab(run: Run):
    domain, spec, k = _cgo_parts(run)
    sigma = make_sigma(run.cfg, domain)
    f1 = illumination(domain, "cgo", k=k, part=0.0)
    f2 = illumination(domain, "cgo", k=k, part=1.0)
    bundle = measure_bundle(domain, sigma, f1, f2)
    write_bundle(os.path.join(run.outdir, "bundle"), bundle, domain)
    run.artifacts.append("bundle/")
    res = slab_reconstruct(domain, bundle, spec, march_config(run.cfg, domain))
    res.diagnostics.to_csv(run.path("slab_diagnostics.csv"))
    X, Y = domain.grid.cartesian()
    core = np.abs(Y) <= 0.5
    run.metrics["sigma_rel_L2_core"] = res.error_vs(sigma, core)
    _write_result(run, res, sigma)


def _scenario(run):
    cfg = run.cfg
    domain = make_domain(cfg)
    sigma = make_sigma(cfg, domain)
    mcfg = march_config(cfg, domain)
    if cfg["illumination"]["model"] == "cgo":
        _, spec, k = _cgo_parts(run)
        ill = (illumination(domain, "cgo", k=k, part=0.0), illumination(domain, "cgo", k=k, part=1.0))
        return Scenario("cgo", domain, sigma, ill, kind="cgo", cfg=mcfg, cgo_spec=spec)
    return Scenario(domain.kind, domain, sigma, (make_illumination(cfg, domain),), cfg=mcfg)


def cmd_bench_stability(run: Run):
    cfg = run.cfg
    noise = cfg["noise"]
    sc = _scenario(run)
    recs = stability_sweep(sc, noise["levels"], noise["trials"], noise["seed"], noise["cauchy_level"], map_fn=run.map)
    write_records(run.path("stability.csv"), recs)
    med = median_ratios(recs)
    vals = [v for v in med.values() if np.isfinite(v)]
    run.metrics.update(median_ratio={repr(k): v for k, v in med.items()},
                       ratio_spread=max(vals) / min(vals) if vals else None,
                       censored=sum(r.censored for r in recs))
    if sc.kind == "march" and sc.domain.kind == "slab":
        d = cfg["domain"]
        rows = tilt_sweep(noise["tilts"], noise["levels"][len(noise["levels"]) // 2], max(3, noise["trials"] // 2),
                          noise["seed"], n=d["nx"], a=d["a"], map_fn=run.map)
        write_csv(run.path("tilt.csv"), ["tilt", "theta_margin", "median_ratio"], rows)
        run.metrics["tilt_loglog_slope"] = loglog_slope([1 / r[1] ** 2 for r in rows], [r[2] for r in rows])
        for s in noise["holder_s"]:
            tab = holder_check(sc, s)
            tab.to_csv(run.path(f"holder_s{s:g}.csv"))
            run.metrics[f"holder_exponent_s{s:g}"] = tab.exponent
            run.metrics[f"holder_C_spread_s{s:g}"] = tab.C_spread


def cmd_bench_noninjectivity(run: Run):
    rep = noninjectivity_demo(tuple(int(n) for n in run.cfg["noise"]["sizes"]))
    sq = rep["square"]
    write_csv(run.path("square_kernel.csv"), list(sq[0]), ([r[k] for k in sq[0]] for r in sq))
    dc = rep["disc"]
    write_csv(run.path("disc_singular_values.csv"), list(dc[0]), ([r[k] for k in dc[0]] for r in dc))
    run.metrics.update(max_square_residual=max(r["residual"] for r in sq),
                       disc_sigma_min={str(r["n"]): r["sigma_min"] for r in dc},
                       disc_kernel_dim={str(r["n"]): r["kernel_dim"] for r in dc})


def cmd_bench_annulus(run: Run):
    d = run.cfg["domain"]
    rep = annulus_gradient_floor(run.cfg["noise"]["samples"], run.cfg["noise"]["seed"], d["nr"], d["nphi"] or 2 * d["nr"])
    write_csv(run.path("gradient_floor.csv"), ["sample", "min_grad", "ratio_to_baseline", "level_set_components"], rep.rows)
    run.metrics.update(baseline=rep.baseline, worst_ratio=rep.worst_ratio,
                       max_components=max(r[3] for r in rep.rows))


COMMANDS = {
    "forward": cmd_forward, "modulate": cmd_modulate, "classify": cmd_classify, "reconstruct": cmd_reconstruct,
    "annulus": cmd_annulus, "cgo-slab": cmd_cgo_slab, "bench-stability": cmd_bench_stability,
    "bench-noninjectivity": cmd_bench_noninjectivity, "bench-annulus": cmd_bench_annulus,
}


def build_parser():
    p = argparse.ArgumentParser(prog="umeit", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("-c", "--config", help="INI config file or a previous run's manifest.json")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent trials")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"umeit {__version__} ({_backend.BACKEND})")
    return p


def run(subcommand, config=None, overrides=(), threads=1):
    """Execute one subcommand; returns ``(exit code, manifest dict)``."""
    try:
        cfg = load_config(config, overrides)
    except PreconditionError as exc:
        log.error("%s", exc)
        return EXIT_PRECONDITION, {"status": "config_error", "error": str(exc), "exit_code": EXIT_PRECONDITION}
    r = Run(cfg, subcommand, threads)
    try:
        COMMANDS[subcommand](r)
    except PreconditionError as exc:
        log.error("precondition: %s", exc)
        return EXIT_PRECONDITION, r.manifest("precondition_error", EXIT_PRECONDITION, str(exc))
    except NumericalAbort as exc:
        log.error("numerical abort: %s", exc)
        details = getattr(exc, "details", {})
        write_csv(r.path("failure_log.csv"), ["key", "value"], [("message", str(exc))] + sorted((k, str(v)) for k, v in details.items()))
        return EXIT_ABORT, r.manifest("numerical_abort", EXIT_ABORT, str(exc), details)
    return EXIT_OK, r.manifest("ok", EXIT_OK)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    code, manifest = run(args.subcommand, args.config, args.overrides, args.threads)
    if code == EXIT_OK:
        print(json.dumps(manifest.get("metrics", {}), sort_keys=True, default=_plain))
    return code


if __name__ == "__main__":
    sys.exit(main())
