"""Command-line driver: config parsing, artifact persistence, verification.

Configs are JSON; every numeric field is validated against its admissible
range at parse time and violations name the failed constraint.  All data
artifacts carry the config hash and print floats at seventeen significant
digits so reruns diff clean.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from .assembly import (ConfigurationError, ExteriorTrace, QuadConfig,
                       assemble_gram, assemble_load, assemble_mass,
                       solve_dirichlet)
from .diagnostics import (c0delta_norm, holder_seminorm, hopf_quotient_min,
                          linf_report, local_min_probe, max_principle_check,
                          negative_load_control)
from .geometry import Domain, Field, build_mesh
from .kernel import (AngularDensity, KernelSpec, MultiplierQuad,
                     check_structural_properties, multiplier_eval)
from .pointwise import ClosedFormFunction, lk_pointwise_pv, lk_pointwise_sd
from .report import PropertyVerdict
from .spectral import eigenpairs, spectral_report
from .variational import (NonlinearitySpec, functional_gradient,
                          functional_value, solve_three, validate_subcritical)

FLOAT_FMT = "%.17g"


class ConfigError(ValueError):
    """A configuration value violates its documented admissible range."""


def _require(cond, constraint):
    if not cond:
        raise ConfigError("configuration violates the constraint: %s"
                          % constraint)


def _density_from_config(cfg):
    kind = cfg.get("kind", "constant")
    data = cfg.get("data", 1.0)
    even = bool(cfg.get("even", True))
    if kind == "constant":
        return AngularDensity.constant(float(data))
    if kind == "sectors":
        return AngularDensity.sectors(data["breaks"], data["values"],
                                      even=even)
    if kind == "samples":
        return AngularDensity.samples(data, even=even)
    raise ConfigError("unknown angular density kind %r" % kind)


def parse_config(raw):
    """Validate a config dict and build the model objects."""
    kcfg = raw.get("kernel", {})
    n = int(kcfg.get("n", 1))
    s = float(kcfg.get("s", 0.25))
    _require(n in (1, 2), "spatial dimension n in {1, 2}")
    _require(0.0 < s < 1.0, "fractional order s in (0, 1)")
    _require(n > 2.0 * s, "n > 2s")
    density = _density_from_config(kcfg.get("a", {}))
    spec = KernelSpec(n, s, density)

    dcfg = raw.get("domain", {"kind": "interval", "bounds": [-1.0, 1.0]})
    if dcfg.get("kind", "interval") == "interval":
        _require(n == 1, "interval domains need n = 1")
        lo, hi = dcfg.get("bounds", [-1.0, 1.0])
        domain = Domain.interval(lo, hi)
    else:
        _require(n == 2, "polygon domains need n = 2")
        domain = Domain.polygon(dcfg["vertices"])

    mcfg = raw.get("mesh", {})
    target_h = float(mcfg.get("target_h", 1.0 / 32.0))
    _require(0.0 < target_h < domain.diameter(),
             "0 < target_h < domain diameter")
    refinements = int(mcfg.get("refinements", 0))
    _require(0 <= refinements <= 8, "0 <= refinements <= 8")

    qcfg = raw.get("quadrature", {})
    try:
        quad = QuadConfig(
            touching_order=int(qcfg.get("touching_order", 10)),
            disjoint_order=int(qcfg.get("disjoint_order", 10)),
            angular_order=int(qcfg.get("angular_order", 8)),
            boundary_layers=int(qcfg.get("boundary_layers", 6)))
    except ConfigurationError as exc:
        raise ConfigError(str(exc)) from exc

    nl_cfg = raw.get("nonlinearity", {"kind": "zero"})
    crit = 2.0 * n / (n - 2.0 * s)
    nl_kind = nl_cfg.get("kind", "zero")
    if nl_kind == "model":
        r = float(nl_cfg.get("r", 1.5))
        q = float(nl_cfg.get("q", 3.0))
        _require(1.0 < r < 2.0, "model exponent 1 < r < 2")
        _require(q > 2.0, "model exponent q > 2")
        _require(q < crit,
                 "subcritical growth 1 < q < 2n/(n-2s) = %g" % crit)
        frac = float(nl_cfg.get("beta1_fraction", 0.9))
        _require(0.0 < frac < 1.0, "beta1_fraction in (0, 1)")
        share = float(nl_cfg.get("b_share", 0.5))
        _require(0.0 < share < 1.0, "b_share in (0, 1)")
    elif nl_kind == "linear":
        float(nl_cfg.get("lam", 1.0))
    elif nl_kind != "zero":
        raise ConfigError("unknown nonlinearity kind %r" % nl_kind)

    scfg = raw.get("solver", {})
    tol = float(scfg.get("tol", 1e-8))
    _require(tol > 0.0, "solver tol > 0")
    iter_cap = int(scfg.get("iter_cap", 20000))
    _require(iter_cap > 0, "solver iter_cap > 0")
    path_nodes = int(scfg.get("path_nodes", 21))
    _require(path_nodes >= 5, "path_nodes >= 5")

    pcfg = raw.get("probe", {})
    probe_seed = int(pcfg.get("seed", 7))
    probe_samples = int(pcfg.get("samples", 64))
    probe_radius = float(pcfg.get("radius", 0.05))
    _require(probe_radius > 0.0, "probe radius > 0")

    return {
        "raw": raw,
        "spec": spec,
        "domain": domain,
        "target_h": target_h,
        "refinements": refinements,
        "quad": quad,
        "nl_cfg": nl_cfg,
        "tol": tol,
        "iter_cap": iter_cap,
        "path_nodes": path_nodes,
        "probe": (probe_seed, probe_samples, probe_radius),
    }


def config_hash(raw):
    blob = json.dumps(raw, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _load_from_config(cfg, dim):
    kind = cfg.get("kind", "constant")
    if kind == "constant":
        value = float(cfg.get("value", 1.0))
        return lambda x: np.full(np.shape(x)[0] if dim == 2
                                 else np.shape(x), value, dtype=float) \
            if np.ndim(x) else value

    if kind == "poly":
        coeffs = [float(c) for c in cfg.get("coeffs", [1.0])]

        def g(x):
            x1 = x[:, 0] if dim == 2 else np.asarray(x)
            return sum(c * x1 ** k for k, c in enumerate(coeffs))
        return g
    if kind == "gaussian":
        center = np.asarray(cfg.get("center", [0.0] * dim), dtype=float)
        width = float(cfg.get("width", 1.0))

        def g(x):
            pts = np.atleast_2d(x) if dim == 2 else \
                np.asarray(x, dtype=float).reshape(-1, 1)
            r2 = np.sum((pts - center) ** 2, axis=1)
            return np.exp(-r2 / width ** 2)
        return g
    raise ConfigError("unknown load kind %r" % kind)


def _trace_from_config(cfg):
    if cfg is None:
        return None
    kind = cfg.get("kind", "constant")
    radius = float(cfg.get("collar_radius", 1.0))
    if kind == "constant":
        return ExteriorTrace.constant(float(cfg.get("value", 0.0)), radius)
    raise ConfigError("unknown exterior trace kind %r" % kind)


def _function_from_config(cfg, n, s):
    kind = cfg.get("kind", "gaussian")
    if kind == "gaussian":
        return ClosedFormFunction.gaussian(n, cfg.get("center"),
                                           float(cfg.get("width", 1.0)))
    if kind == "torsion":
        return ClosedFormFunction.torsion_profile(n, s,
                                                  float(cfg.get("radius", 1.0)))
    if kind == "poly_cutoff":
        return ClosedFormFunction.poly_cutoff(n, cfg.get("coeffs", [1.0]),
                                              float(cfg.get("radius", 1.0)))
    if kind == "constant":
        return ClosedFormFunction.constant(n, float(cfg.get("value", 1.0)))
    raise ConfigError("unknown closed-form function kind %r" % kind)


def _write_rows(path, header_cols, rows, chash):
    with open(path, "w") as fh:
        fh.write("# config=%s\n" % chash)
        fh.write(",".join(header_cols) + "\n")
        for row in rows:
            fh.write(",".join(FLOAT_FMT % v if isinstance(v, float)
                              else str(v) for v in row) + "\n")


def _write_matrix_triplets(path, matrix, chash):
    with open(path, "w") as fh:
        fh.write("# config=%s\n" % chash)
        for i in range(matrix.shape[0]):
            for j in range(matrix.shape[1]):
                fh.write(("%d %d " + FLOAT_FMT + "\n")
                         % (i, j, matrix[i, j]))


def _write_json(path, payload, chash):
    payload = dict(payload)
    payload["config_hash"] = chash
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _field_rows(space, field):
    vals = field.nodal_values() if isinstance(field, Field) else field
    rows = []
    for k, x in enumerate(space.nodes):
        coords = [float(c) for c in np.atleast_1d(x)]
        rows.append([k] + coords + [float(vals[k])])
    return rows


def _build_space(cfg):
    space = build_mesh(cfg["domain"], cfg["target_h"])
    for _ in range(cfg["refinements"]):
        space = space.refine()
    return space


def _resolve_model(cfg, gram, space):
    nl_cfg = cfg["nl_cfg"]
    if nl_cfg.get("kind") != "model":
        raise ConfigError("this command needs nonlinearity.kind = 'model'")
    mass = assemble_mass(space)
    lam1 = float(eigenpairs(gram, mass, 1, space=space).values[0])
    beta1 = float(nl_cfg.get("beta1_fraction", 0.9)) * lam1
    share = float(nl_cfg.get("b_share", 0.5))
    nl = NonlinearitySpec.model(
        r=float(nl_cfg.get("r", 1.5)), q=float(nl_cfg.get("q", 3.0)),
        b=share * beta1, a1=(1.0 - share) * beta1, beta1=beta1)
    return nl, lam1, mass


# ----------------------------------------------------------------------
# commands


def cmd_assemble(cfg, out, chash):
    space = _build_space(cfg)
    gram = assemble_gram(space, cfg["spec"], cfg["quad"])
    mass = assemble_mass(space)
    _write_matrix_triplets(os.path.join(out, "gram.txt"), gram.matrix, chash)
    _write_matrix_triplets(os.path.join(out, "mass.txt"), mass, chash)
    load_cfg = cfg["raw"].get("load")
    if load_cfg:
        g = _load_from_config(load_cfg, cfg["spec"].n)
        vec = assemble_load(space, g)
        _write_rows(os.path.join(out, "load.csv"), ["i", "value"],
                    [[i, float(v)] for i, v in enumerate(vec)], chash)
    return 0


def cmd_eigs(cfg, out, chash):
    space = _build_space(cfg)
    gram = assemble_gram(space, cfg["spec"], cfg["quad"])
    mass = assemble_mass(space)
    count = int(cfg["raw"].get("eigs", {}).get("count", 6))
    count = min(count, space.n_interior)
    res = eigenpairs(gram, mass, count, space=space)
    _write_rows(os.path.join(out, "eigenvalues.csv"), ["k", "lambda"],
                [[k, float(v)] for k, v in enumerate(res.values)], chash)
    rows = []
    for k, x in enumerate(space.nodes):
        coords = [float(c) for c in np.atleast_1d(x)]
        vals = [float(res.eigenfield(m).nodal_values()[k])
                for m in range(count)]
        rows.append([k] + coords + vals)
    cols = ["node"] + ["x%d" % d for d in range(space.dim)] \
        + ["e%d" % (m + 1) for m in range(count)]
    _write_rows(os.path.join(out, "eigenvectors.csv"), cols, rows, chash)
    verdicts = spectral_report(res, space, cfg["spec"].s) if count >= 3 else []
    _write_json(os.path.join(out, "spectral_report.json"),
                {"eigenvalues": [float(v) for v in res.values],
                 "verdicts": [v.to_json() for v in verdicts]}, chash)
    return 0


def cmd_solve_linear(cfg, out, chash):
    space = _build_space(cfg)
    gram = assemble_gram(space, cfg["spec"], cfg["quad"])
    g = _load_from_config(cfg["raw"].get("load", {"kind": "constant"}),
                          cfg["spec"].n)
    trace = _trace_from_config(cfg["raw"].get("exterior"))
    shift_c = float(cfg["raw"].get("shift_c", 0.0))
    u = solve_dirichlet(gram, space, g, trace=trace, shift_c=shift_c,
                        quad_cfg=cfg["quad"])
    cols = ["node"] + ["x%d" % d for d in range(space.dim)] + ["value"]
    _write_rows(os.path.join(out, "solution.csv"), cols,
                _field_rows(space, u), chash)
    s = cfg["spec"].s
    sup, lp = linf_report(space, u, s)
    _write_json(os.path.join(out, "solution_report.json"), {
        "norm_linf": sup,
        "norm_critical_lebesgue": lp,
        "norm_c0delta": c0delta_norm(space, u, s),
        "hopf_quotient_min": hopf_quotient_min(space, u, s),
    }, chash)
    return 0


def cmd_solve_multi(cfg, out, chash):
    space = _build_space(cfg)
    gram = assemble_gram(space, cfg["spec"], cfg["quad"])
    nl, lam1, mass = _resolve_model(cfg, gram, space)
    validate_subcritical(nl, cfg["spec"])
    cp, cm, ct, report = solve_three(
        gram, space, nl, tol=cfg["tol"], path_nodes=cfg["path_nodes"],
        iter_cap=cfg["iter_cap"])
    cols = ["node"] + ["x%d" % d for d in range(space.dim)] + ["value"]
    for name, sol in (("u_plus", cp), ("u_minus", cm), ("u_saddle", ct)):
        _write_rows(os.path.join(out, "%s.csv" % name), cols,
                    _field_rows(space, sol.field), chash)
    _write_json(os.path.join(out, "solve_report.json"), report.to_json(),
                chash)
    return 0 if report.all_passed else 1


def cmd_operator_eval(cfg, out, chash):
    raw = cfg["raw"].get("operator_eval", {})
    spec = cfg["spec"]
    fn = _function_from_config(raw.get("function", {"kind": "gaussian"}),
                               spec.n, spec.s)
    points = raw.get("points")
    if points is None:
        points = [[0.0] * spec.n, [0.3] * spec.n]
    rows = []
    for x in points:
        xv = np.asarray(x, dtype=float)
        sd_val, sd_err = lk_pointwise_sd(spec, fn, xv)
        pv_val, pv_err = lk_pointwise_pv(spec, fn, xv)
        coords = [float(c) for c in np.atleast_1d(xv)]
        rows.append(coords + [sd_val, sd_err, pv_val, pv_err])
        print(",".join(FLOAT_FMT % v for v in rows[-1]))
    cols = ["x%d" % d for d in range(spec.n)] \
        + ["second_difference", "sd_error", "principal_value", "pv_error"]
    _write_rows(os.path.join(out, "operator_eval.csv"), cols, rows, chash)
    return 0


def _torsion_exact_constant(spec):
    """1 / (2 L u0) with u0 the unit-ball profile: the energy form weak
    problem corresponds to twice the pointwise operator."""
    u0 = ClosedFormFunction.torsion_profile(spec.n, spec.s)
    value, err = lk_pointwise_sd(spec, u0, np.zeros(spec.n))
    return 1.0 / (2.0 * value), err / (2.0 * value * value), value


def cmd_torsion(cfg, out, chash):
    spec = cfg["spec"]
    if spec.n != 1 or cfg["domain"].data != (-1.0, 1.0):
        raise ConfigError("the torsion benchmark runs on interval(-1, 1)")
    c_t, c_err, lk_value = _torsion_exact_constant(spec)
    # constancy of the operator value across the ball
    u0 = ClosedFormFunction.torsion_profile(1, spec.s)
    others = [lk_pointwise_sd(spec, u0, np.array([x]))[0]
              for x in (0.3, 0.5)]
    constancy = max(abs(v - lk_value) for v in others) / lk_value

    refinements = int(cfg["raw"].get("torsion", {}).get("refinements", 3))
    space = _build_space(cfg)
    rows = []
    errors = []
    from .assembly import element_quadrature
    for _ in range(refinements):
        gram = assemble_gram(space, spec, cfg["quad"])
        u = solve_dirichlet(gram, space, lambda x: np.ones_like(x))
        points, weights, basis = element_quadrature(space, 6)
        uh = basis @ u.nodal_values()
        exact = c_t * np.maximum(0.0, 1.0 - points.reshape(-1) ** 2) ** spec.s
        err = np.sqrt(np.dot(weights, (uh - exact) ** 2))
        norm = np.sqrt(np.dot(weights, exact ** 2))
        errors.append(float(err / norm))
        rows.append([float(space.h_max), errors[-1],
                     float(errors[-1] / errors[-2]) if len(errors) > 1
                     else float("nan")])
        space = space.refine()
    _write_rows(os.path.join(out, "torsion.csv"),
                ["h", "rel_l2_error", "ratio"], rows, chash)
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    ratios_ok = all(b / a <= 0.8 for a, b in zip(errors, errors[1:]))
    _write_json(os.path.join(out, "torsion.json"), {
        "c_torsion": c_t,
        "c_torsion_error": c_err,
        "operator_value": lk_value,
        "constancy_defect": constancy,
        "rel_l2_errors": errors,
        "monotone": decreasing,
        "ratios_below_0.8": ratios_ok,
    }, chash)
    return 0 if (decreasing and ratios_ok) else 1


def _verify_battery(cfg):
    """Fast verification battery over the configured problem."""
    spec = cfg["spec"]
    verdicts = []

    report = check_structural_properties(spec)
    verdicts.append(PropertyVerdict(
        name="kernel-structural-properties", passed=report.all_ok,
        measured=report.mk_integral, threshold=float("inf"),
        context={"evenness_defect": report.evenness_defect}))

    xi = np.ones(spec.n)
    s_base = multiplier_eval(spec, xi)
    s_scaled = multiplier_eval(spec, 2.0 * xi)
    defect = abs(s_scaled - 2.0 ** (2 * spec.s) * s_base) / abs(s_scaled)
    verdicts.append(PropertyVerdict(
        name="multiplier-homogeneity", passed=bool(defect <= 1e-6),
        measured=defect, threshold=1e-6, context={}))

    space = _build_space(cfg)
    gram = assemble_gram(space, spec, cfg["quad"])
    mass = assemble_mass(space)
    sym = float(np.max(np.abs(gram.matrix - gram.matrix.T)))
    min_eig = float(np.min(np.linalg.eigvalsh(gram.matrix)))
    verdicts.append(PropertyVerdict(
        name="gram-symmetric-positive-definite",
        passed=bool(sym <= 1e-12 * np.max(np.abs(gram.matrix))
                    and min_eig > 0.0),
        measured=min_eig, threshold=0.0, context={"asymmetry": sym}))

    count = min(4, space.n_interior)
    res = eigenpairs(gram, mass, count, space=space)
    verdicts.extend(spectral_report(res, space, spec.s))

    rng = np.random.default_rng(cfg["probe"][0])
    ok_loads = True
    worst = 0.0
    for _ in range(20):
        amps = rng.random(3)

        def g(x, amps=amps):
            xx = x[:, 0] if spec.n == 2 else x
            return amps[0] + amps[1] * np.abs(np.sin(3 * xx)) \
                + amps[2] * xx ** 2

        verdict, _ = max_principle_check(gram, space, spec, g)
        ok_loads &= verdict.passed
        worst = min(worst, verdict.measured)
    verdicts.append(PropertyVerdict(
        name="max-principle-load-battery", passed=bool(ok_loads),
        measured=worst, threshold=0.0, context={"cases": 20,
                                                "seed": cfg["probe"][0]}))
    if spec.n == 1:
        lam1 = float(res.values[0])
        trace = ExteriorTrace.constant(0.5, 1.0)
        ok_tr = True
        for c in (0.0, 0.5 * lam1):
            verdict, _ = max_principle_check(gram, space, spec,
                                             lambda x: 0.1 + 0.0 * x,
                                             trace=trace, shift_c=c)
            ok_tr &= verdict.passed
        verdicts.append(PropertyVerdict(
            name="max-principle-exterior-trace", passed=bool(ok_tr),
            measured=float(ok_tr), threshold=1.0, context={}))

    torsion = solve_dirichlet(gram, space, lambda x: np.ones_like(
        x[:, 0] if spec.n == 2 else x))
    q_min = hopf_quotient_min(space, torsion, spec.s)
    verdicts.append(PropertyVerdict(
        name="hopf-quotient-torsion", passed=bool(q_min > 0.0),
        measured=q_min, threshold=0.0, context={}))

    semi = holder_seminorm(space, torsion.nodal_values(), spec.s)
    fine = space.refine()
    gram_f = assemble_gram(fine, spec, cfg["quad"])
    torsion_f = solve_dirichlet(gram_f, fine, lambda x: np.ones_like(
        x[:, 0] if spec.n == 2 else x))
    semi_f = holder_seminorm(fine, torsion_f.nodal_values(), spec.s)
    verdicts.append(PropertyVerdict(
        name="holder-seminorm-bounded", passed=bool(semi_f / semi <= 1.5),
        measured=float(semi_f / semi), threshold=1.5,
        context={"coarse": semi, "fine": semi_f}))

    rng = np.random.default_rng(cfg["probe"][0] + 1)
    nl_smooth = NonlinearitySpec.custom(
        lambda x, t: np.sin(t) + t ** 3,
        lambda x, t: 1.0 - np.cos(t) + 0.25 * t ** 4,
        growth_c=2.0, growth_q=4.0)
    fd_worst = 0.0
    eps = 1e-4
    for _ in range(20):
        u = 0.5 * rng.standard_normal(space.n_interior)
        v = rng.standard_normal(space.n_interior)
        grad = functional_gradient(gram, space, nl_smooth, u)
        fd = (functional_value(gram, space, nl_smooth, u + eps * v)
              - functional_value(gram, space, nl_smooth, u - eps * v)) \
            / (2 * eps)
        fd_worst = max(fd_worst,
                       abs(fd - grad @ v) / (1.0 + abs(grad @ v)))
    verdicts.append(PropertyVerdict(
        name="gradient-finite-difference", passed=bool(fd_worst <= 1e-6),
        measured=fd_worst, threshold=1e-6, context={"pairs": 20}))

    if spec.n == 1 and cfg["nl_cfg"].get("kind") == "model":
        nl, lam1, _ = _resolve_model(cfg, gram, space)
        cp, cmn, ct, solve_report = solve_three(
            gram, space, nl, tol=cfg["tol"],
            path_nodes=cfg["path_nodes"], iter_cap=cfg["iter_cap"])
        verdicts.extend(solve_report.verdicts)
        seed, samples, radius = cfg["probe"]
        for norm_kind in ("X", "C0delta"):
            verdicts.append(local_min_probe(
                gram, space, nl, cp.field, radius=radius,
                norm_kind=norm_kind, samples=samples, seed=seed))
        e1 = res.vectors[:, 0]
        origin_probe = local_min_probe(
            gram, space, nl, Field.zero(space), radius=0.5, norm_kind="X",
            samples=samples, seed=seed, extra_directions=[e1])
        verdicts.append(PropertyVerdict(
            name="origin-not-local-minimizer",
            passed=bool(not origin_probe.passed),
            measured=origin_probe.measured,
            threshold=origin_probe.threshold,
            context=origin_probe.context))

    fn = ClosedFormFunction.gaussian(spec.n)
    equiv_ok = True
    worst_gap = 0.0
    for x in ([0.0] * spec.n, [0.2] * spec.n, [-0.4] * spec.n):
        xv = np.asarray(x, dtype=float)
        sd_val, sd_err = lk_pointwise_sd(spec, fn, xv)
        pv_val, pv_err = lk_pointwise_pv(spec, fn, xv)
        gap = abs(sd_val - pv_val)
        worst_gap = max(worst_gap, gap)
        equiv_ok &= gap <= max(sd_err + pv_err, 1e-8)
    verdicts.append(PropertyVerdict(
        name="pointwise-definitions-agree", passed=bool(equiv_ok),
        measured=worst_gap, threshold=1e-8, context={"points": 3}))
    return verdicts


def cmd_verify(cfg, out, chash):
    verdicts = _verify_battery(cfg)
    _write_json(os.path.join(out, "verify.json"),
                {"verdicts": [v.to_json() for v in verdicts]}, chash)
    for v in verdicts:
        print("%s %s (measured=%.6g threshold=%.6g)"
              % ("PASS" if v.passed else "FAIL", v.name, v.measured,
                 v.threshold))
    return 0 if all(v.passed for v in verdicts) else 1


COMMANDS = {
    "assemble": cmd_assemble,
    "eigs": cmd_eigs,
    "solve-linear": cmd_solve_linear,
    "solve-multi": cmd_solve_multi,
    "operator-eval": cmd_operator_eval,
    "verify": cmd_verify,
    "torsion": cmd_torsion,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="anisokernel",
        description="Nonlocal anisotropic Dirichlet problems: assembly, "
                    "spectra, multiplicity solves, and property checks.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--refine", type=int, default=None,
                        help="override mesh refinement count")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print("error: cannot read config: %s" % exc, file=sys.stderr)
        return 2
    try:
        if args.refine is not None:
            raw.setdefault("mesh", {})["refinements"] = args.refine
        cfg = parse_config(raw)
        out = args.out or raw.get("output_dir", "out")
        os.makedirs(out, exist_ok=True)
        chash = config_hash(raw)
        return COMMANDS[args.command](cfg, out, chash)
    except (ConfigError, ConfigurationError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
