"""Executable checks: weighted norms, maximum principles, Hopf quotients,
Hoelder seminorms, and the local-minimizer probe.

Each check returns a PropertyVerdict carrying the measured quantity, the
threshold, and enough context to reproduce the run.  Discretization is
not expected to satisfy an exact discrete maximum principle, so the
sign checks allow a small relative undershoot.
"""

import numpy as np

from .assembly import assemble_load, assemble_mass, element_quadrature, \
    solve_dirichlet
from .geometry import Field
from .report import PropertyVerdict
from .variational import functional_value

MAX_PRINCIPLE_TOL = 1e-3       # relative undershoot allowed near the boundary


def c0delta_norm(space, u, s):
    """Weighted supremum norm: max over interior nodes of |u| / delta^s."""
    coeffs = u.coeffs if isinstance(u, Field) else np.asarray(u, dtype=float)
    delta = space.node_delta[space.interior_nodes]
    if len(coeffs) == 0:
        return 0.0
    return float(np.max(np.abs(coeffs) / delta ** s))


def hopf_quotient_min(space, u, s):
    """Signed minimum of u / delta^s over interior nodes."""
    coeffs = u.coeffs if isinstance(u, Field) else np.asarray(u, dtype=float)
    delta = space.node_delta[space.interior_nodes]
    if len(coeffs) == 0:
        return 0.0
    return float(np.min(coeffs / delta ** s))


def max_principle_check(gram, space, spec, g, trace=None, shift_c=0.0,
                        tol=MAX_PRINCIPLE_TOL, name="max-principle"):
    """Solve the (possibly c-shifted) linear problem and check u >= 0.

    Preconditions g >= 0 at quadrature points and a nonnegative exterior
    trace are validated; the verdict allows a relative undershoot of
    `tol` because P1 Galerkin matrices of nonlocal forms carry no exact
    discrete maximum principle.
    """
    points, _, _ = element_quadrature(space)
    gv = np.asarray(g(points if space.dim == 2 else points.reshape(-1)),
                    dtype=float)
    if np.any(gv < -1e-14 * max(1.0, np.max(np.abs(gv)))):
        raise ValueError("the load must be nonnegative for the maximum "
                         "principle check")
    if trace is not None and not trace.is_nonnegative_sampled(space.domain):
        raise ValueError("the exterior trace must be nonnegative for the "
                         "maximum principle check")
    if shift_c < 0.0:
        raise ValueError("the zero-order shift must be nonnegative")
    u = solve_dirichlet(gram, space, g, trace=trace, shift_c=shift_c)
    amp = float(np.max(np.abs(u.coeffs))) if len(u.coeffs) else 0.0
    min_val = float(np.min(u.coeffs)) if len(u.coeffs) else 0.0
    passed = min_val >= -tol * amp
    return PropertyVerdict(
        name=name,
        passed=bool(passed),
        measured=min_val,
        threshold=-tol * amp,
        context={"shift_c": shift_c, "amplitude": amp,
                 "s": gram.kernel.s}), u


def holder_seminorm(space, values, exponent, max_pairs=10 ** 6,
                    exclude_corner_radius=0.0, nodes=None):
    """Node-pair Hoelder quotient sup |v_i - v_j| / |x_i - x_j|^alpha.

    `values` are per-node (all mesh nodes unless `nodes` selects a
    subset).  Pairs are subsampled with a deterministic stride when the
    pair count exceeds `max_pairs`; pairs with both nodes within
    `exclude_corner_radius` of a polygon corner are skipped.
    """
    if not 0.0 < exponent <= 1.0:
        raise ValueError("exponent must lie in (0, 1]")
    values = np.asarray(values, dtype=float)
    if nodes is None:
        nodes = np.arange(len(space.nodes))
    pts = space.nodes[nodes].reshape(len(nodes), -1)
    vals = values
    if len(vals) != len(nodes):
        raise ValueError("value count does not match the node selection")
    keep = np.ones(len(nodes), dtype=bool)
    if exclude_corner_radius > 0.0 and space.dim == 2:
        corners = space.domain.vertices
        for c in corners:
            keep &= np.linalg.norm(pts - c, axis=1) > exclude_corner_radius
    pts = pts[keep]
    vals = vals[keep]
    n = len(pts)
    n_pairs = n * (n - 1) // 2
    ii, jj = np.triu_indices(n, k=1)
    if n_pairs > max_pairs:
        stride = int(np.ceil(n_pairs / max_pairs))
        ii, jj = ii[::stride], jj[::stride]
    dist = np.linalg.norm(pts[ii] - pts[jj], axis=1)
    quot = np.abs(vals[ii] - vals[jj]) / dist ** exponent
    return float(np.max(quot)) if len(quot) else 0.0


def linf_report(space, u, s):
    """Pair (sup norm, critical-exponent Lebesgue norm) of a field."""
    coeffs = u.coeffs if isinstance(u, Field) else np.asarray(u, dtype=float)
    sup = float(np.max(np.abs(coeffs))) if len(coeffs) else 0.0
    p = 2.0 * space.dim / (space.dim - 2.0 * s)
    points, weights, basis = element_quadrature(space)
    nodal = np.zeros(len(space.nodes))
    nodal[space.interior_nodes] = coeffs
    uq = basis @ nodal
    lp = float(np.dot(weights, np.abs(uq) ** p)) ** (1.0 / p)
    return sup, lp


def local_min_probe(gram, space, nl, u0, radius, norm_kind="X", samples=64,
                    seed=0, extra_directions=None):
    """Random-perturbation probe of local minimality in a chosen ball.

    Draws `samples` directions (plus any `extra_directions`), scales each
    to a magnitude in (0, radius] of the requested norm ('X' for the
    energy norm, 'C0delta' for the boundary-weighted sup norm), and
    passes iff no perturbation lowers the energy beyond round-off.
    """
    if norm_kind not in ("X", "C0delta"):
        raise ValueError("norm_kind must be 'X' or 'C0delta'")
    s = gram.kernel.s
    coeffs0 = u0.coeffs if isinstance(u0, Field) else np.asarray(u0, float)
    j0 = functional_value(gram, space, nl, coeffs0)
    rng = np.random.default_rng(seed)
    delta = space.node_delta[space.interior_nodes]

    def norm_of(v):
        if norm_kind == "X":
            return float(np.sqrt(max(v @ gram.matrix @ v, 0.0)))
        return float(np.max(np.abs(v) / delta ** s))

    worst = 0.0
    failing = None
    directions = [rng.standard_normal(space.n_interior)
                  for _ in range(samples)]
    magnitudes = [radius * (1.0 - rng.random()) for _ in range(samples)]
    for d in (extra_directions or []):
        d = np.asarray(d, dtype=float)
        for frac in np.linspace(0.05, 1.0, 20):
            directions.append(d)
            magnitudes.append(radius * float(frac))
    for d, mag in zip(directions, magnitudes):
        v = d * (mag / max(norm_of(d), 1e-300))
        drop = j0 - functional_value(gram, space, nl, coeffs0 + v)
        if drop > worst:
            worst = drop
            failing = v
    passed = worst <= 1e-12
    return PropertyVerdict(
        name="local-min-probe-%s" % norm_kind,
        passed=bool(passed),
        measured=float(worst),
        threshold=1e-12,
        context={"radius": radius, "samples": samples, "seed": seed,
                 "norm": norm_kind,
                 "extra_directions": int(len(extra_directions or []))})


def negative_load_control(gram, space, g):
    """Companion check: a nonpositive load yields a nonpositive solution
    (linearity of the solve)."""
    u = solve_dirichlet(gram, space, g)
    amp = float(np.max(np.abs(u.coeffs)))
    max_val = float(np.max(u.coeffs))
    return PropertyVerdict(
        name="negative-load-control",
        passed=bool(max_val <= MAX_PRINCIPLE_TOL * amp),
        measured=max_val,
        threshold=MAX_PRINCIPLE_TOL * amp,
        context={}), u
