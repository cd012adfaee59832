"""Energy functional, truncations, preconditioned descent, mountain pass.

The discrete energy is J(u) = u^T G u / 2 - sum of element quadrature of
the reaction primitive.  Its critical points are the discrete weak
solutions; descent runs in the metric of the Gram matrix so stopping is
mesh independent, and the three-solution construction combines two
truncated minimizations with a saddle search between the minimizers.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import cho_solve

from .assembly import assemble_mass, element_quadrature
from .geometry import Field
from .report import PropertyVerdict, SolutionSummary, SolveReport
from .spectral import eigenpairs


class NonCoercivityError(RuntimeError):
    """The energy appears unbounded below along the descent iterates.

    Signals a reaction whose asymptotic slope is not below the principal
    eigenvalue, so the coercivity hypothesis fails.
    """


class IterationCapError(RuntimeError):
    def __init__(self, message, last=None, grad_norm=None):
        super().__init__(message)
        self.last = last
        self.grad_norm = grad_norm


class MountainPassCollapse(RuntimeError):
    """The path degenerates onto an endpoint or the trivial point."""


@dataclass(frozen=True)
class NonlinearitySpec:
    """Reaction f(x, t) with growth data.

    kinds: 'zero'; 'linear' with slope lam; 'model' with
    f(t) = b |t|^(r-2) t + a1 |t|^(q-2) t for |t| <= 1 and beta1 t
    beyond, continuous when a1 + b = beta1; 'custom' with callables.
    """

    kind: str
    lam: float = 0.0
    r: float = 0.0
    q: float = 0.0
    b: float = 0.0
    a1: float = 0.0
    beta1: float = 0.0
    f_fn: object = None
    F_fn: object = None
    growth_c: float = 1.0
    growth_q: float = 2.0
    lower_c: float = None

    @classmethod
    def zero(cls):
        return cls("zero", growth_c=0.0, growth_q=2.0)

    @classmethod
    def linear(cls, lam):
        return cls("linear", lam=float(lam), growth_c=abs(float(lam)),
                   growth_q=2.0, lower_c=max(0.0, -float(lam)))

    @classmethod
    def model(cls, r, q, b, a1, beta1):
        r, q, b, a1, beta1 = map(float, (r, q, b, a1, beta1))
        if not 1.0 < r < 2.0 < q:
            raise ValueError("model exponents need 1 < r < 2 < q")
        if b <= 0.0 or a1 <= 0.0:
            raise ValueError("model coefficients b, a1 must be positive")
        if abs(a1 + b - beta1) > 1e-12 * max(1.0, beta1):
            raise ValueError("continuity at |t| = 1 needs a1 + b = beta1")
        return cls("model", r=r, q=q, b=b, a1=a1, beta1=beta1,
                   growth_c=max(a1 + b, beta1), growth_q=q, lower_c=0.0)

    @classmethod
    def custom(cls, f_fn, F_fn, growth_c, growth_q, lower_c=None):
        return cls("custom", f_fn=f_fn, F_fn=F_fn, growth_c=float(growth_c),
                   growth_q=float(growth_q), lower_c=lower_c)

    def f(self, x, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "linear":
            return self.lam * t
        if self.kind == "custom":
            return np.asarray(self.f_fn(x, t), dtype=float)
        at = np.abs(t)
        safe = np.where(at > 0.0, at, 1.0)
        inner = self.b * safe ** (self.r - 2.0) * t \
            + self.a1 * safe ** (self.q - 2.0) * t
        inner = np.where(at > 0.0, inner, 0.0)
        return np.where(at <= 1.0, inner, self.beta1 * t)

    def F(self, x, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "linear":
            return 0.5 * self.lam * t * t
        if self.kind == "custom":
            return np.asarray(self.F_fn(x, t), dtype=float)
        at = np.abs(t)
        inner = self.b * at ** self.r / self.r + self.a1 * at ** self.q / self.q
        outer = (self.b / self.r + self.a1 / self.q
                 + 0.5 * self.beta1 * (t * t - 1.0))
        return np.where(at <= 1.0, inner, outer)

    def ft(self, x, t):
        """Derivative of the reaction in t (used by Newton correctors)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "linear":
            return np.full_like(t, self.lam)
        if self.kind == "custom":
            eps = 1e-6
            return (self.f(x, t + eps) - self.f(x, t - eps)) / (2.0 * eps)
        at = np.maximum(np.abs(t), 1e-9)
        inner = self.b * (self.r - 1.0) * at ** (self.r - 2.0) \
            + self.a1 * (self.q - 1.0) * at ** (self.q - 2.0)
        return np.where(np.abs(t) <= 1.0, inner, self.beta1)

    def growth_defect(self, t_grid=None):
        """max over a t-grid of |f| - C (1 + |t|^(q-1)); <= 0 when the
        declared growth envelope holds."""
        if t_grid is None:
            t_grid = np.linspace(-50.0, 50.0, 2001)
        f_vals = np.abs(self.f(None, t_grid))
        envelope = self.growth_c * (1.0 + np.abs(t_grid)
                                    ** (self.growth_q - 1.0))
        return float(np.max(f_vals - envelope))


@dataclass(frozen=True)
class TruncatedNonlinearity:
    """Reaction restricted to one sign: f_+(x,t) = f(x, max(t, 0)) and
    f_-(x,t) = f(x, min(t, 0)), with the matching primitives."""

    base: NonlinearitySpec
    sign: str

    def _clip(self, t):
        t = np.asarray(t, dtype=float)
        return np.maximum(t, 0.0) if self.sign == "+" else np.minimum(t, 0.0)

    def f(self, x, t):
        return self.base.f(x, self._clip(t))

    def F(self, x, t):
        t = np.asarray(t, dtype=float)
        tc = self._clip(t)
        f0 = self.base.f(x, np.zeros_like(t))
        return self.base.F(x, tc) + f0 * (t - tc)

    def ft(self, x, t):
        t = np.asarray(t, dtype=float)
        active = (t >= 0.0) if self.sign == "+" else (t <= 0.0)
        return np.where(active, self.base.ft(x, t), 0.0)

    @property
    def lower_c(self):
        return self.base.lower_c


def truncate(nl, sign):
    """One-signed truncation of a reaction; idempotent per sign."""
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    if isinstance(nl, TruncatedNonlinearity) and nl.sign == sign:
        return nl
    return TruncatedNonlinearity(base=nl, sign=sign)


def validate_subcritical(nl, kernel):
    """Reject reactions at or above the critical exponent 2n/(n-2s)."""
    crit = 2.0 * kernel.n / (kernel.n - 2.0 * kernel.s)
    q = getattr(nl, "growth_q", None) or getattr(nl, "q", None)
    if q is not None and q >= crit - 1e-12:
        raise ValueError(
            "growth exponent q=%g is not subcritical: the three-solution "
            "construction requires 1 < q < 2n/(n-2s) = %g" % (q, crit))


# ----------------------------------------------------------------------
# functional and gradient


def _coeffs_of(u):
    return u.coeffs if isinstance(u, Field) else np.asarray(u, dtype=float)


def _quad_data(space, degree=6):
    points, weights, basis = element_quadrature(space, degree)
    return points, weights, basis


def functional_value(gram, space, nl, u, degree=6):
    """J(u) = u^T G u / 2 - int F(x, u_h(x)) dx."""
    coeffs = _coeffs_of(u)
    points, weights, basis = _quad_data(space, degree)
    nodal = np.zeros(len(space.nodes))
    nodal[space.interior_nodes] = coeffs
    uq = basis @ nodal
    quad_term = float(np.dot(weights, nl.F(points, uq)))
    return 0.5 * float(coeffs @ gram.matrix @ coeffs) - quad_term


def functional_gradient(gram, space, nl, u, degree=6):
    """Euclidean gradient G u - load(f(., u_h)); zero exactly at discrete
    weak solutions."""
    coeffs = _coeffs_of(u)
    points, weights, basis = _quad_data(space, degree)
    nodal = np.zeros(len(space.nodes))
    nodal[space.interior_nodes] = coeffs
    uq = basis @ nodal
    load_full = basis.T @ (weights * nl.f(points, uq))
    return gram.matrix @ coeffs - load_full[space.interior_nodes]


def _hessian(gram, space, nl, coeffs, degree=6):
    points, weights, basis = _quad_data(space, degree)
    nodal = np.zeros(len(space.nodes))
    nodal[space.interior_nodes] = coeffs
    uq = basis @ nodal
    wft = weights * nl.ft(points, uq)
    m_w = basis.T @ (wft[:, None] * basis)
    idx = space.interior_nodes
    return gram.matrix - m_w[np.ix_(idx, idx)]


def dual_norm(gram, g):
    """Mesh-independent gradient norm sqrt(g^T G^-1 g)."""
    return float(np.sqrt(max(g @ cho_solve(gram.cholesky(), g), 0.0)))


@dataclass
class CriticalPoint:
    """A field with (approximately) vanishing energy gradient."""

    field: Field
    energy: float
    grad_norm: float
    tag: str


def _classify(space, coeffs, kind):
    amp = float(np.max(np.abs(coeffs))) if len(coeffs) else 0.0
    if amp <= 1e-12:
        return "trivial"
    if np.min(coeffs) >= -1e-8 * amp:
        return "minimizer-positive"
    if np.max(coeffs) <= 1e-8 * amp:
        return "minimizer-negative"
    if kind == "saddle":
        return "mountain-pass"
    raise ValueError("minimizer with genuinely mixed signs does not fit "
                     "the tag vocabulary")


def minimize(gram, space, nl, u0, tol=1e-8, iter_cap=20000):
    """Descend J from u0 in the Gram metric with backtracking Armijo.

    Stops when the dual gradient norm drops below tol.  Raises
    NonCoercivityError when J runs away to minus infinity and
    IterationCapError when the cap is hit.
    """
    u = _coeffs_of(u0).copy()
    chol = gram.cholesky()
    j_val = functional_value(gram, space, nl, u)
    alpha = 1.0
    for it in range(iter_cap):
        g = functional_gradient(gram, space, nl, u)
        d = -cho_solve(chol, g)
        dual_sq = float(-g @ d)
        dual = np.sqrt(max(dual_sq, 0.0))
        if dual <= tol:
            tag = _classify(space, u, "minimizer")
            return CriticalPoint(field=Field(space, u), energy=j_val,
                                 grad_norm=dual, tag=tag)
        if dual <= 1e3 * tol:
            # endgame: a guarded Newton corrector finishes the last digits
            # that plain descent grinds through when the Hessian is flat
            hess = _hessian(gram, space, nl, u)
            try:
                step = np.linalg.solve(hess, -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None:
                trial = u + step
                g_trial = functional_gradient(gram, space, nl, trial)
                if dual_norm(gram, g_trial) < 0.5 * dual:
                    u = trial
                    j_val = functional_value(gram, space, nl, u)
                    continue
        alpha = min(2.0 * alpha, 1.0)
        while True:
            trial = u + alpha * d
            j_trial = functional_value(gram, space, nl, trial)
            if j_trial <= j_val - 1e-4 * alpha * dual_sq:
                break
            alpha *= 0.5
            if alpha < 1e-14:
                raise IterationCapError(
                    "line search stagnated at gradient norm %.3e" % dual,
                    last=Field(space, u), grad_norm=dual)
        u = trial
        j_val = j_trial
        if j_val < -1e14 or not np.isfinite(j_val):
            raise NonCoercivityError(
                "energy diverges to -inf: the asymptotic slope of the "
                "reaction must stay below the principal eigenvalue")
    g = functional_gradient(gram, space, nl, u)
    dual = dual_norm(gram, g)
    raise IterationCapError("iteration cap %d hit at gradient norm %.3e"
                            % (iter_cap, dual),
                            last=Field(space, u), grad_norm=dual)


# ----------------------------------------------------------------------
# mountain pass


def _g_norm(gram, v):
    return float(np.sqrt(max(v @ gram.matrix @ v, 0.0)))


def _respline(gram, path):
    """Redistribute interior path nodes to equal Gram arclength."""
    diffs = [path[k + 1] - path[k] for k in range(len(path) - 1)]
    seglen = np.array([_g_norm(gram, d) for d in diffs])
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    total = cum[-1]
    if total <= 0.0:
        return path
    targets = np.linspace(0.0, total, len(path))
    out = [path[0]]
    for t in targets[1:-1]:
        k = min(int(np.searchsorted(cum, t, side="right")) - 1,
                len(diffs) - 1)
        local = (t - cum[k]) / max(seglen[k], 1e-300)
        out.append(path[k] + local * diffs[k])
    out.append(path[-1])
    return out


def mountain_pass(gram, space, nl, u_minus, u_plus, path_nodes=21, tol=1e-8,
                  iter_cap=3000, mass=None, separation_tol=1e-8):
    """Saddle between two minimizers via a relaxing string.

    A piecewise-linear path from u_minus to u_plus, bowed through a small
    second-mode component to avoid the degenerate origin, relaxes by
    descending its maximum node orthogonally to the path tangent; once
    the orthogonal component dominates no longer, a Newton corrector
    polishes the saddle to the gradient tolerance.
    """
    um = _coeffs_of(u_minus)
    up = _coeffs_of(u_plus)
    j_minus = functional_value(gram, space, nl, um)
    j_plus = functional_value(gram, space, nl, up)
    scale = max(_g_norm(gram, um), _g_norm(gram, up))
    if _g_norm(gram, up - um) <= max(separation_tol, 1e-10) * max(scale, 1.0) \
            or scale <= separation_tol:
        raise MountainPassCollapse(
            "path collapse: the endpoints coincide or sit at the trivial "
            "point; there is no mountain to pass")
    if j_minus >= 0.0 or j_plus >= 0.0:
        raise MountainPassCollapse(
            "path collapse: endpoint energies (%.3e, %.3e) do not lie "
            "below the separating level J(0) = 0" % (j_minus, j_plus))

    if mass is None:
        mass = assemble_mass(space)
    e2 = eigenpairs(gram, mass, 2, space=space).vectors[:, 1]
    bow = 0.05 * e2
    half = path_nodes // 2
    path = []
    for k in range(path_nodes):
        t = k / (path_nodes - 1.0)
        if t <= 0.5:
            path.append(um + 2.0 * t * (bow - um))
        else:
            path.append(bow + (2.0 * t - 1.0) * (up - bow))
    path = _respline(gram, path)
    chol = gram.cholesky()

    def perp_direction(k, gx):
        tau = path[k + 1] - path[k - 1]
        tau = tau / max(_g_norm(gram, tau), 1e-300)
        return gx - float(gx @ gram.matrix @ tau) * tau

    k_max = 1
    for it in range(iter_cap):
        energies = [functional_value(gram, space, nl, u) for u in path]
        k_max = int(np.argmax(energies))
        if k_max in (0, len(path) - 1):
            raise MountainPassCollapse(
                "path collapse: the maximum sits on an endpoint; "
                "increase path_nodes or separate the minimizers")
        u = path[k_max]
        g = functional_gradient(gram, space, nl, u)
        gx = cho_solve(chol, g)
        dual = float(np.sqrt(max(g @ gx, 0.0)))
        if dual <= tol:
            return CriticalPoint(field=Field(space, u.copy()),
                                 energy=energies[k_max], grad_norm=dual,
                                 tag="mountain-pass")

        # once the transverse component stops dominating at the maximum,
        # a damped Newton corrector on grad J = 0 runs to completion; the
        # Newton direction descends the residual norm regardless of the
        # Hessian signature, so backtracking always makes progress
        perp_max = _g_norm(gram, perp_direction(k_max, gx))
        if perp_max <= 0.5 * dual:
            u_c = u.copy()
            dual_c = dual
            for _ in range(60):
                g_c = functional_gradient(gram, space, nl, u_c)
                dual_c = dual_norm(gram, g_c)
                if dual_c <= tol:
                    return CriticalPoint(
                        field=Field(space, u_c),
                        energy=functional_value(gram, space, nl, u_c),
                        grad_norm=dual_c, tag="mountain-pass")
                hess = _hessian(gram, space, nl, u_c)
                try:
                    step = np.linalg.solve(hess, -g_c)
                except np.linalg.LinAlgError:
                    step = np.linalg.solve(
                        hess + 1e-8 * np.max(np.abs(hess))
                        * np.eye(len(g_c)), -g_c)
                alpha_n = 1.0
                accepted = False
                while alpha_n > 1e-8:
                    trial = u_c + alpha_n * step
                    g_trial = functional_gradient(gram, space, nl, trial)
                    if dual_norm(gram, g_trial) \
                            <= (1.0 - 1e-4 * alpha_n) * dual_c:
                        accepted = True
                        break
                    alpha_n *= 0.5
                if not accepted:
                    break
                u_c = trial
            # corrector failed; keep its best iterate and resume stringing
            if dual_c < dual:
                path[k_max] = u_c

        # string relaxation: every interior node slides down the component
        # of the gradient transverse to the path, then redistributes
        for k in range(1, len(path) - 1):
            gk = functional_gradient(gram, space, nl, path[k])
            d = -perp_direction(k, cho_solve(chol, gk))
            slope = float(gk @ d)
            if slope >= 0.0:
                continue
            j_here = functional_value(gram, space, nl, path[k])
            alpha = 1.0
            while alpha > 1e-13:
                trial = path[k] + alpha * d
                if functional_value(gram, space, nl, trial) \
                        <= j_here + 1e-4 * alpha * slope:
                    path[k] = trial
                    break
                alpha *= 0.5
        path = _respline(gram, path)

    g = functional_gradient(gram, space, nl, path[k_max])
    raise IterationCapError(
        "mountain pass stagnated after %d iterations" % iter_cap,
        last=Field(space, path[k_max]), grad_norm=dual_norm(gram, g))


# ----------------------------------------------------------------------
# the three-solution driver


def _summary(gram, space, mass, nl, cp, s):
    coeffs = cp.field.coeffs
    delta = space.node_delta[space.interior_nodes]
    quot = coeffs / delta ** s
    g = functional_gradient(gram, space, nl, coeffs)
    return SolutionSummary(
        tag=cp.tag,
        energy=cp.energy,
        grad_norm=dual_norm(gram, g),
        norm_x=_g_norm(gram, coeffs),
        norm_l2=float(np.sqrt(coeffs @ mass @ coeffs)),
        norm_linf=float(np.max(np.abs(coeffs))) if len(coeffs) else 0.0,
        norm_c0delta=float(np.max(np.abs(quot))),
        hopf_quotient_min=float(np.min(quot)))


def solve_three(gram, space, nl, tol=1e-8, path_nodes=21, iter_cap=20000,
                separation_tol=1e-3, seed_amplitude=0.1):
    """Two signed minimizers plus a mountain-pass point for the model
    reaction; returns (positive, negative, saddle, report)."""
    if getattr(nl, "kind", None) != "model":
        raise ValueError("the three-solution driver needs the model reaction")
    validate_subcritical(nl, gram.kernel)
    mass = assemble_mass(space)
    eig = eigenpairs(gram, mass, 2, space=space)
    lam1 = float(eig.values[0])
    if not 0.0 < nl.beta1 < lam1:
        raise ValueError("the asymptotic slope beta1=%g must lie in "
                         "(0, lambda1=%g)" % (nl.beta1, lam1))
    e1 = eig.vectors[:, 0]

    cp_plus = minimize(gram, space, truncate(nl, "+"), seed_amplitude * e1,
                       tol=tol, iter_cap=iter_cap)
    cp_minus = minimize(gram, space, truncate(nl, "-"), -seed_amplitude * e1,
                        tol=tol, iter_cap=iter_cap)
    cp_tilde = mountain_pass(gram, space, nl, cp_minus.field, cp_plus.field,
                             path_nodes=path_nodes, tol=tol, mass=mass)

    s = gram.kernel.s
    verdicts = []
    amp_p = float(np.max(np.abs(cp_plus.field.coeffs)))
    amp_m = float(np.max(np.abs(cp_minus.field.coeffs)))
    verdicts.append(PropertyVerdict(
        name="positive-minimizer-sign",
        passed=bool(amp_p > 0 and np.min(cp_plus.field.coeffs)
                    >= -1e-8 * amp_p),
        measured=float(np.min(cp_plus.field.coeffs)),
        threshold=-1e-8 * amp_p, context={}))
    verdicts.append(PropertyVerdict(
        name="negative-minimizer-sign",
        passed=bool(amp_m > 0 and np.max(cp_minus.field.coeffs)
                    <= 1e-8 * amp_m),
        measured=float(np.max(cp_minus.field.coeffs)),
        threshold=1e-8 * amp_m, context={}))
    verdicts.append(PropertyVerdict(
        name="minimizer-energies-negative",
        passed=bool(cp_plus.energy < 0.0 and cp_minus.energy < 0.0),
        measured=float(max(cp_plus.energy, cp_minus.energy)),
        threshold=0.0, context={}))
    sep = min(_g_norm(gram, cp_tilde.field.coeffs - cp_plus.field.coeffs),
              _g_norm(gram, cp_tilde.field.coeffs - cp_minus.field.coeffs),
              _g_norm(gram, cp_tilde.field.coeffs))
    verdicts.append(PropertyVerdict(
        name="saddle-separated",
        passed=bool(sep > separation_tol),
        measured=sep, threshold=separation_tol, context={}))
    verdicts.append(PropertyVerdict(
        name="saddle-level-above-wells",
        passed=bool(cp_tilde.energy >= max(cp_plus.energy, cp_minus.energy)
                    - 1e-12),
        measured=float(cp_tilde.energy),
        threshold=float(max(cp_plus.energy, cp_minus.energy)),
        context={"saddle_energy_sign": float(np.sign(cp_tilde.energy))}))
    odd_defect = float(np.max(np.abs(cp_plus.field.coeffs
                                     + cp_minus.field.coeffs)))
    verdicts.append(PropertyVerdict(
        name="odd-reaction-symmetry",
        passed=bool(odd_defect <= 1e-8 * max(amp_p, 1e-300)),
        measured=odd_defect, threshold=1e-8 * amp_p, context={}))

    report = SolveReport(
        solutions=[_summary(gram, space, mass, nl, cp, s)
                   for cp in (cp_plus, cp_minus, cp_tilde)],
        verdicts=verdicts,
        context={"lambda1": lam1, "beta1": nl.beta1, "s": s,
                 "path_nodes": path_nodes, "tol": tol})
    return cp_plus, cp_minus, cp_tilde, report
