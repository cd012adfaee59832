import numpy as np
import pytest

from anisokernel.assembly import assemble_gram, assemble_mass
from anisokernel.geometry import Domain, Field, build_mesh
from anisokernel.kernel import AngularDensity, KernelSpec
from anisokernel.spectral import eigenpairs
from anisokernel.variational import (
    IterationCapError,
    MountainPassCollapse,
    NonlinearitySpec,
    dual_norm,
    functional_gradient,
    functional_value,
    minimize,
    mountain_pass,
    solve_three,
    truncate,
    validate_subcritical,
)


@pytest.fixture(scope="module")
def problem():
    spec = KernelSpec(1, 0.25, AngularDensity.constant(1.0))
    space = build_mesh(Domain.interval(-1, 1), 1.0 / 32.0)
    gram = assemble_gram(space, spec)
    mass = assemble_mass(space)
    eig = eigenpairs(gram, mass, 2, space=space)
    return space, gram, mass, eig


def model_for(lam1, r=1.5, q=3.0, frac=0.9, share=0.5):
    beta1 = frac * lam1
    return NonlinearitySpec.model(r=r, q=q, b=share * beta1,
                                  a1=(1.0 - share) * beta1, beta1=beta1)


def test_functional_zero_reaction(problem):
    space, gram, mass, eig = problem
    u = Field.zero(space)
    assert functional_value(gram, space, NonlinearitySpec.zero(), u) == 0.0
    rng = np.random.default_rng(0)
    v = rng.standard_normal(space.n_interior)
    j = functional_value(gram, space, NonlinearitySpec.zero(), v)
    assert j == pytest.approx(0.5 * v @ gram.matrix @ v)
    assert j > 0.0


def test_functional_rayleigh_identity(problem):
    space, gram, mass, eig = problem
    lam = 3.0
    nl = NonlinearitySpec.linear(lam)
    e1 = eig.vectors[:, 0]       # mass-normalized
    j = functional_value(gram, space, nl, e1)
    assert j == pytest.approx(0.5 * (eig.values[0] - lam), rel=1e-10)


def test_gradient_zero_at_origin(problem):
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    g = functional_gradient(gram, space, nl, Field.zero(space))
    assert np.all(g == 0.0)


def test_gradient_matches_finite_differences(problem):
    space, gram, mass, eig = problem
    smooth = NonlinearitySpec.custom(
        lambda x, t: np.sin(t) + t ** 3,
        lambda x, t: 1.0 - np.cos(t) + 0.25 * t ** 4,
        growth_c=2.0, growth_q=4.0)
    rng = np.random.default_rng(7)
    eps = 1e-4
    for nl in (NonlinearitySpec.linear(2.5), smooth):
        for _ in range(20):
            u = 0.5 * rng.standard_normal(space.n_interior)
            v = rng.standard_normal(space.n_interior)
            g = functional_gradient(gram, space, nl, u)
            fd = (functional_value(gram, space, nl, u + eps * v)
                  - functional_value(gram, space, nl, u - eps * v)) / (2 * eps)
            assert abs(fd - g @ v) <= 1e-6 * (1.0 + abs(g @ v))


def test_gradient_finite_differences_model_reaction(problem):
    # fields bounded away from zero keep the sublinear term twice
    # differentiable along the probe; random zero crossings would feed the
    # |t|^(r-3) third-derivative blowup into the difference quotient
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    rng = np.random.default_rng(11)
    eps = 1e-4
    for _ in range(20):
        u = 0.3 + 0.2 * rng.random(space.n_interior)
        v = rng.standard_normal(space.n_interior)
        g = functional_gradient(gram, space, nl, u)
        fd = (functional_value(gram, space, nl, u + eps * v)
              - functional_value(gram, space, nl, u - eps * v)) / (2 * eps)
        assert abs(fd - g @ v) <= 1e-6 * (1.0 + abs(g @ v))


def test_gradient_at_eigenfunction_is_eigenresidual(problem):
    space, gram, mass, eig = problem
    nl = NonlinearitySpec.linear(eig.values[0])
    g = functional_gradient(gram, space, nl, eig.vectors[:, 0])
    residual = gram.matrix @ eig.vectors[:, 0] \
        - eig.values[0] * (mass @ eig.vectors[:, 0])
    assert np.linalg.norm(g - residual) <= 1e-10


def test_truncation_definitions(problem):
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    plus = truncate(nl, "+")
    ts = np.linspace(-2.0, 2.0, 101)
    f_plus = plus.f(None, ts)
    f_base = nl.f(None, ts)
    assert np.allclose(f_plus[ts >= 0], f_base[ts >= 0])
    assert np.all(f_plus[ts < 0] == 0.0)
    assert np.all(plus.F(None, ts[ts <= 0]) == 0.0)


def test_truncation_idempotent(problem):
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    once = truncate(nl, "+")
    twice = truncate(once, "+")
    assert twice is once
    ts = np.linspace(-3, 3, 61)
    assert np.allclose(once.f(None, ts), twice.f(None, ts))


def test_truncation_consistency_on_positive_fields(problem):
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    rng = np.random.default_rng(3)
    u = np.abs(rng.standard_normal(space.n_interior))
    j_full = functional_value(gram, space, nl, u)
    j_plus = functional_value(gram, space, truncate(nl, "+"), u)
    assert j_full == pytest.approx(j_plus, rel=1e-14)


def test_minimize_zero_reaction(problem):
    space, gram, mass, eig = problem
    rng = np.random.default_rng(1)
    u0 = rng.standard_normal(space.n_interior)
    cp = minimize(gram, space, NonlinearitySpec.zero(), u0, tol=1e-10)
    assert cp.tag == "trivial"
    assert np.max(np.abs(cp.field.coeffs)) < 1e-10
    assert cp.energy == pytest.approx(0.0, abs=1e-20)


def test_minimize_subprincipal_linear(problem):
    space, gram, mass, eig = problem
    nl = NonlinearitySpec.linear(0.5 * eig.values[0])
    cp = minimize(gram, space, nl, 0.3 * eig.vectors[:, 0], tol=1e-10)
    assert cp.tag == "trivial"


def test_minimize_model_gives_signed_solution(problem):
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    cp = minimize(gram, space, truncate(nl, "+"), 0.1 * eig.vectors[:, 0],
                  tol=1e-9)
    assert cp.tag == "minimizer-positive"
    assert cp.energy < 0.0
    assert np.min(cp.field.coeffs) >= 0.0
    assert np.max(cp.field.coeffs) > 0.01


def test_coercivity_witness(problem):
    # J(t e1) grows at infinity when the asymptotic slope sits below the
    # principal eigenvalue
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    e1 = eig.vectors[:, 0]
    vals = [functional_value(gram, space, nl, t * e1)
            for t in (10.0, 100.0, 1000.0)]
    assert vals[0] > 0.0
    assert vals[1] > vals[0] and vals[2] > vals[1]


def test_small_amplitude_negativity(problem):
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    e1 = eig.vectors[:, 0]
    taus = np.linspace(1e-3, 0.5, 40)
    vals = [functional_value(gram, space, nl, t * e1) for t in taus]
    assert min(vals) < 0.0


def test_descent_monotonicity_recorded(problem):
    # energies along accepted steps decrease: probe via two staged calls
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    u0 = 0.1 * eig.vectors[:, 0]
    loose = minimize(gram, space, truncate(nl, "+"), u0, tol=1e-2)
    tight = minimize(gram, space, truncate(nl, "+"), loose.field.coeffs,
                     tol=1e-9)
    assert tight.energy <= loose.energy


def test_mountain_pass_finds_separated_saddle(problem):
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    cp = minimize(gram, space, truncate(nl, "+"),
                  0.1 * eig.vectors[:, 0], tol=1e-9)
    cm = minimize(gram, space, truncate(nl, "-"),
                  -0.1 * eig.vectors[:, 0], tol=1e-9)
    ct = mountain_pass(gram, space, nl, cm.field, cp.field, tol=1e-8,
                       mass=mass)
    assert ct.tag == "mountain-pass"
    assert ct.grad_norm <= 1e-8
    assert ct.energy >= max(cp.energy, cm.energy)
    dist = min(np.linalg.norm(ct.field.coeffs - cp.field.coeffs),
               np.linalg.norm(ct.field.coeffs - cm.field.coeffs),
               np.linalg.norm(ct.field.coeffs))
    assert dist > 1e-3


def test_mountain_pass_collapse_on_single_well(problem):
    space, gram, mass, eig = problem
    nl = NonlinearitySpec.linear(0.5 * eig.values[0])
    cp = minimize(gram, space, nl, 0.2 * eig.vectors[:, 0], tol=1e-10)
    cm = minimize(gram, space, nl, -0.2 * eig.vectors[:, 0], tol=1e-10)
    with pytest.raises(MountainPassCollapse, match="collapse"):
        mountain_pass(gram, space, nl, cm.field, cp.field, mass=mass)


def test_solve_three_full_run(problem):
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    cp, cm, ct, report = solve_three(gram, space, nl, tol=1e-8)
    assert [c.tag for c in (cp, cm, ct)] == [
        "minimizer-positive", "minimizer-negative", "mountain-pass"]
    assert report.all_passed
    assert np.allclose(cp.field.coeffs, -cm.field.coeffs, atol=1e-10)
    for c in (cp, cm, ct):
        assert c.grad_norm <= 1e-8


def test_solve_three_rejects_critical_exponent(problem):
    space, gram, mass, eig = problem
    lam1 = eig.values[0]
    # q = 2n/(n-2s) = 4 at s = 0.25 in one dimension
    nl = NonlinearitySpec.model(r=1.5, q=4.0, b=0.45 * lam1, a1=0.45 * lam1,
                                beta1=0.9 * lam1)
    with pytest.raises(ValueError, match="subcritical"):
        solve_three(gram, space, nl)


def test_solve_three_rejects_large_beta1(problem):
    space, gram, mass, eig = problem
    lam1 = eig.values[0]
    nl = NonlinearitySpec.model(r=1.5, q=3.0, b=0.6 * lam1, a1=0.6 * lam1,
                                beta1=1.2 * lam1)
    with pytest.raises(ValueError, match="beta1"):
        solve_three(gram, space, nl)


def test_model_growth_envelope(problem):
    space, gram, mass, eig = problem
    nl = model_for(eig.values[0])
    assert nl.growth_defect() <= 1e-12


def test_model_parameter_validation():
    with pytest.raises(ValueError, match="1 < r < 2 < q"):
        NonlinearitySpec.model(r=2.5, q=3.0, b=1.0, a1=1.0, beta1=2.0)
    with pytest.raises(ValueError, match="a1 \\+ b"):
        NonlinearitySpec.model(r=1.5, q=3.0, b=1.0, a1=1.0, beta1=3.0)


def test_validate_subcritical_message():
    spec = KernelSpec(1, 0.25, AngularDensity.constant(1.0))
    nl = NonlinearitySpec.custom(lambda x, t: t, lambda x, t: 0.5 * t * t,
                                 growth_c=1.0, growth_q=4.0)
    with pytest.raises(ValueError, match="2n/\\(n-2s\\)"):
        validate_subcritical(nl, spec)
