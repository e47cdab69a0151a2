import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tkaczmarz.errors import ConfigError
from tkaczmarz.generators import gen_pair
from tkaczmarz.sampling import make_all_of_size, make_explicit, make_singletons, make_whole
from tkaczmarz.solvers import SolverConfig, factbrek
from tkaczmarz.spectral import spectrum
from tkaczmarz.tensor import fro_norm, identity_tensor
from tkaczmarz.theory import (
    ConvergenceConstants,
    bound_curve,
    bound_factbrek,
    bound_factbrk,
    bound_tbrek,
    check_unique_minimizer,
    compute_constants,
    horizon_additive,
    horizon_tbrk,
    uses_geometric_branch,
)


def consts(**kw):
    base = dict(alpha_U=0.5, alpha_V=0.7, beta_U=0.6, theta_U=2.0, theta_V=3.0,
                sigma_max_bcirc_U=1.5, sigma_max_bcirc_V=2.0, enumeration_exact=True)
    base.update(kw)
    a, b, c = base["alpha_U"], base["alpha_V"], base["beta_U"]
    rmin = lambda x, y: 0.0 if x <= 0 or y <= 0 else min(x / y, y / x)
    base.setdefault("alpha_max", max(a, b))
    base.setdefault("alpha_min", rmin(a, b))
    base.setdefault("phi_max", max(a, c))
    base.setdefault("phi_min", rmin(a, c))
    return ConvergenceConstants(**base)


def test_identity_singletons_rate():
    for m, p in [(3, 1), (4, 2), (5, 3)]:
        k = compute_constants(identity_tensor(m, p), None, make_singletons(m))
        assert k.alpha_U == pytest.approx(1 - 1 / m, abs=1e-12)


def test_whole_block_full_row_rank_rate(rng):
    u = rng.standard_normal((3, 3, 2))
    k = compute_constants(u, None, make_whole(3))
    assert k.alpha_U == pytest.approx(0.0, abs=1e-9)
    assert k.alpha_V == pytest.approx(0.0, abs=1e-12)


def test_theta_sigma_weighted_by_hand():
    v = np.zeros((3, 2, 2))
    v[0, :, 0] = [1.0, 0.0]
    v[1, :, 0] = [0.0, 2.0]
    v[2, :, 1] = [1.0, 1.0]
    u = np.random.default_rng(0).standard_normal((4, 3, 2))
    fam = make_explicit(3, [(0, 1), (2,)]).with_sigma_weights(v)
    k = compute_constants(u, v, make_singletons(4), fam)
    # d = 2, p = 2, c_max = 1, sigma_min+^2 = 1 and 2
    assert k.theta_V == pytest.approx(4.0 / 3.0)


def test_constant_relations(rng):
    cons, _ = gen_pair(8, 4, 3, 2, 3, seed=1)
    for floor in ("sigma_min", "range"):
        k = compute_constants(cons.U, cons.V, make_all_of_size(8, 2), make_all_of_size(4, 1), floor=floor)
        for v in (k.alpha_U, k.alpha_V, k.beta_U):
            assert -1e-9 <= v <= 1 + 1e-9
        assert k.alpha_max == max(k.alpha_U, k.alpha_V)
        assert k.phi_max == max(k.alpha_U, k.beta_U)
        assert k.alpha_min == pytest.approx(min(k.alpha_V / k.alpha_U, k.alpha_U / k.alpha_V))
        assert k.phi_min == pytest.approx(min(k.beta_U / k.alpha_U, k.alpha_U / k.beta_U))
        assert k.enumeration_exact
        assert k.sigma_max_bcirc_U == pytest.approx(spectrum(cons.U).sigma_max)
    # tall U: the column expected projector has a kernel, so the literal floor gives 1
    lit = compute_constants(cons.U, cons.V, make_all_of_size(8, 2), make_all_of_size(4, 1))
    rng_floor = compute_constants(cons.U, cons.V, make_all_of_size(8, 2), make_all_of_size(4, 1), floor="range")
    assert lit.beta_U == 1.0 and rng_floor.beta_U < 1.0
    assert any("beta_U" in f for f in lit.flags)
    with pytest.raises(ConfigError):
        compute_constants(cons.U, cons.V, make_all_of_size(8, 2), make_all_of_size(4, 1), floor="nope")


def test_rate_weakly_decreases_with_block_size(rng):
    u = rng.standard_normal((8, 5, 2))
    rates = [compute_constants(u, None, make_all_of_size(8, k)).alpha_U for k in (1, 2, 4)]
    assert rates[0] >= rates[1] - 1e-9 >= rates[2] - 2e-9


def test_monte_carlo_constants_are_labelled(rng):
    u = rng.standard_normal((14, 7, 2))
    with pytest.raises(ConfigError):
        compute_constants(u, None, make_all_of_size(14, 7), enumeration_limit=100)
    k = compute_constants(u, None, make_all_of_size(14, 7), enumeration_limit=100, monte_carlo=200)
    assert not k.enumeration_exact


def test_branch_rule():
    assert uses_geometric_branch(0.5, 0.6)
    assert not uses_geometric_branch(0.5, 0.5)
    assert not uses_geometric_branch(0.5, 0.5 * (1 + 1e-14))
    assert not uses_geometric_branch(0.0, 0.6)
    assert not uses_geometric_branch(0.6, 0.0)


def test_factbrk_bound_at_zero_covers_initial_error():
    for k in (consts(), consts(alpha_V=0.5)):
        assert bound_factbrk(0, k, 2.0) >= 4.0


def test_factbrk_branches_finite_near_equality():
    a = 0.6
    for b in (a - 1e-6, a + 1e-6, a):
        k = consts(alpha_U=a, alpha_V=b)
        vals = [bound_factbrk(t, k, 1.0) for t in (0, 1, 10, 100)]
        assert all(math.isfinite(v) for v in vals)


def test_factbrk_else_branch_formula():
    k = consts(alpha_U=0.5, alpha_V=0.5)
    t = 7
    expect = (0.5**t + 3.0 * t * 0.5**t * 4.0) * 9.0
    assert bound_factbrk(t, k, 3.0) == pytest.approx(expect)


def test_factbrk_geometric_formula():
    k = consts(alpha_U=0.5, alpha_V=0.8)
    t = 5
    r = 0.5 / 0.8
    expect = 0.8**t + 3.0 * 0.8**t * r / (1 - r) * 4.0
    assert bound_factbrk(t, k, 1.0) == pytest.approx(expect)


def test_remark_reduction_to_single_factor(rng):
    u = rng.standard_normal((6, 3, 2))
    k = compute_constants(u, None, make_singletons(6))
    assert k.alpha_V == 0.0 and k.theta_V == pytest.approx(3 * 2)
    for t in (1, 4, 9):
        assert bound_factbrk(t, k, 1.0) == pytest.approx(3 * 2 * t * k.alpha_U**t)


def test_factbrek_at_zero():
    k = consts()
    # both branches evaluate to 1 + theta_V sv^2 (1 + theta_U su^2 * {geom or 0})
    r = 0.5 / 0.6
    gamma = 1 + 2.0 * r / (1 - r) * 2.25
    assert bound_factbrek(0, k, 1.0) == pytest.approx(1 + 3.0 * 4.0 * gamma)


def test_factbrek_rejects_zero_inner_rate():
    with pytest.raises(ConfigError):
        bound_factbrek(3, consts(alpha_V=0.0), 1.0)


def test_factbrek_eventually_nonincreasing():
    k = consts()
    ts = np.arange(0, 400)
    b = np.array([bound_factbrek(int(t), k, 1.0) for t in ts])
    step2 = b[2:] <= b[:-2]
    # find the last violation; past it the bound decreases in steps of two
    bad = np.flatnonzero(~step2)
    threshold = int(bad[-1]) + 1 if bad.size else 0
    assert threshold < 100
    assert b[-1] < 1e-10


def test_tbrek_collapse_when_phi_min_zero():
    for k in (consts(beta_U=0.0), consts(alpha_U=0.4, beta_U=0.0)):
        for t in (0, 3, 8):
            assert bound_tbrek(t, k, 2.0) == pytest.approx(k.alpha_U**t * 4.0)


def test_tbrek_else_branch_uses_t_factor():
    k = consts(alpha_U=0.6, beta_U=0.6)
    t = 6
    assert bound_tbrek(t, k, 1.0) == pytest.approx(0.6**t + 2.0 * t * 0.6**t * 2.25)


def test_bound_curve():
    k = consts()
    curve = bound_curve("tbrek", [0, 2, 5], k, 1.0)
    assert curve == [(t, bound_tbrek(t, k, 1.0)) for t in (0, 2, 5)]
    with pytest.raises(ConfigError):
        bound_curve("nope", [0], k, 1.0)


def test_horizon_edge_cases(rng):
    u = rng.standard_normal((6, 3, 2))
    bs = make_all_of_size(6, 2)
    k = compute_constants(u, None, bs)
    assert horizon_tbrk(k, u, bs, np.zeros((6, 2, 2))) == 0.0
    e = rng.standard_normal((6, 2, 2))
    h1 = horizon_tbrk(k, u, bs, e)
    assert horizon_tbrk(k, u, bs, 3 * e) == pytest.approx(9 * h1, rel=1e-12)
    stuck = consts(alpha_U=1.0)
    assert horizon_tbrk(stuck, u, bs, e) == math.inf
    with pytest.raises(ConfigError):
        horizon_additive(u, bs, e[:5])


@given(st.floats(0.1, 10.0))
def test_horizon_is_quadratic(scale):
    rng = np.random.default_rng(7)
    u = rng.standard_normal((5, 3, 2))
    e = rng.standard_normal((5, 1, 2))
    bs = make_all_of_size(5, 1)
    base = horizon_additive(u, bs, e)
    assert horizon_additive(u, bs, scale * e) == pytest.approx(scale**2 * base, rel=1e-12)


def test_uniqueness_check(rng):
    assert check_unique_minimizer(rng.standard_normal((8, 4, 3))).unique
    wide = check_unique_minimizer(rng.standard_normal((3, 5, 2)))
    assert not wide.unique and wide.sigma_min == 0.0
    defective = rng.standard_normal((6, 3, 2))
    defective[:, 2] = defective[:, 1]
    assert not check_unique_minimizer(defective).unique


def test_factbrek_bound_dominates_small_system():
    _, inc = gen_pair(8, 4, 3, 2, 3, seed=3)
    bu, bv = make_all_of_size(8, 2), make_all_of_size(4, 1)
    k = compute_constants(inc.U, inc.V, bu, bv)
    norm = fro_norm(inc.X_dag)
    sq = []
    for seed in range(100):
        tr = factbrek(inc, bu, bv, SolverConfig(max_iters=10, seed=seed, reference=inc.X_dag))
        sq.append(tr.values**2 * norm**2)
    sq = np.array(sq)
    for t in (2, 6, 10):
        mean, se = sq[:, t].mean(), sq[:, t].std(ddof=1) / 10
        assert mean <= bound_factbrek(t, k, norm) + 3 * se
