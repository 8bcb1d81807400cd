import numpy as np
import pytest
import sympy as sp

from measureflow import (
    AffineCoefficient,
    EmpiricalMeasure,
    InitialSampler,
    JumpDiffusionSpec,
    TimeGrid,
    simulate_jump_diffusion,
    simulate_singular,
)
from measureflow.mv import (
    MVOptimalControl,
    MVParams,
    MVReflectionPolicy,
    MVValue,
    RegionLabel,
    adjoint_along_path,
    boundary_root,
    closed_form_value,
    mc_value_check,
    region_classify,
    region_signal,
    simulate_optimal,
)
from measureflow.rng import substream
from measureflow.simulate import JUMP_COMMON, ReflectionEta, SingularSpec


def params_free():
    return MVParams(r=0.05, rho=0.3, sigma=0.4, beta=2.0, lam=0.5, gamma=10.0, T=1.0)


def params_active(gamma=1.5):
    return MVParams(r=0.05, rho=0.3, sigma=0.4, beta=2.0, lam=1.0, gamma=gamma, T=1.0)


class TestClosedFormsSymbolic:
    """The coefficient functions solve their own backward equations exactly."""

    def setup_method(self):
        t, r, rho, sigma, beta, T = sp.symbols("t r rho sigma beta T", positive=True)
        self.syms = (t, r, rho, sigma, beta, T)
        kappa = rho**2 / sigma**2
        self.A = beta / 2 * sp.exp((2 * r - kappa) * (T - t))
        self.B = sp.Integer(0)
        self.C = -sp.exp(r * (T - t))
        self.D = (1 - sp.exp(kappa * (T - t))) / (2 * beta)
        self.kappa = kappa

    def test_backward_equations(self):
        t, r, rho, sigma, beta, T = self.syms
        k = self.kappa
        A, B, C, D = self.A, self.B, self.C, self.D
        assert sp.simplify(sp.diff(A, t) - (k - 2 * r) * A) == 0
        assert sp.simplify(sp.diff(B, t) - k * B**2 / A + 2 * r * B) == 0
        assert sp.simplify(sp.diff(C, t) + r * C - k * B / A) == 0
        assert sp.simplify(sp.diff(D, t) - k * C**2 / (4 * A)) == 0

    def test_terminal_values(self):
        t, r, rho, sigma, beta, T = self.syms
        assert sp.simplify(self.A.subs(t, T) - beta / 2) == 0
        assert self.B == 0
        assert sp.simplify(self.C.subs(t, T) + 1) == 0
        assert sp.simplify(self.D.subs(t, T)) == 0

    def test_numeric_ode_residual_below_1e10(self):
        p = params_active()
        v = MVValue(p)
        k = p.kappa
        for t in np.linspace(0.0, p.T, 7):
            eps = 1e-6
            tm, tp = max(0.0, t - eps), min(p.T, t + eps)
            dA = (v.A(tp) - v.A(tm)) / (tp - tm)
            dD = (v.D(tp) - v.D(tm)) / (tp - tm)
            assert abs(dA - (k - 2 * p.r) * v.A(t)) < 1e-5
            assert abs(dD - k * v.C(t) ** 2 / (4 * v.A(t))) < 1e-5
        # exact arithmetic at the terminal point
        assert v.A(p.T) == p.beta / 2
        assert v.C(p.T) == -1.0
        assert v.D(p.T) == 0.0


class TestClosedFormValue:
    def test_terminal_dirac_is_minus_x(self):
        p = params_active()
        for x in (-1.0, 0.0, 2.5):
            assert closed_form_value(p, p.T, EmpiricalMeasure([[x]])) == pytest.approx(-x)

    def test_constant_A_when_exponent_vanishes(self):
        # 2r = kappa makes A constant equal to beta/2
        p = MVParams(r=0.28125, rho=0.3, sigma=0.4, beta=2.0, lam=1.0, gamma=1.0, T=1.0)
        v = MVValue(p)
        assert v.A(0.0) == pytest.approx(v.A(0.7)) == pytest.approx(1.0)

    def test_D_through_its_own_equation(self):
        # rho = sigma, T = 1: D(0) = (1 - e)/(2 beta), the value that solves
        # dD/dt = kappa C^2/(4A) with D(T) = 0
        p = MVParams(r=0.1, rho=0.5, sigma=0.5, beta=2.0, lam=1.0, gamma=1.0, T=1.0)
        v = MVValue(p)
        assert v.D(0.0) == pytest.approx((1 - np.e) / 4)

    def test_domain_checked(self):
        p = params_active()
        with pytest.raises(ValueError):
            closed_form_value(p, -0.1, EmpiricalMeasure([[0.0]]))


class TestRegions:
    def test_lam_zero_always_continuation(self):
        p = MVParams(r=0.05, rho=0.3, sigma=0.4, beta=2.0, lam=0.0, gamma=0.7, T=1.0)
        for x in (-50.0, 0.0, 50.0):
            assert region_classify(p, 0.3, 0.0, x, tol=1e-9) is RegionLabel.CONTINUATION

    def test_far_above_mean_is_continuation(self):
        p = params_active()
        assert region_classify(p, 0.2, 0.0, 10.0, 1e-9) is RegionLabel.CONTINUATION

    def test_root_is_boundary(self):
        p = params_active()
        t, m = 0.4, 0.3
        xb = boundary_root(p, t, m)
        assert region_classify(p, t, m, xb, 1e-9) is RegionLabel.BOUNDARY
        assert region_signal(p, t, m, xb) == pytest.approx(0.0, abs=1e-12)

    def test_below_root_is_action(self):
        p = params_active()
        xb = boundary_root(p, 0.4, 0.3)
        assert region_classify(p, 0.4, 0.3, xb - 0.5, 1e-9) is RegionLabel.ACTION

    def test_tol_validated(self):
        with pytest.raises(ValueError):
            region_classify(params_active(), 0.0, 0.0, 0.0, tol=0.0)


class TestSimulateOptimal:
    def test_gamma_large_matches_unreflected_loop(self):
        p = params_free()
        grid = TimeGrid(0, 1, 200)
        n = 400
        bundle, policy = simulate_optimal(p, InitialSampler("normal", (0.5, 0.2)), n, grid, seed=3)
        assert policy.pushes == 0
        assert np.all(bundle.eta_total == 0.0)
        # same SDE through the jump-diffusion engine: identical draws, so
        # identical paths when the reflection never acts
        jd = JumpDiffusionSpec(
            dimension=1,
            drift=AffineCoefficient(x=p.r, control=p.rho),
            diffusion=AffineCoefficient(control=p.sigma),
            initial=InitialSampler("normal", (0.5, 0.2)),
            control=MVOptimalControl(p),
        )
        plain = simulate_jump_diffusion(jd, n, grid, seed=3)
        assert np.array_equal(bundle.states, plain.states)

    def test_degenerate_no_noise_follows_mean_ode(self):
        # all particles at the mean: the optimal control is deterministic and
        # identical across particles, noise loads on (x - mean) only via rho/sigma^2
        p = MVParams(r=0.05, rho=0.3, sigma=0.4, beta=1e6, lam=1.0, gamma=5.0, T=1.0)
        grid = TimeGrid(0, 1, 300)
        bundle, policy = simulate_optimal(p, InitialSampler("point", (0.5,)), 32, grid, seed=4)
        spread = np.max(np.abs(bundle.states[:, :, 0] - bundle.states[:, :1, 0]))
        assert spread < 1e-3  # feedback term ~ 1/beta kills the noise
        assert policy.pushes == 0

    def test_strict_initial_enforced(self):
        # spread cloud: the low tail starts below the mean-relative boundary
        p = params_active()
        wide = InitialSampler("uniform", (-1.0, 1.0))
        with pytest.raises(ValueError, match="continuation region"):
            simulate_optimal(p, wide, 64, TimeGrid(0, 1, 50), seed=1)

    def test_initial_projection_when_allowed(self):
        p = params_active()
        wide = InitialSampler("uniform", (-1.0, 1.0))
        bundle, policy = simulate_optimal(
            p, wide, 64, TimeGrid(0, 1, 50), seed=1, strict_initial=False
        )
        rows = bundle.jump_rows_at(0)
        assert rows.stop > rows.start  # somebody had to move
        assert np.all(bundle.jump_kind[rows] == JUMP_COMMON)
        assert bundle.has_common_jump(0)
        # the projected particles sit on the boundary of the projected cloud
        x0 = bundle.right_states(0)[:, 0]
        xb = boundary_root(p, 0.0, float(x0.mean()))
        moved = bundle.jump_particle[rows]
        assert np.allclose(x0[moved], xb, atol=1e-9)
        assert float(np.min(x0 - xb)) >= -1e-9

    def test_boundary_start_reflects_about_half(self):
        # one particle on the boundary inside a large interior cloud: its own
        # diffusion decides the first reflection, so eta moves with prob ~ 1/2
        p = params_active()
        v = MVValue(p)
        n, dt = 600, 1e-3
        offset = (p.gamma + p.lam * float(v.C(0.0))) / (2 * float(v.A(0.0)) * p.lam)
        xb = (0.5 * (n - 1) / n - offset) / ((n - 1) / n)
        control = MVOptimalControl(p)
        hits = 0
        trials = 400
        rng = np.random.Generator(np.random.Philox(123))
        for _ in range(trials):
            x = np.full((n, 1), 0.5)
            x[0, 0] = xb
            feats = {"mean": x.mean(axis=0)}
            a = control(0.0, x, feats)
            drift = p.r * x[:, 0] + p.rho * a
            diff = p.sigma * a
            x1 = x[:, 0] + drift * dt + diff * np.sqrt(dt) * rng.standard_normal(n)
            policy = MVReflectionPolicy(p)
            _, d_eta = policy(dt, x1[:, None], {"mean": np.array([x1.mean()])})
            hits += int(d_eta[0, 0] > 0)
        frac = hits / trials
        assert 0.35 <= frac <= 0.65

    def test_lam_zero_without_authority_rejected(self):
        p = MVParams(r=0.05, rho=0.3, sigma=0.4, beta=2.0, lam=0.0, gamma=-1.0, T=1.0)
        with pytest.raises(ValueError, match="authority"):
            simulate_optimal(p, InitialSampler("point", (0.0,)), 8, TimeGrid(0, 1, 10), seed=1)


class TestValueCheck:
    def test_reflection_free_band(self):
        rep = mc_value_check(
            params_free(), InitialSampler("normal", (0.5, 0.2)),
            20000, TimeGrid(0, 1, 500), seed=7,
        )
        assert rep.eta_mass_mean == 0.0
        assert rep.within_band

    def test_active_reflection_band(self):
        rep = mc_value_check(
            params_active(), InitialSampler("point", (0.5,)),
            20000, TimeGrid(0, 1, 500), seed=7,
        )
        assert rep.eta_mass_mean > 0.1
        assert rep.boundary_violations == 0
        assert rep.within_band

    def test_degenerate_horizon_is_terminal_cost(self):
        # with T tiny the estimate collapses to E[g(xi, law of xi)]
        p = MVParams(r=0.05, rho=0.3, sigma=0.4, beta=2.0, lam=0.5, gamma=10.0, T=1e-4)
        n = 5000
        rep = mc_value_check(p, InitialSampler("normal", (0.5, 0.2)), n, TimeGrid(0, 1e-4, 10), seed=5)
        x0 = InitialSampler("normal", (0.5, 0.2)).sample(substream(5, "initial"), n, 1)[:, 0]
        g = 0.5 * p.beta * (x0 - x0.mean()) ** 2 - x0
        assert rep.j_hat == pytest.approx(float(g.mean()), abs=3 * rep.se + 1e-3)


class TestAdjoint:
    def test_terminal_residual_exact(self):
        p = params_active()
        bundle, _ = simulate_optimal(p, InitialSampler("point", (0.5,)), 500, TimeGrid(0, 1, 200), seed=3)
        rep = adjoint_along_path(p, bundle)
        assert rep.terminal_residual == 0.0

    def test_centered_particle_costate_is_C(self):
        p = params_active()
        v = MVValue(p)
        # by the formula p = 2A (x - mean) + C, a particle at the ensemble mean
        # carries exactly C(t)
        for t in (0.0, 0.33, 1.0):
            m = 0.4
            val = 2 * v.A(t) * (m - m) + v.C(t)
            assert val == pytest.approx(float(v.C(t)))
            assert val == pytest.approx(-np.exp(p.r * (p.T - t)))

    def test_drift_matches_negative_rp(self):
        p = params_free()
        bundle, _ = simulate_optimal(
            p, InitialSampler("normal", (0.5, 0.2)), 20000, TimeGrid(0, 1, 200), seed=13
        )
        rep = adjoint_along_path(p, bundle)
        assert rep.n_clean_steps == 200
        assert abs(rep.drift_residual) <= 3 * rep.drift_se + 1e-4


class TestDominance:
    def test_perturbed_policies_cost_more(self):
        p = params_active()
        grid = TimeGrid(0, 1, 250)
        n = 8000
        seed = 21
        initial = InitialSampler("point", (0.5,))

        def run_cost(control):
            spec = SingularSpec(
                dimension=1,
                drift=AffineCoefficient(x=p.r, control=p.rho),
                diffusion=AffineCoefficient(control=p.sigma),
                initial=initial,
                lam=(p.lam,),
                eta=ReflectionEta(policy=MVReflectionPolicy(p)),
                control=control,
            )
            summary = simulate_singular(spec, n, grid, seed, record=False)
            xT = summary.terminal[:, 0]
            cost = 0.5 * p.beta * (xT - xT.mean()) ** 2 - xT
            cost = cost + p.gamma * summary.eta_total[:, 0]
            return cost

        class Perturbed:
            def __init__(self, base, eps, d0, d1):
                self.base, self.eps, self.d0, self.d1 = base, eps, d0, d1

            def __call__(self, t, x, feats):
                return self.base(t, x, feats) + self.eps * (self.d0 + self.d1 * x[:, 0])

        base = MVOptimalControl(p)
        c_star = run_cost(base)
        rng = np.random.Generator(np.random.Philox(5))
        for _ in range(3):
            d0, d1 = rng.standard_normal(2)
            c_k = run_cost(Perturbed(base, 0.25, d0, d1))
            diff = c_k - c_star
            gap = float(np.mean(diff))
            se = float(np.std(diff, ddof=1) / np.sqrt(n))
            assert gap >= -3 * se

    def test_visited_states_satisfy_variational_inequality(self):
        p = params_active()
        bundle, _ = simulate_optimal(p, InitialSampler("point", (0.5,)), 2000, TimeGrid(0, 1, 300), seed=6)
        worst = 0.0
        for k in range(bundle.n_nodes):
            x = bundle.states[k, :, 0]
            s = region_signal(p, float(bundle.grid.nodes[k]), float(x.mean()), x)
            worst = min(worst, float(np.min(s)))
        scale = max(1.0, float(np.max(np.abs(bundle.states))))
        assert worst >= -1e-6 * scale
