import numpy as np
import pytest

from measureflow import (
    AffineCoefficient,
    CylindricalFunctional,
    InitialSampler,
    JumpCoefficient,
    JumpDiffusionSpec,
    MarkFunction,
    MarkLaw,
    Polynomial,
    TimeGrid,
)
from measureflow.fokker_planck import (
    CFLError,
    SpaceGrid,
    fokker_planck_consistency,
)

MEAN = CylindricalFunctional.moment(Polynomial.coordinate(1))
SECOND = CylindricalFunctional.moment(Polynomial.monomial(1, 1.0, (2,)))


def spec_with(drift=0.0, sigma=0.0, rate=0.0):
    jump = JumpCoefficient(b0=MarkFunction(slope=1.0)) if rate > 0 else None
    return JumpDiffusionSpec(
        dimension=1,
        drift=AffineCoefficient(const=drift),
        diffusion=AffineCoefficient(const=sigma),
        initial=InitialSampler("triangular", (0.0, 1.0)),
        jump=jump,
        jump_rate=rate,
        mark_law=MarkLaw("uniform", (0.0, 1.0)) if rate > 0 else None,
    )


def test_static_scenario_zero_rate_both_ways():
    rep = fokker_planck_consistency(
        spec_with(),
        SECOND,
        TimeGrid(0, 0.5, 100),
        SpaceGrid(-4, 4, 201),
        n_particles=2000,
        seed=1,
        window=0.5,
    )
    assert rep.phi_rate_pde == pytest.approx(0.0, abs=1e-12)
    assert rep.phi_rate_mc == pytest.approx(0.0, abs=1e-12)


def test_pure_diffusion_second_moment_rate_one():
    rep = fokker_planck_consistency(
        spec_with(sigma=1.0),
        SECOND,
        TimeGrid(0, 0.5, 200),
        SpaceGrid(-6, 6, 401),
        n_particles=5000,
        seed=2,
        window=0.5,
    )
    assert rep.phi_rate_pde == pytest.approx(1.0, rel=0.02)
    assert rep.phi_rate_mc == pytest.approx(1.0, rel=1e-10)  # constant generator
    assert rep.relative_gap <= 0.05
    assert rep.mass_drift <= 1e-3


def test_unit_rate_uniform_jumps_mean_rate_half():
    rep = fokker_planck_consistency(
        spec_with(rate=1.0),
        MEAN,
        TimeGrid(0, 0.5, 200),
        SpaceGrid(-4, 5, 401),
        n_particles=20000,
        seed=3,
        mark_mc=4,
        window=0.5,
    )
    assert rep.phi_rate_pde == pytest.approx(0.5, rel=0.03)
    assert rep.phi_rate_mc == pytest.approx(0.5, rel=0.03)
    assert rep.relative_gap <= 0.05


def test_mass_escape_detected():
    # grid far too narrow for unit diffusion over the window
    with pytest.raises(RuntimeError, match="mass"):
        fokker_planck_consistency(
            spec_with(sigma=1.0),
            SECOND,
            TimeGrid(0, 0.5, 50),
            SpaceGrid(-1.5, 1.5, 101),
            n_particles=500,
            seed=4,
            window=0.5,
        )


def test_cfl_violation_reported():
    with pytest.raises(CFLError, match="dt"):
        fokker_planck_consistency(
            spec_with(sigma=1.0),
            SECOND,
            TimeGrid(0, 0.5, 50),
            SpaceGrid(-6, 6, 401),
            n_particles=100,
            seed=5,
            window=0.5,
            cfl_safety=2.0,  # deliberately unstable request
        )


def test_requires_additive_marks():
    bad = JumpDiffusionSpec(
        dimension=1,
        drift=AffineCoefficient(),
        diffusion=AffineCoefficient(),
        initial=InitialSampler("triangular", (0.0, 1.0)),
        jump=JumpCoefficient(b0=MarkFunction(const=1.0)),
        jump_rate=1.0,
        mark_law=MarkLaw("uniform", (0.0, 1.0)),
    )
    with pytest.raises(ValueError, match="additive"):
        fokker_planck_consistency(
            bad, MEAN, TimeGrid(0, 0.5, 50), SpaceGrid(-4, 4, 101), window=0.5
        )
