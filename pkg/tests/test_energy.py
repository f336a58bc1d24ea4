import numpy as np
import pytest
from numpy.testing import assert_allclose

from driftsampler.energy import (
    EnergyTarget,
    GridSpec,
    QuadraticEnergy,
    get_target,
    sample_reference,
    smoothed_score_oracle,
    target_names,
)
from driftsampler.exceptions import CapabilityError, InvalidInputError

from conftest import fd_grad, fd_hess

TARGETS = ("gmm4", "double_well", "banana", "gauss")


def test_registry_names():
    assert set(target_names()) >= {"gmm4", "double_well", "banana"}
    with pytest.raises(InvalidInputError):
        get_target("nope")


def test_energy_reference_values(gmm4, double_well, banana):
    # four modes at (+-1, +-1), width 0.5: all modes equidistant from origin
    assert_allclose(gmm4.energy(np.array([0.0, 0.0])), 4.0 - np.log(4.0), rtol=1e-12)
    assert double_well.energy(np.array([1.0, 0.0])) == 0.0
    assert banana.energy(np.array([0.0, 1.2])) == 0.0


def test_energy_finite_everywhere(gmm4, double_well, banana):
    pts = np.random.default_rng(0).uniform(-50, 50, size=(200, 2))
    for t in (gmm4, double_well, banana):
        assert np.all(np.isfinite(t.energy(pts)))


@pytest.mark.parametrize("name", TARGETS)
def test_dimension_mismatch_rejected(name):
    t = get_target(name)
    for op in (t.energy, t.grad_energy, t.hess_energy):
        with pytest.raises(InvalidInputError):
            op(np.zeros(3))
        with pytest.raises(InvalidInputError):
            op(np.zeros((4, 5)))


@pytest.mark.parametrize("name", TARGETS)
def test_grad_matches_finite_differences(name):
    t = get_target(name)
    rng = np.random.default_rng(20)
    for _ in range(100):
        x = rng.uniform(-4, 4, 2)
        fd = fd_grad(t, x)
        scale = max(1.0, float(np.abs(fd).max()))
        assert np.abs(t.grad_energy(x) - fd).max() / scale <= 1e-4


@pytest.mark.parametrize("name", TARGETS)
def test_hess_matches_finite_differences(name):
    t = get_target(name)
    rng = np.random.default_rng(21)
    for _ in range(100):
        x = rng.uniform(-4, 4, 2)
        fd = fd_hess(t, x)
        h = t.hess_energy(x)
        assert_allclose(h, h.T, atol=1e-12)
        scale = max(1.0, float(np.abs(fd).max()))
        assert np.abs(h - fd).max() / scale <= 1e-3


def test_grad_special_points(gmm4, double_well):
    assert_allclose(gmm4.grad_energy(np.array([0.0, 0.0])), 0.0, atol=1e-12)
    assert_allclose(double_well.grad_energy(np.array([1.0, 0.0])), 0.0, atol=1e-12)
    x = np.array([2.0, 2.0])
    assert np.abs(gmm4.grad_energy(x) - fd_grad(gmm4, x)).max() <= 1e-5


def test_hess_special_points(double_well):
    assert_allclose(
        double_well.hess_energy(np.array([0.0, 0.0])), np.diag([-8.0, 1.0]), atol=1e-12
    )
    iso = QuadraticEnergy(np.eye(2))
    assert_allclose(iso.hess_energy(np.array([0.7, -1.3])), np.eye(2))


@pytest.mark.parametrize("name", TARGETS)
def test_density_integrable_on_grid(name):
    t = get_target(name)
    axis = np.linspace(-8, 8, 241)
    xs, ys = np.meshgrid(axis, axis, indexing="ij")
    dens = np.exp(-t.energy(np.stack([xs.ravel(), ys.ravel()], axis=1)))
    mass = dens.sum() * (axis[1] - axis[0]) ** 2
    assert np.isfinite(mass) and mass > 0


def test_batched_matches_single(gmm4):
    pts = np.random.default_rng(3).uniform(-3, 3, size=(17, 2))
    e = gmm4.energy(pts)
    g = gmm4.grad_energy(pts)
    h = gmm4.hess_energy(pts)
    for i, x in enumerate(pts):
        assert_allclose(e[i], gmm4.energy(x), rtol=1e-12)
        assert_allclose(g[i], gmm4.grad_energy(x), rtol=1e-12)
        assert_allclose(h[i], gmm4.hess_energy(x), rtol=1e-12)


class TestReferenceSampler:
    def test_gmm4_mean(self, gmm4):
        pts = sample_reference(gmm4, 100000, 7).points
        assert np.abs(pts.mean(axis=0)).max() <= 0.02

    def test_banana_x1_mean(self, banana):
        pts = sample_reference(banana, 100000, 7).points
        assert abs(pts[:, 0].mean()) <= 0.02

    def test_gmm4_quadrant_proportions(self, gmm4):
        pts = sample_reference(gmm4, 100000, 3).points
        xpos, ypos = pts[:, 0] >= 0, pts[:, 1] >= 0
        props = [
            np.mean(xpos & ypos),
            np.mean(~xpos & ypos),
            np.mean(~xpos & ~ypos),
            np.mean(xpos & ~ypos),
        ]
        assert np.abs(np.array(props) - 0.25).max() <= 0.01

    def test_gmm4_seed42_mean_energy(self, gmm4):
        # overlap between modes puts the exact mean energy near 0.877 for this
        # parameterization; band is +-0.05 around the measured value
        batch = sample_reference(gmm4, 5000, 42)
        e = gmm4.energy(batch.points).mean()
        assert abs(e - 0.8868) <= 0.05

    def test_double_well_wells_balanced(self, double_well):
        pts = sample_reference(double_well, 100000, 5).points
        frac = (pts[:, 0] > 0).mean()
        assert 0.48 <= frac <= 0.52

    def test_bit_reproducible(self, gmm4, double_well, banana):
        for t in (gmm4, double_well, banana):
            a = sample_reference(t, 1234, 99).points
            b = sample_reference(t, 1234, 99).points
            assert np.array_equal(a, b)

    def test_seed_recorded_and_count(self, gmm4):
        b = sample_reference(gmm4, 57, 5)
        assert b.seed == 5 and b.points.shape == (57, 2)
        assert np.all(np.isfinite(b.points))

    def test_n_validation(self, gmm4):
        with pytest.raises(InvalidInputError):
            sample_reference(gmm4, 0, 1)

    def test_unsupported_target(self):
        class Bare(EnergyTarget):
            name = "bare"

            def _energy(self, pts):
                return np.zeros(len(pts))

        with pytest.raises(CapabilityError):
            sample_reference(Bare(), 5, 0)

    def test_non_spd_quadratic_has_no_sampler(self):
        t = QuadraticEnergy(np.diag([-1.0, 1.0]))
        with pytest.raises(CapabilityError):
            sample_reference(t, 5, 0)


class TestSmoothedScoreOracle:
    @pytest.mark.parametrize("sigma", [0.1, 0.22, 0.5])
    def test_quadratic_closed_form(self, sigma):
        rng = np.random.default_rng(8)
        for _ in range(5):
            root = rng.uniform(-1, 1, size=(2, 2))
            a = root @ root.T + 0.3 * np.eye(2)
            t = QuadraticEnergy(a, m=rng.uniform(-1, 1, 2))
            x = rng.uniform(-2, 2, 2)
            got = smoothed_score_oracle(t, x, sigma)
            assert np.abs(got - t.smoothed_score(x, sigma)).max() <= 1e-3

    def test_symmetry_center_zero(self, gmm4, double_well):
        z = np.array([0.0, 0.0])
        assert np.abs(smoothed_score_oracle(gmm4, z, 0.22)).max() <= 1e-8
        assert np.abs(smoothed_score_oracle(double_well, z, 0.3)).max() <= 1e-8

    def test_gmm4_regression_fixture(self, gmm4):
        # pinned from the quadrature oracle itself (span 8, 401 nodes); a finer
        # grid moves the value by < 3e-12
        got = smoothed_score_oracle(gmm4, np.array([2.0, 2.0]), 0.22)
        assert_allclose(got, [-3.3512165405385, -3.3512165405385], atol=1e-9)

    def test_batch_input(self, gmm4):
        pts = np.array([[0.5, 0.5], [2.0, 2.0]])
        got = smoothed_score_oracle(gmm4, pts, 0.22)
        assert got.shape == (2, 2)
        assert_allclose(got[1], smoothed_score_oracle(gmm4, pts[1], 0.22), rtol=1e-12)

    def test_coarse_grid_rejected(self, gmm4):
        with pytest.raises(InvalidInputError):
            smoothed_score_oracle(gmm4, np.zeros(2), 0.22, GridSpec(nodes=49))

    def test_bad_sigma_rejected(self, gmm4):
        with pytest.raises(InvalidInputError):
            smoothed_score_oracle(gmm4, np.zeros(2), 0.0)
