import numpy as np
import pytest

from pdmesh.noise import (DEFAULT_NOISE_GRID, KINDS, NoiseSpec, apply_noise,
                          mixed_noise_sample, noise_matrix, random_rotation)
from pdmesh.shapes import icosphere, tetrahedron

from conftest import bumpy_icosahedron


class TestNoiseSpec:
    def test_rejects_bad_amplitude(self):
        with pytest.raises(ValueError):
            NoiseSpec("gaussian", -0.1)
        with pytest.raises(ValueError):
            NoiseSpec("gaussian", float("inf"))

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError, match="kind"):
            NoiseSpec("perlin", 0.1)

    def test_rejects_bad_probabilities(self):
        with pytest.raises(ValueError):
            NoiseSpec("impulse", 0.1, p_pos=0.6)
        with pytest.raises(ValueError):
            NoiseSpec("impulse", 0.1, p_pos=0.5, p_neg=0.51)


class TestApplyNoise:
    def test_zero_amplitude_identity(self):
        m = tetrahedron()
        for kind in KINDS:
            out = apply_noise(m, NoiseSpec(kind, 0.0, seed=3))
            assert np.array_equal(out.positions, m.positions)

    def test_connectivity_untouched(self, rng):
        m = bumpy_icosahedron(rng)
        out = apply_noise(m, NoiseSpec("gaussian", 0.1, seed=1))
        assert out.faces is m.faces

    def test_deterministic_given_seed(self, rng):
        m = bumpy_icosahedron(rng)
        spec = NoiseSpec("gamma", 0.05, seed=99)
        a = apply_noise(m, spec).positions
        b = apply_noise(m, spec).positions
        assert np.array_equal(a, b)

    def test_gaussian_sample_variance(self):
        sigma = 0.05
        n = noise_matrix((10_000, 3), NoiseSpec("gaussian", sigma, seed=7))
        var = n.var(axis=0)
        assert ((0.95 * sigma ** 2 <= var) & (var <= 1.05 * sigma ** 2)).all()

    def test_gaussian_squared_displacement(self):
        sigma = 0.05
        n = noise_matrix((10_000, 3), NoiseSpec("gaussian", sigma, seed=11))
        assert (n ** 2).sum(axis=1).mean() == pytest.approx(
            3 * sigma ** 2, rel=0.05)

    def test_impulse_fraction_and_values(self):
        a = 0.1
        n = noise_matrix((10_000, 3), NoiseSpec("impulse", a, seed=5))
        perturbed = n != 0.0
        frac = perturbed.mean()
        assert 0.27 <= frac <= 0.33
        assert set(np.unique(np.abs(n[perturbed]))) == {a}

    def test_uniform_bounded(self):
        a = 0.2
        n = noise_matrix((5_000, 3), NoiseSpec("uniform", a, seed=2))
        assert np.abs(n).max() <= a
        assert abs(n.mean()) < 0.01

    def test_gamma_symmetric_signs(self):
        n = noise_matrix((10_000, 3), NoiseSpec("gamma", 0.03, seed=8))
        assert abs((n > 0).mean() - 0.5) < 0.02
        # amplitude * Gamma(2, 2) has mean 4 * amplitude per side
        assert np.abs(n).mean() == pytest.approx(0.12, rel=0.05)


class TestRandomRotation:
    def test_orthogonal(self, rng):
        for seed in range(5):
            r = random_rotation(seed)
            assert np.abs(r @ r.T - np.eye(3)).max() < 1e-12

    def test_determinant_plus_one(self):
        for seed in range(5):
            assert np.linalg.det(random_rotation(seed)) == pytest.approx(
                1.0, abs=1e-12)

    def test_isotropy(self):
        rng = np.random.default_rng(0)
        images = np.array([random_rotation(rng) @ [0.0, 0.0, 1.0]
                           for _ in range(10_000)])
        assert np.abs(images.mean(axis=0)).max() < 0.05


class TestMixedNoiseSample:
    def test_single_entry_grid(self):
        spec = mixed_noise_sample(0, grid=(("uniform", 0.1),))
        assert spec.kind == "uniform" and spec.amplitude == 0.1

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            mixed_noise_sample(0, grid=())

    def test_same_seed_same_spec(self):
        assert mixed_noise_sample(42) == mixed_noise_sample(42)

    def test_default_grid_size(self):
        assert len(DEFAULT_NOISE_GRID) == 20
        kinds = {k for k, _ in DEFAULT_NOISE_GRID}
        assert kinds == set(KINDS)

    def test_grid_frequencies(self):
        rng = np.random.default_rng(3)
        counts: dict = {}
        draws = 10_000
        for _ in range(draws):
            spec = mixed_noise_sample(rng)
            key = (spec.kind, spec.amplitude)
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 20
        for value in counts.values():
            assert 0.03 <= value / draws <= 0.07
