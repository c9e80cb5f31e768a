import numpy as np
import pytest

from lotspace.simgen import (CohortSpec, MixtureSpec, cohort_to_rows,
                             make_two_class_cohort, perturb_cloud,
                             sample_cloud)


def single_gaussian(d=3, loc=0.0):
    return MixtureSpec(np.full((1, d), loc), np.eye(d), [1.0])


class TestSampleCloud:
    def test_degenerate_covariance(self):
        mix = MixtureSpec(np.array([[2.0, -1.0]]), np.zeros((2, 2)), [1.0])
        cloud = sample_cloud(mix, 5, seed=0)
        assert np.allclose(cloud.points, [2.0, -1.0])

    def test_clt_mean_bound(self):
        mix = single_gaussian(d=2, loc=1.5)
        cloud = sample_cloud(mix, 10_000, seed=1)
        err = np.abs(cloud.points.mean(0) - 1.5).max()
        assert err <= 4.0 / np.sqrt(10_000)

    def test_deterministic(self):
        mix = single_gaussian()
        c1 = sample_cloud(mix, 50, seed=7)
        c2 = sample_cloud(mix, 50, seed=7)
        assert np.array_equal(c1.points, c2.points)

    def test_invalid_covariance(self):
        with pytest.raises(ValueError):
            MixtureSpec(np.zeros((1, 2)), np.array([[1.0, 2.0], [0.0, 1.0]]), [1.0])

    def test_mixture_proportions(self):
        mix = MixtureSpec(np.array([[-10.0], [10.0]]),
                          np.stack([np.eye(1), np.eye(1)]), [0.5, 0.5])
        cloud = sample_cloud(mix, 2000, seed=2)
        frac = np.mean(cloud.points > 0)
        assert 0.4 < frac < 0.6


class TestPerturbCloud:
    def cloud(self, seed=0):
        return sample_cloud(single_gaussian(d=2), 30, seed=seed)

    def test_zero_shift_identity(self):
        c = self.cloud()
        out = perturb_cloud(c, shift=np.zeros(2))
        assert np.array_equal(out.points, c.points)

    def test_rotation_involution(self):
        c = self.cloud()
        R = np.array([[-1.0, 0.0], [0.0, -1.0]])   # rotation by pi
        out = perturb_cloud(perturb_cloud(c, rotation=R), rotation=R)
        assert np.abs(out.points - c.points).max() <= 1e-12

    def test_scale_doubles_distances(self):
        c = self.cloud()
        out = perturb_cloud(c, scale=2.0)
        d0 = np.linalg.norm(c.points[0] - c.points[1])
        d1 = np.linalg.norm(out.points[0] - out.points[1])
        assert d1 == pytest.approx(2.0 * d0)

    def test_rigid_preserves_distances(self):
        c = self.cloud()
        th = 0.7
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        out = perturb_cloud(c, shift=np.array([3.0, -1.0]), rotation=R)
        for i in range(0, 10, 3):
            d0 = np.linalg.norm(c.points[i] - c.points[i + 1])
            d1 = np.linalg.norm(out.points[i] - out.points[i + 1])
            assert abs(d0 - d1) <= 1e-10

    def test_non_orthogonal_rejected(self):
        with pytest.raises(ValueError):
            perturb_cloud(self.cloud(), rotation=np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestMakeTwoClassCohort:
    def spec(self, shift_mag=3.0, n=10, jitter=True, seed=0):
        d = 4
        shift = np.zeros(d)
        shift[0] = shift_mag
        return CohortSpec(single_gaussian(d=d), n, 50,
                          shift=shift if shift_mag else None,
                          jitter=jitter, seed=seed)

    def test_class_counts(self):
        clouds = make_two_class_cohort(self.spec(n=20))
        assert len(clouds) == 40
        assert sum(1 for c in clouds if c.label == 0) == 20
        assert sum(1 for c in clouds if c.label == 1) == 20

    def test_deterministic(self):
        c1 = make_two_class_cohort(self.spec(seed=3))
        c2 = make_two_class_cohort(self.spec(seed=3))
        for a, b in zip(c1, c2):
            assert np.array_equal(a.points, b.points)

    def test_null_cohort_classes_alike(self):
        clouds = make_two_class_cohort(self.spec(shift_mag=0.0, n=10))
        m0 = np.vstack([c.points for c in clouds if c.label == 0]).mean(0)
        m1 = np.vstack([c.points for c in clouds if c.label == 1]).mean(0)
        assert np.abs(m0 - m1).max() < 0.5

    def test_shift_moves_class_one(self):
        clouds = make_two_class_cohort(self.spec(shift_mag=5.0))
        m0 = np.vstack([c.points for c in clouds if c.label == 0]).mean(0)
        m1 = np.vstack([c.points for c in clouds if c.label == 1]).mean(0)
        assert m1[0] - m0[0] > 4.0

    def test_jitter_distinguishes_samples(self):
        clouds = make_two_class_cohort(self.spec())
        class0 = [c for c in clouds if c.label == 0]
        assert not np.array_equal(class0[0].points, class0[1].points)


def test_cohort_to_rows_roundtrip():
    clouds = make_two_class_cohort(CohortSpec(single_gaussian(d=2), 2, 5,
                                              shift=np.array([1.0, 0.0]), seed=0))
    meta, values = cohort_to_rows(clouds, ["a", "b"])
    assert len(meta) == 4 * 5
    assert values.shape == (20, 2)
    assert meta[0][0] == "sample000"
