import numpy as np
import pytest

from digitsv.errors import (
    BadLdaDim,
    EmptyEnrollment,
    InconsistentBackground,
    InsufficientSpeakers,
    RankTooLarge,
    ZeroVector,
)
from digitsv.ivector import (
    IVector,
    TvModel,
    extract_ivector,
    length_normalize,
    plda_log_likelihood,
    plda_score,
    train_backend,
    train_tv,
)
from digitsv.pgmm import Background, SuffStats


def toy_background(m=3, dim=2, seed=0, model_id="bg"):
    rng = np.random.default_rng(seed)
    return Background(rng.standard_normal((m, dim)), 0.5 + rng.random((m, dim)),
                      None, m, model_id)


def random_stats(background, seed=0, scale=3.0):
    rng = np.random.default_rng(seed)
    n = rng.random(background.n_mixtures) * 20 + 1
    f = scale * rng.standard_normal(background.means.shape) * np.sqrt(n)[:, None]
    s = np.abs(rng.standard_normal(background.means.shape)) * n[:, None]
    return SuffStats(n, f, s, background.model_id)


class TestExtractIvector:
    def test_zero_stats_give_zero_vector(self):
        bg = toy_background()
        tv = TvModel(np.random.default_rng(1).standard_normal((6, 4)), bg)
        stats = SuffStats(np.zeros(3), np.zeros((3, 2)), np.zeros((3, 2)), "bg")
        iv = extract_ivector(stats, tv)
        np.testing.assert_array_equal(iv.vector, np.zeros(4))

    def test_scalar_hand_case(self):
        # one mixture, D=1, R=1: (1 + T^2 N / v) w = T F / v with T=2, v=1, N=3, F=6
        bg = Background(np.zeros((1, 1)), np.ones((1, 1)), None, 1, "bg")
        tv = TvModel(np.array([[2.0]]), bg)
        stats = SuffStats(np.array([3.0]), np.array([[6.0]]), np.zeros((1, 1)), "bg")
        iv = extract_ivector(stats, tv)
        assert abs(iv.vector[0] - 12.0 / 13.0) < 1e-12

    def test_linear_in_first_order_stats(self):
        bg = toy_background(seed=2)
        tv = TvModel(np.random.default_rng(3).standard_normal((6, 3)), bg)
        stats = random_stats(bg, seed=4)
        doubled = SuffStats(stats.n, 2.0 * stats.f, stats.s, "bg")
        a = extract_ivector(stats, tv).vector
        b = extract_ivector(doubled, tv).vector
        np.testing.assert_allclose(b, 2.0 * a, atol=1e-10)

    def test_matches_dense_gls_solve(self):
        # independent re-derivation with explicit block-diagonal matrices
        rng = np.random.default_rng(5)
        for trial in range(5):
            m, d, r = rng.integers(1, 5), rng.integers(1, 3), rng.integers(1, 4)
            bg = Background(rng.standard_normal((m, d)), 0.5 + rng.random((m, d)),
                            None, m, "bg")
            tv = TvModel(rng.standard_normal((m * d, r)), bg)
            stats = random_stats(bg, seed=int(rng.integers(1e6)))
            n_diag = np.diag(np.repeat(stats.n, d))
            sigma_inv = np.diag(1.0 / bg.variances.reshape(-1))
            lhs = np.eye(r) + tv.matrix.T @ sigma_inv @ n_diag @ tv.matrix
            rhs = tv.matrix.T @ sigma_inv @ stats.f.reshape(-1)
            expected = np.linalg.solve(lhs, rhs)
            got = extract_ivector(stats, tv).vector
            np.testing.assert_allclose(got, expected, atol=1e-8)


class TestTrainTv:
    def test_auxiliary_nondecreasing(self):
        bg = toy_background(m=4, dim=3, seed=6)
        stats = [random_stats(bg, seed=k) for k in range(30)]
        tv = train_tv(stats, bg, rank=5, iterations=5, seed=0)
        diffs = np.diff(tv.training_log)
        assert np.all(diffs >= -1e-8 * np.abs(np.array(tv.training_log[:-1])))

    def test_rank_too_large(self):
        bg = toy_background(seed=7)
        stats = [random_stats(bg, seed=k) for k in range(10)]
        with pytest.raises(RankTooLarge):
            train_tv(stats, bg, rank=20)

    def test_inconsistent_background(self):
        bg = toy_background(seed=8, model_id="a")
        other = toy_background(seed=9, model_id="b")
        stats = [random_stats(other, seed=k) for k in range(5)]
        with pytest.raises(InconsistentBackground):
            train_tv(stats, bg, rank=2)

    def test_determinism(self):
        bg = toy_background(seed=10)
        stats = [random_stats(bg, seed=k) for k in range(12)]
        a = train_tv(stats, bg, rank=3, iterations=3, seed=5)
        b = train_tv(stats, bg, rank=3, iterations=3, seed=5)
        np.testing.assert_array_equal(a.matrix, b.matrix)


class TestLengthNormalize:
    def test_three_four_five(self):
        iv = length_normalize(IVector(np.array([3.0, 4.0])))
        np.testing.assert_allclose(iv.vector, [0.6, 0.8], atol=1e-12)
        assert iv.normalized

    def test_idempotent_on_unit_sphere(self):
        iv = length_normalize(IVector(np.array([0.6, 0.8])))
        np.testing.assert_allclose(iv.vector, [0.6, 0.8], atol=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVector):
            length_normalize(IVector(np.zeros(3)))


def labeled_cloud(n_speakers=6, per_speaker=8, dim=5, spread=4.0, seed=0):
    rng = np.random.default_rng(seed)
    centers = spread * rng.standard_normal((n_speakers, dim))
    vectors, labels = [], []
    for k in range(n_speakers):
        vectors.append(centers[k] + rng.standard_normal((per_speaker, dim)))
        labels.extend([f"spk{k}"] * per_speaker)
    return np.concatenate(vectors), labels


class TestBackend:
    def test_lda_finds_separation_axis(self):
        rng = np.random.default_rng(1)
        n = 40
        axis = np.array([1.0, 0.0])
        x = np.concatenate([
            rng.standard_normal((n, 2)) * [0.2, 2.0] + 5 * axis,
            rng.standard_normal((n, 2)) * [0.2, 2.0] - 5 * axis,
        ])
        labels = ["a"] * n + ["b"] * n
        backend = train_backend(x, labels, lda_dim=1, plda_iterations=2)
        direction = backend.lda[:, 0] / np.linalg.norm(backend.lda[:, 0])
        assert abs(np.dot(direction, axis)) > 0.99

    def test_plda_log_likelihood_nondecreasing(self):
        x, labels = labeled_cloud(seed=2)
        backend = train_backend(x, labels, lda_dim=3, plda_iterations=8)
        lls = backend.training_log
        diffs = np.diff(lls)
        assert np.all(diffs >= -1e-8 * np.abs(np.array(lls[:-1])))

    def test_insufficient_speakers(self):
        x, labels = labeled_cloud(n_speakers=1, seed=3)
        with pytest.raises(InsufficientSpeakers):
            train_backend(x, labels, lda_dim=1)

    def test_bad_lda_dim(self):
        x, labels = labeled_cloud(n_speakers=3, seed=4)
        with pytest.raises(BadLdaDim):
            train_backend(x, labels, lda_dim=3)  # must be <= speakers - 1


class TestPldaScore:
    def setup_method(self):
        self.x, self.labels = labeled_cloud(seed=5)
        self.backend = train_backend(self.x, self.labels, lda_dim=4,
                                     plda_iterations=5)

    def test_same_speaker_scores_higher(self):
        b = self.backend
        enroll = [b.prepare(IVector(v)) for v in self.x[:4]]
        same = b.prepare(IVector(self.x[5]))       # spk0
        different = b.prepare(IVector(self.x[-1]))  # last speaker
        assert plda_score(b, enroll, same) > plda_score(b, enroll, different)

    def test_enrollment_order_invariance(self):
        b = self.backend
        e1 = [b.prepare(IVector(v)) for v in self.x[:3]]
        e2 = list(reversed(e1))
        test = b.prepare(IVector(self.x[10]))
        assert abs(plda_score(b, e1, test) - plda_score(b, e2, test)) < 1e-10

    def test_zero_between_covariance_gives_constant_scores(self):
        b = self.backend
        b_zero = type(b)(b.lda, b.mean, np.zeros_like(b.between), b.within)
        enroll = [b.prepare(IVector(self.x[0]))]
        scores = [plda_score(b_zero, enroll, b.prepare(IVector(v)))
                  for v in self.x[5:10]]
        np.testing.assert_allclose(scores, 0.0, atol=1e-9)

    def test_empty_enrollment(self):
        with pytest.raises(EmptyEnrollment):
            plda_score(self.backend, [], self.backend.prepare(IVector(self.x[0])))

    def test_score_ordering_invariant_under_linear_pretransform(self):
        rng = np.random.default_rng(6)
        transform = rng.standard_normal((5, 5)) + 3 * np.eye(5)
        x2 = self.x @ transform.T
        backend2 = train_backend(x2, self.labels, lda_dim=4, plda_iterations=5)

        def trial_scores(backend, vectors):
            out = []
            for spk in ("spk0", "spk1", "spk2"):
                idx = [i for i, l in enumerate(self.labels) if l == spk][:3]
                enroll = [backend.prepare(IVector(vectors[i])) for i in idx]
                for j in range(30, 45):
                    out.append(plda_score(backend, enroll,
                                          backend.prepare(IVector(vectors[j]))))
            return np.array(out)

        a = trial_scores(self.backend, self.x)
        b = trial_scores(backend2, x2)
        from scipy.stats import spearmanr

        rho = spearmanr(a, b).statistic
        assert rho > 0.999
