import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from otus.errors import BudgetExceededError, InvalidArgumentError
from otus.ot import (
    MAX_ATOMS,
    DiscreteMeasure,
    cost_matrix,
    joint_cost_lower_bound,
    joint_transport_cost,
    linprog_eq,
    pushforward,
    read_measure,
    w1_1d,
    w1_dual,
    w1_exact,
    write_measure,
)
from otus.ot.simplex import InfeasibleError
from otus.verify import random_measure


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def scipy_w1(mu, nu, metric="L1"):
    """Independent LP oracle (HiGHS)."""
    C = cost_matrix(mu.support, nu.support, metric)
    n, m = C.shape
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        A[n + j, j::m] = 1
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([mu.weights, nu.weights]), method="highs")
    return res.fun


class TestMeasure:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(InvalidArgumentError):
            DiscreteMeasure(np.zeros((2, 1)), [0.5, 0.6])

    def test_negative_weight(self):
        with pytest.raises(InvalidArgumentError):
            DiscreteMeasure(np.zeros((2, 1)), [1.5, -0.5])

    def test_count_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            DiscreteMeasure(np.zeros((3, 1)), [0.5, 0.5])

    def test_text_roundtrip(self, tmp_path, rng):
        mu = random_measure(rng, 5, 2)
        write_measure(tmp_path / "m.meas", mu)
        back = read_measure(tmp_path / "m.meas")
        np.testing.assert_array_equal(back.support, mu.support)
        np.testing.assert_array_equal(back.weights, mu.weights)

    @pytest.mark.parametrize("text", ["MEAS v2 1 1\n1 0\n", "MEAS v1 2 1\n1 0\n"])
    def test_bad_text(self, text):
        with pytest.raises(InvalidArgumentError):
            DiscreteMeasure.from_text(text)

    def test_mass_of(self):
        mu = DiscreteMeasure([[0.0], [1.0], [2.0]], [0.25, 0.25, 0.5])
        assert mu.mass_of([[0.0], [2.0]]) == 0.75


class TestW1:
    def test_dirac_pair(self):
        cost, plan = w1_exact(DiscreteMeasure.dirac([0.0, 0.0]), DiscreteMeasure.dirac([1.0, 2.0]))
        assert cost == 3.0
        assert plan.coupling.shape == (1, 1)

    def test_l2_metric(self):
        cost, _ = w1_exact(DiscreteMeasure.dirac([0.0, 0.0]), DiscreteMeasure.dirac([3.0, 4.0]), metric="L2")
        assert cost == pytest.approx(5.0, abs=1e-12)

    def test_uniform_shift_1d(self):
        mu = DiscreteMeasure.uniform([[0.0], [1.0], [5.0]])
        nu = DiscreteMeasure.uniform([[0.5], [1.5], [5.5]])
        assert w1_exact(mu, nu)[0] == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("metric", ["L1", "L2"])
    def test_matches_scipy(self, rng, metric):
        for _ in range(20):
            n, m, d = rng.integers(1, 7), rng.integers(1, 7), rng.integers(1, 4)
            mu, nu = random_measure(rng, n, d), random_measure(rng, m, d)
            cost, plan = w1_exact(mu, nu, metric)
            assert cost == pytest.approx(scipy_w1(mu, nu, metric), abs=1e-9)
            assert plan.marginal_error(mu, nu) < 1e-9
            assert np.all(plan.coupling >= 0)

    def test_matches_brute_force_vertex(self, rng):
        # 2x2 couplings form a segment; the optimum sits on an endpoint
        for _ in range(20):
            mu = DiscreteMeasure(rng.standard_normal((2, 1)), np.array([1, 0]) + rng.random() * np.array([-1, 1]))
            nu = DiscreteMeasure(rng.standard_normal((2, 1)), np.array([1, 0]) + rng.random() * np.array([-1, 1]))
            a, b = mu.weights, nu.weights
            C = cost_matrix(mu.support, nu.support)
            lo, hi = max(0.0, a[0] - b[1]), min(a[0], b[0])
            costs = []
            for t in (lo, hi):
                P = np.array([[t, a[0] - t], [b[0] - t, a[1] - b[0] + t]])
                costs.append((P * C).sum())
            assert w1_exact(mu, nu)[0] == pytest.approx(min(costs), abs=1e-12)

    def test_budget(self):
        big = DiscreteMeasure.uniform(np.arange(MAX_ATOMS + 1, dtype=float)[:, None])
        with pytest.raises(BudgetExceededError):
            w1_exact(big, big)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            w1_exact(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([0.0, 1.0]))


class TestDualAndClosedForm:
    def test_no_gap(self, rng):
        for _ in range(20):
            d = rng.integers(1, 3)
            mu, nu = random_measure(rng, rng.integers(1, 6), d), random_measure(rng, rng.integers(1, 6), d)
            primal = w1_exact(mu, nu)[0]
            dual, points, phi = w1_dual(mu, nu)
            assert abs(primal - dual) <= 1e-6
            D = cost_matrix(points, points)
            assert np.all(np.abs(phi[:, None] - phi[None, :]) <= D + 1e-9)

    def test_identical_measures(self, rng):
        mu = random_measure(rng, 4, 2)
        assert w1_dual(mu, mu)[0] == pytest.approx(0.0, abs=1e-12)

    def test_closed_form(self, rng):
        for _ in range(30):
            mu, nu = random_measure(rng, rng.integers(1, 7), 1), random_measure(rng, rng.integers(1, 7), 1)
            assert w1_1d(mu, nu) == pytest.approx(w1_exact(mu, nu)[0], abs=1e-9)

    def test_closed_form_hand(self):
        mu = DiscreteMeasure([[0.0], [2.0]], [0.5, 0.5])
        nu = DiscreteMeasure.dirac([1.0])
        assert w1_1d(mu, nu) == 1.0

    def test_closed_form_needs_1d(self):
        with pytest.raises(InvalidArgumentError):
            w1_1d(DiscreteMeasure.dirac([0.0, 0.0]), DiscreteMeasure.dirac([0.0, 0.0]))


class TestPushforward:
    def test_pooling(self):
        mu = DiscreteMeasure([[-1.0], [1.0], [2.0]], [0.25, 0.25, 0.5])
        img = pushforward(np.abs, mu)
        assert img.n == 2
        assert img.mass_of([[1.0]]) == 0.5

    def test_preimage_mass_by_enumeration(self, rng):
        # mass of every subset of the image equals the mass of its preimage
        pts = rng.integers(-2, 3, size=(6, 1)).astype(float)
        w = rng.integers(1, 5, size=6).astype(float)
        mu = DiscreteMeasure(pts, w / w.sum())

        def T(x):
            return np.floor(x / 2)

        img = pushforward(T, mu)
        imgs = [tuple(p) for p in img.support]
        for r in range(len(imgs) + 1):
            for subset in itertools.combinations(imgs, r):
                pre = [p for p in mu.support if tuple(T(p)) in subset]
                assert img.mass_of(list(subset) or np.empty((0, 1))) == pytest.approx(
                    mu.mass_of(pre) if pre else 0.0, abs=1e-15)

    def test_identity_is_w1_zero(self, rng):
        mu = random_measure(rng, 5, 2)
        assert w1_exact(mu, pushforward(lambda x: x, mu))[0] == pytest.approx(0.0, abs=1e-12)


class TestJointCost:
    def test_bounded_below(self, rng):
        for _ in range(15):
            mu, nu = random_measure(rng, rng.integers(1, 6), 1), random_measure(rng, rng.integers(1, 6), 1)
            a, b = rng.standard_normal(2)

            def G(y):
                return a * y + b

            def F(x):
                return (x - b) / a

            joint = joint_transport_cost(mu, nu, G, F)[0]
            assert joint >= joint_cost_lower_bound(mu, nu, G, F) - 1e-9

    def test_exact_inverse_maps_zero(self):
        nu = DiscreteMeasure.uniform([[0.0], [1.0], [3.0]])
        mu = pushforward(lambda y: 2 * y + 1, nu)
        cost, _ = joint_transport_cost(mu, nu, lambda y: 2 * y + 1, lambda x: (x - 1) / 2)
        assert cost == pytest.approx(0.0, abs=1e-12)


class TestSimplex:
    def test_small_lp(self):
        # min -x - y st x + y + s = 1
        res = linprog_eq([-1.0, -2.0, 0.0], [[1.0, 1.0, 1.0]], [1.0])
        assert res.objective == pytest.approx(-2.0)
        np.testing.assert_allclose(res.x, [0, 1, 0])

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            linprog_eq([1.0, 1.0], [[1.0, 1.0], [1.0, 1.0]], [1.0, 2.0])

    def test_against_scipy(self, rng):
        for _ in range(10):
            A = rng.random((3, 6))
            x0 = rng.random(6)
            b = A @ x0
            c = rng.random(6)
            ours = linprog_eq(c, A, b).objective
            ref = linprog(c, A_eq=A, b_eq=b, method="highs").fun
            assert ours == pytest.approx(ref, abs=1e-9)
