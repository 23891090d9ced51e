import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynet.netgen import GenConfig, generate_case
from dynet.regression import (ExperimentData, GroupOrders, GroupedRegressionProblem,
                              block_columns, build_problem, build_regressors, group_norms,
                              read_experiment_csv, stack_experiments, stack_homogeneous,
                              write_experiment_csv)


def layout_oracle(rho, L):
    """Column owner of every column, built by walking the layout directly."""
    owner = []
    for k, r in enumerate(rho):
        for l in range(L):
            owner += [(k, l)] * int(r)
    return owner


def true_theta(model, i, order=2):
    def pad(c):
        out = np.zeros(order)
        if c is not None:
            out[: c.size - 1] = c[1:order + 1]
        return out

    parts = [pad(model.A[i]) if j == i else pad(model.By[i][j]) for j in range(model.p)]
    parts += [pad(b) for b in model.Bu[i]]
    return np.concatenate(parts)


class TestExperimentData:
    def test_row_mismatch(self):
        with pytest.raises(ValueError, match="samples"):
            ExperimentData(np.zeros((5, 2)), np.zeros((4, 1)))

    def test_non_finite(self):
        y = np.zeros((5, 1))
        y[2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            ExperimentData(y, np.zeros((5, 0)))

    def test_empty(self):
        with pytest.raises(ValueError):
            ExperimentData(np.zeros((0, 1)), np.zeros((0, 0)))


class TestGroupOrders:
    def test_counts(self):
        o = GroupOrders.uniform(1, 3, 2)
        assert o.M == 5
        np.testing.assert_array_equal(o.rho, [2, 2, 2, 2, 2])
        assert o.labels()[3] == ("u", 0)

    def test_armax_adds_group(self):
        o = GroupOrders(0, 2, [2, 2], [1], nc=1)
        assert o.M == 4

    def test_zero_order_rejected(self):
        with pytest.raises(ValueError):
            GroupOrders(0, 0, [1, 1], [])

    def test_armax_regressors_refused(self):
        d = ExperimentData(np.ones((10, 2)), np.ones((10, 1)))
        with pytest.raises(ValueError, match="ARMAX"):
            build_regressors(d, 0, GroupOrders(0, 1, [1, 1], [1], nc=1))


class TestBuildRegressors:
    def test_pure_ar(self):
        d = ExperimentData(np.array([1.0, 2, 3, 4]), np.zeros((4, 0)))
        Phi, resp = build_regressors(d, 0, GroupOrders(0, 2, [2], []))
        np.testing.assert_array_equal(Phi, [[-2, -1], [-3, -2]])
        np.testing.assert_array_equal(resp, [3, 4])

    def test_arx_first_order(self):
        d = ExperimentData(np.array([0.0, 1, 0]), np.array([1.0, 0, 0]))
        Phi, resp = build_regressors(d, 0, GroupOrders(0, 1, [1], [1]))
        np.testing.assert_array_equal(Phi, [[0, 1], [-1, 0]])
        np.testing.assert_array_equal(resp, [1, 0])

    def test_too_short(self):
        d = ExperimentData(np.ones((2, 1)), np.zeros((2, 0)))
        with pytest.raises(ValueError, match="insufficient"):
            build_regressors(d, 0, GroupOrders(0, 2, [2], []))

    def test_noise_free_least_squares_recovers_parameters(self):
        cfg = GenConfig(p=3, density=0.3, snr_db=np.inf, n_samples=200, L=1)
        for seed in range(20):
            case = generate_case(cfg, seed=seed)
            model, data = case.models[0], case.data[0]
            for i in range(3):
                Phi, resp = build_regressors(data, i, GroupOrders.uniform(i, 3, 3))
                theta = np.linalg.lstsq(Phi, resp, rcond=None)[0]
                ref = true_theta(model, i)
                assert np.linalg.norm(theta - ref) < 1e-6 * np.linalg.norm(ref)


class TestStacking:
    def test_single_experiment_identity(self):
        rng = np.random.default_rng(0)
        A, y = rng.standard_normal((6, 5)), rng.standard_normal(6)
        prob = stack_experiments([(A, y)], [2, 3])
        np.testing.assert_array_equal(prob.A, A)
        np.testing.assert_array_equal(prob.y, y)

    def test_two_experiments_block_pattern(self):
        a1, a2 = np.array([[1.0], [2.0]]), np.array([[3.0], [4.0], [5.0]])
        prob = stack_experiments([(a1, [0, 0]), (a2, [0, 0, 0])], [1])
        np.testing.assert_array_equal(prob.A, [[1, 0], [2, 0], [0, 3], [0, 4], [0, 5]])
        assert prob.row_ranges == [(0, 2), (2, 5)]

    def test_product_matches_per_experiment(self):
        rng = np.random.default_rng(1)
        rho = np.array([2, 1, 3])
        parts = [(rng.standard_normal((n, 6)), rng.standard_normal(n)) for n in (7, 5, 9)]
        prob = stack_experiments(parts, rho)
        w = rng.standard_normal(prob.n_cols)
        ref = []
        for l, (Al, _) in enumerate(parts):
            wl = np.concatenate([w[block_columns(k * 3 + l, rho, 3)] for k in range(3)])
            ref.append(Al @ wl)
        np.testing.assert_allclose(prob.A @ w, np.concatenate(ref), rtol=1e-13)

    def test_mismatched_orders(self):
        with pytest.raises(ValueError, match="rho"):
            stack_experiments([(np.ones((3, 4)), np.ones(3)), (np.ones((3, 5)), np.ones(3))], [2, 2])

    def test_homogeneous(self):
        rng = np.random.default_rng(2)
        A, y = rng.standard_normal((8, 3)), rng.standard_normal(8)
        A1, y1 = stack_homogeneous([(A, y)])
        np.testing.assert_array_equal(A1, A)
        A2, y2 = stack_homogeneous([(A, y), (A, y)])
        np.testing.assert_allclose(A2.T @ A2, 2 * A.T @ A)
        np.testing.assert_allclose(A2.T @ y2, 2 * A.T @ y)

    def test_homogeneous_noise_free_recovery(self):
        case = generate_case(GenConfig(p=3, density=0.3, snr_db=np.inf, n_samples=150,
                                       L=2, perturbation=0.0), seed=5)
        orders = GroupOrders.uniform(1, 3, 3)
        Ah, yh = stack_homogeneous([build_regressors(d, 1, orders) for d in case.data])
        theta = np.linalg.lstsq(Ah, yh, rcond=None)[0]
        np.testing.assert_allclose(theta, true_theta(case.models[0], 1), atol=1e-8)

    def test_unit_columns_undone(self):
        rng = np.random.default_rng(3)
        prob = stack_experiments([(rng.standard_normal((10, 4)) * [1, 10, 100, 0.1],
                                   rng.standard_normal(10))], [2, 2])
        scaled, scale = prob.with_unit_columns()
        np.testing.assert_allclose(np.linalg.norm(scaled.A, axis=0), 1.0)
        w = rng.standard_normal(4)
        np.testing.assert_allclose(scaled.A @ w, prob.A @ (w / scale))


class TestBlockColumns:
    def test_small_group(self):
        assert block_columns(2, [2, 3], 2) == range(4, 7)

    def test_large_group(self):
        assert block_columns(1, [2, 3], 2, large=True) == range(4, 10)

    def test_first_large_group(self):
        assert block_columns(0, [4, 1, 2], 3, large=True) == range(0, 12)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            block_columns(4, [2, 3], 2)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(1, 5), min_size=1, max_size=8), st.integers(1, 4))
    def test_matches_layout_and_partitions(self, rho, L):
        owner = layout_oracle(rho, L)
        seen = []
        for k in range(len(rho)):
            big = block_columns(k, rho, L, large=True)
            assert [owner[c][0] for c in big] == [k] * len(big)
            for l in range(L):
                cols = block_columns(k * L + l, rho, L)
                assert [owner[c] for c in cols] == [(k, l)] * rho[k]
                assert cols.start >= big.start and cols.stop <= big.stop
                seen += list(cols)
        assert sorted(seen) == list(range(L * sum(rho)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_stack_zero_pattern(seed):
    rng = np.random.default_rng(seed)
    L = int(rng.integers(1, 4))
    rho = rng.integers(1, 4, int(rng.integers(1, 4)))
    parts = [(rng.standard_normal((int(rng.integers(2, 6)), rho.sum())), np.zeros(1))
             for _ in range(L)]
    parts = [(A, np.zeros(A.shape[0])) for A, _ in parts]
    prob = stack_experiments(parts, rho)
    row_exp = np.concatenate([[l] * (b - a) for l, (a, b) in enumerate(prob.row_ranges)])
    col_exp = prob.experiment_index()
    r, c = np.nonzero(prob.A)
    assert np.all(row_exp[r] == col_exp[c])


class TestGroupNorms:
    def problem(self):
        return GroupedRegressionProblem(np.zeros((3, 5)), np.zeros(3), np.array([2, 3]), 1)

    def test_zero(self):
        np.testing.assert_array_equal(group_norms(np.zeros(5), self.problem()), [0, 0])

    def test_pythagorean(self):
        assert group_norms(np.array([3.0, 4, 0, 0, 0]), self.problem())[0] == 5.0

    def test_matches_slices(self):
        rng = np.random.default_rng(4)
        rho, L = [2, 1, 3], 2
        prob = GroupedRegressionProblem(np.zeros((1, 12)), np.zeros(1), np.array(rho), L)
        w = rng.standard_normal(12)
        ref = [np.linalg.norm(w[block_columns(k, rho, L, large=True)]) for k in range(3)]
        np.testing.assert_allclose(group_norms(w, prob), ref)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            group_norms(np.zeros(4), self.problem())


class TestCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        d = ExperimentData(rng.standard_normal((20, 3)), rng.standard_normal((20, 2)), dt=0.25)
        write_experiment_csv(tmp_path / "e.csv", d)
        back = read_experiment_csv(tmp_path / "e.csv")
        np.testing.assert_array_equal(back.y, d.y)
        np.testing.assert_array_equal(back.u, d.u)
        assert back.dt == pytest.approx(0.25)

    @pytest.mark.parametrize("text,match", [
        ("", "empty"),
        ("x,y1\n0,1\n", "header"),
        ("t,y1,y3\n0,1,2\n", "header"),
        ("t,y1\n0,1\n1\n", ":3: expected 2 fields"),
        ("t,y1\n0,abc\n", ":2:"),
        ("t,y1\n0,1\n1,2\n3,3\n", "uniform"),
        ("t,y1\n", "no samples"),
    ])
    def test_malformed(self, tmp_path, text, match):
        f = tmp_path / "bad.csv"
        f.write_text(text)
        with pytest.raises(ValueError, match=match):
            read_experiment_csv(f)

    def test_output_count_checked(self, tmp_path):
        f = tmp_path / "e.csv"
        f.write_text("t,y1,u1\n0,1,2\n1,1,2\n")
        with pytest.raises(ValueError, match="expected 2 outputs"):
            read_experiment_csv(f, p=2)


def test_build_problem_layout():
    case = generate_case(GenConfig(p=4, density=0.25, n_samples=60, L=2), seed=1)
    prob = build_problem(case.data, 2)
    assert prob.L == 2 and prob.M == 8
    assert prob.n_cols == 2 * 16
    assert prob.labels[2] == ("y", 2)
    assert prob.n_rows == 2 * 58
