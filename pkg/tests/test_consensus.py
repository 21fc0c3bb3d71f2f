import numpy as np
import pytest

from shrinkwire.consensus import (
    ConsensusSystem,
    consensus_matrix,
    normalized_consensus_matrix,
    read_system,
    run_to_consensus,
    spectral_convergence_check,
    step,
    trajectory_to_csv,
)
from shrinkwire.errors import DivergenceError, FormatError, InputError
from shrinkwire.graph import WeightedGraph, normalized_laplacian
from shrinkwire.linalg import format_matrix

from conftest import random_graph


def cycle(n):
    return WeightedGraph(n, False, tuple((i, (i + 1) % n, 1.0) for i in range(n)))


class TestStep:
    def test_identity(self):
        sys = ConsensusSystem(np.eye(3), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(step(sys, sys.x0), sys.x0)

    def test_averaging(self):
        sys = ConsensusSystem(np.full((2, 2), 0.5), [0.0, 2.0])
        np.testing.assert_array_equal(step(sys, sys.x0), [1.0, 1.0])

    def test_matches_matvec(self, rng):
        A = rng.normal(size=(6, 6))
        x = rng.normal(size=6)
        np.testing.assert_allclose(step(ConsensusSystem(A, x), x), A @ x, atol=1e-14)

    def test_validation(self):
        with pytest.raises(InputError):
            ConsensusSystem(np.eye(2), [1.0])
        with pytest.raises(InputError):
            ConsensusSystem(np.ones((2, 3)), [1.0, 2.0])


class TestVerdict:
    def test_connected_doubly_stochastic(self):
        assert spectral_convergence_check(consensus_matrix(cycle(5))) == "converges"

    def test_diverges(self):
        assert spectral_convergence_check(2 * np.eye(3)) == "diverges"

    def test_identity_marginal(self):
        assert spectral_convergence_check(np.eye(3)) == "marginal"

    def test_contraction(self):
        assert spectral_convergence_check(0.5 * np.eye(3)) == "converges"

    def test_bipartite_oscillation_is_marginal(self):
        # eps = 1/d_max on an even cycle puts an eigenvalue at -1
        assert spectral_convergence_check(consensus_matrix(cycle(4), eps=0.5)) == "marginal"

    def test_general_rotation_marginal(self):
        R = np.array([[0.0, -1.0], [1.0, 0.0]])
        assert spectral_convergence_check(R) == "marginal"

    def test_general_nonsymmetric_converges(self):
        A = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        assert spectral_convergence_check(A) == "converges"


class TestRun:
    def test_c4_reaches_average(self):
        sys = ConsensusSystem(consensus_matrix(cycle(4), eps=0.25), [1, 2, 3, 4])
        run = run_to_consensus(sys, 1e-6, 10_000)
        assert run.reached and run.regime == "average-consensus"
        np.testing.assert_allclose(run.x, 2.5, atol=1e-6)
        assert run.steps <= 10_000

    def test_disconnected_components_keep_their_averages(self):
        g = WeightedGraph(4, False, ((0, 1, 1.0), (2, 3, 1.0)))
        run = run_to_consensus(ConsensusSystem(consensus_matrix(g), [0.0, 2.0, 10.0, 20.0]))
        assert not run.reached
        np.testing.assert_allclose(run.x, [1, 1, 15, 15], atol=1e-6)

    def test_constant_start(self):
        run = run_to_consensus(ConsensusSystem(consensus_matrix(cycle(5)), [3.0] * 5))
        assert run.steps == 0 and run.reached

    def test_divergence(self):
        with pytest.raises(DivergenceError):
            run_to_consensus(ConsensusSystem(2 * np.eye(2), [1.0, 2.0]))

    def test_bad_tol(self):
        with pytest.raises(InputError):
            run_to_consensus(ConsensusSystem(np.eye(2), [1.0, 2.0]), tol=0)

    def test_mean_preserved_each_step(self, rng):
        g = random_graph(rng, 9)
        x0 = rng.normal(size=9)
        run = run_to_consensus(ConsensusSystem(consensus_matrix(g), x0), 1e-9)
        for x in run.trajectory:
            assert abs(x.mean() - x0.mean()) <= 1e-10

    def test_rate_bound(self, rng):
        for _ in range(20):
            g = random_graph(rng, int(rng.integers(3, 12)), p=0.3)
            A = consensus_matrix(g)
            mods = np.sort(np.abs(np.linalg.eigvalsh(A)))[::-1]
            rho = mods[1]
            x0 = rng.normal(size=g.n)
            run = run_to_consensus(ConsensusSystem(A, x0), 1e-10, 500)
            e0 = np.linalg.norm(x0 - x0.mean())
            for t, x in enumerate(run.trajectory):
                assert np.linalg.norm(x - x0.mean()) <= rho**t * e0 * (1 + 1e-9) + 1e-12

    def test_spectral_form_normalized_laplacian(self, rng):
        g = random_graph(rng, 7)
        L = normalized_laplacian(g)
        lam, U = np.linalg.eigh(L)
        A = normalized_consensus_matrix(g)
        x0 = rng.normal(size=7)
        sys = ConsensusSystem(A, x0)
        x = x0.copy()
        for t in range(1, 30):
            x = step(sys, x)
            spectral = U @ np.diag((1 - lam) ** t) @ U.T @ x0
            np.testing.assert_allclose(x, spectral, atol=1e-8)


class TestFiles:
    def test_read_system(self, tmp_path):
        A = consensus_matrix(cycle(3))
        (tmp_path / "s.txt").write_text(format_matrix(A) + "1 2 3\n")
        sys = read_system(tmp_path / "s.txt")
        np.testing.assert_array_equal(sys.A, A)
        np.testing.assert_array_equal(sys.x0, [1, 2, 3])

    @pytest.mark.parametrize("body", ["", "2 2\n1 0\n0 1\n", "2 2\n1 0\n0 1\n1\n", "2 2\n1 0\n0 1\n1 x\n", "2 2\n1 0\n0 1\n1 2\n3 4\n"])
    def test_bad_system(self, tmp_path, body):
        (tmp_path / "s.txt").write_text(body)
        with pytest.raises(FormatError):
            read_system(tmp_path / "s.txt")

    def test_trajectory_csv(self):
        text = trajectory_to_csv([np.array([1.0, 2.0]), np.array([1.5, 1.5])])
        assert text.splitlines() == ["step,x_0,x_1", "0,1,2", "1,1.5,1.5"]
