import numpy as np
import pytest

from rqnn.circuit import CircuitParams, fast_probs
from rqnn.errors import InvalidArgument
from rqnn.qnn import ThetaBundle, eval_component
from rqnn.reservoir import ReservoirSystem, run
from rqnn.shots import (ShotConfig, estimate_probs, eval_qnn_shots, run_shots, sample_counts, shots_sweep,
                        trajectory_bound)


def _circ(seed, n=6, dim=2, R=1.0):
    rng = np.random.default_rng(seed)
    return CircuitParams(rng.normal(size=(n, dim)), rng.uniform(0, 6, n), rng.uniform(0, 2 * np.pi, n), R)


def test_counts_basic_contract():
    c = sample_counts([0, 0, 1, 0], 500, seed=0)
    np.testing.assert_array_equal(c, [0, 0, 500, 0])
    c1, c2 = sample_counts([0.1, 0.2, 0.3, 0.4], 1000, 3), sample_counts([0.1, 0.2, 0.3, 0.4], 1000, 3)
    np.testing.assert_array_equal(c1, c2)
    assert c1.sum() == 1000
    with pytest.raises(InvalidArgument):
        sample_counts([0.5, 0.6], 10)
    with pytest.raises(InvalidArgument):
        sample_counts([1.0], 0)
    with pytest.raises(InvalidArgument):
        ShotConfig(-1)


def test_binomial_concentration():
    est = estimate_probs([0.5, 0.5, 0, 0], 100_000, seed=1, size=100)
    ok = np.all(np.abs(est[:, :2] - 0.5) <= 0.01, axis=1)
    assert ok.mean() >= 0.99


def test_probability_estimates_unbiased_with_bernoulli_variance():
    p = fast_probs(_circ(0), [0.2], [0.5])
    S, reps = 1000, 4000
    est = estimate_probs(p, S, seed=2, size=reps)
    se = np.sqrt(p * (1 - p) / S / reps)
    assert np.all(np.abs(est.mean(axis=0) - p) <= 4 * se + 1e-15)
    rmse = np.sqrt(np.mean((est - p) ** 2, axis=0))
    assert np.all(rmse <= 1.1 / (2 * np.sqrt(S)))


def test_exact_mode_is_deterministic_evaluation():
    c = _circ(1)
    assert eval_qnn_shots(c, [0.3], [0.1], ShotConfig(0)) == eval_component(c, [0.3], [0.1])


def test_qnn_shot_rmse_bound_and_slope():
    c = _circ(2, R=2.0)
    exact = eval_component(c, [0.3], [-0.4])
    rmses = []
    Ss = [100, 1000, 10_000, 100_000]
    for S in Ss:
        rng = np.random.default_rng(S)
        vals = [eval_qnn_shots(c, [0.3], [-0.4], ShotConfig(S), rng=rng) for _ in range(1000)]
        rmse = np.sqrt(np.mean((np.array(vals) - exact) ** 2))
        assert rmse <= 4 * c.R / np.sqrt(S)
        rmses.append(rmse)
    slope = np.polyfit(np.log(Ss), np.log(rmses), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_full_register_sampling_matches_class_marginal():
    c = _circ(3, n=3)
    rng = np.random.default_rng(4)
    exact = eval_component(c, [0.1], [0.2])
    vals = [eval_qnn_shots(c, [0.1], [0.2], ShotConfig(2000), rng=rng, full=True) for _ in range(300)]
    assert abs(np.mean(vals) - exact) <= 4 * np.std(vals) / np.sqrt(300)


def _system():
    rng = np.random.default_rng(5)
    circs = [CircuitParams(0.5 * rng.normal(size=(16, 3)), rng.uniform(0, 6, 16),
                           rng.uniform(0, 2 * np.pi, 16), 0.5) for _ in range(2)]
    return ReservoirSystem(ThetaBundle.from_circuits(circs, 1))


def test_run_shots_exact_mode_and_determinism():
    sys_ = _system()
    z = np.random.default_rng(6).uniform(-1, 1, (20, 1))
    np.testing.assert_array_equal(run_shots(sys_, z, None, ShotConfig(0)), run(sys_, z))
    a = run_shots(sys_, z, None, ShotConfig(100, seed=3), run_id=1)
    b = run_shots(sys_, z, None, ShotConfig(100, seed=3), run_id=1)
    c = run_shots(sys_, z, None, ShotConfig(100, seed=3), run_id=2)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    frozen = run_shots(sys_, z, None, ShotConfig(100, seed=3, resample_each_step=False))
    assert frozen.shape == a.shape


def test_noisy_trajectory_error_shrinks_with_shots():
    sys_ = _system()
    z = np.random.default_rng(7).uniform(-1, 1, (30, 1))
    exact = run(sys_, z)[-1]
    errs = []
    for S in (400, 1600):
        errs.append(np.mean([np.linalg.norm(run_shots(sys_, z, None, ShotConfig(S, seed=11), r)[-1] - exact)
                             for r in range(200)]))
    assert errs[1] / errs[0] == pytest.approx(0.5, rel=0.3)


def test_sweep_report_and_bound(tmp_path):
    sys_ = _system()
    rep = shots_sweep(sys_, [100, 400], 2, seed=0, reps=200, runs=20, T=10)
    assert len(rep.rows) == 4 and rep.S_values == [100, 400]
    for S, _, rp, rq, te in rep.rows:
        assert rq <= 4 * sys_.R / np.sqrt(S)
        assert te <= trajectory_bound(0.9, sys_.N, sys_.R, S)
    path = tmp_path / "shots.csv"
    rep.to_csv(path)
    assert path.read_text().splitlines()[1] == "S,trial,rmse_prob,rmse_qnn,traj_err"
