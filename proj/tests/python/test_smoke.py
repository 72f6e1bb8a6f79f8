import json
import math

import pytest

import robustpo


def test_hypervolume_of_staircase():
    # union of [0,0.2]x[0,0.9], [0,0.5]x[0,0.6], [0,0.8]x[0,0.3]
    pts = [(0.2, 0.9), (0.5, 0.6), (0.8, 0.3), (0.1, 0.1)]
    expected = 0.2 * 0.9 + 0.3 * 0.6 + 0.3 * 0.3
    assert robustpo.hypervolume_2d(pts) == pytest.approx(expected, abs=1e-15)
    assert robustpo.pareto_front(pts) == [(0.2, 0.9), (0.5, 0.6), (0.8, 0.3)]


def test_ehi_point_mass_limit():
    front = [(0.3, 0.7), (0.6, 0.4)]
    got = robustpo.ehi(0.5, 1e-12, 0.6, 1e-12, front)
    base = robustpo.hypervolume_2d(front)
    assert got == pytest.approx(robustpo.hypervolume_2d(front + [(0.5, 0.6)]) - base, abs=1e-9)


def test_ei_zero_variance_at_best():
    assert robustpo.ei(0.4, 0.0, 0.4) == 0.0


def test_reward_and_scaling_constants():
    assert robustpo.reward([0, 0, 0, 0], 1.0) == -8.0
    assert robustpo.scale_return(-20.0) == 0.5
    assert robustpo.scale_return(0.0) == 1.0
    assert robustpo.scale_return(-500.0) == 0.0
    assert robustpo.scale_return(-600.0) == 0.0


def test_matern_unit_distance():
    k = robustpo.matern52([0, 0, 0, 0], [1, 0, 0, 0], [1, 1, 1, 1], 1.0)
    s5 = math.sqrt(5.0)
    assert k == pytest.approx((1 + s5 + 5 / 3) * math.exp(-s5), rel=1e-14)


def test_gp_posterior_interpolates_with_small_noise():
    hp = {
        "lengthscales": [1, 1, 1, 1],
        "signal_std": 1.0,
        "coreg_factor": [[1.0, 0.0], [0.5, 1.0]],
        "noise_var": [1e-8, 1e-8],
    }
    xs = [[0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0]]
    ys = [[0.1, 0.9], [0.5, 0.4], [0.8, 0.2]]
    mean, cov = robustpo.gp_posterior(xs, ys, [1, 0, 0, 0], json.dumps(hp))
    assert mean[0] == pytest.approx(0.5, abs=1e-5)
    assert mean[1] == pytest.approx(0.4, abs=1e-5)
    assert cov.shape == (2, 2)


def test_rollout_csv_header_and_length():
    text = robustpo.rollout_csv([0, 0, 0, 0], 0.1, [0, 0, 0, 0], 3)
    lines = text.strip().splitlines()
    assert lines[0] == "t,alpha,beta,omega,phi,alpha_hat,beta_hat,omega_hat,phi_hat,voltage"
    assert len(lines) == 1 + 50


def test_elbow_of_collinear_front_is_middle():
    assert robustpo.elbow_index([(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]) == 1


def test_config_rejects_unknown_key():
    with pytest.raises(ValueError, match="optimizer.bogus"):
        robustpo.normalize_config('{"optimizer": {"bogus": 1}}')
    full = json.loads(robustpo.normalize_config("{}"))
    assert full["mode"] == "robust-gm"
    assert json.loads(robustpo.normalize_config(json.dumps(full))) == full
