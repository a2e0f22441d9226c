import json
import math

import numpy as np
import pytest

import swimsim as ss


@pytest.fixture(scope="module")
def coarse_mesh():
    return ss.generate_mesh(ss.ProfileParams(), 0.01, 1.0)


def test_bending_angle_examples():
    assert ss.bending_angle([0, 0], [1, 0], [2, 0]) == 0.0
    assert ss.bending_angle([0, 0], [1, 0], [1, 1]) == pytest.approx(1.0, abs=1e-15)
    assert ss.bending_angle([0, 0], [2, 0], [3, -1]) == pytest.approx(-1 / math.sqrt(2), abs=1e-15)


def test_error_types():
    with pytest.raises(ss.InputError):
        ss.bending_angle([0, 0], [0, 0], [1, 0])
    with pytest.raises(ValueError):
        ss.profile_halfwidth(1.5, ss.ProfileParams())


def test_mesh_arrays(coarse_mesh):
    m = coarse_mesh
    assert m.vertices.shape == (m.num_vertices, 2)
    assert m.triangles.shape == (m.num_triangles, 3)
    assert len(m.regions) == m.num_triangles
    assert np.all(m.rest_area > 0)
    assert set(m.regions) == {"spine", "upper_muscle", "lower_muscle", "soft"}
    assert abs(ss.mesh_area(m) - ss.domain_area(ss.ProfileParams())) < 0.05 * ss.domain_area(ss.ProfileParams())
    again = ss.mesh_from_text(m.to_text())
    assert np.array_equal(again.vertices, m.vertices)


def test_activation_range_and_derivatives():
    p = ss.ActuationParams()
    p.amplitude, p.slope, p.frequency = 0.2, 6.0, 1.5
    for t in np.linspace(0.0, 2.0, 41):
        a, da, ds = ss.activation_signal(t, p, "lower")
        assert 1 - p.amplitude - 1e-12 <= a <= 1 + 1e-12
    a, da, _ = ss.activation_signal(0.3, p, "upper", 1e-3)
    h = 1e-6
    p.amplitude += h
    a2, _, _ = ss.activation_signal(0.3, p, "upper", 1e-3)
    assert (a2 - a) / h == pytest.approx(da, abs=1e-6)


def test_zero_amplitude_stays_straight(coarse_mesh):
    act = ss.ActuationParams()
    act.frequency = 2.0
    traj = ss.simulate(coarse_mesh, ss.SimConfig(), act, 0.2)
    assert traj["q"].shape == (21, 2 * coarse_mesh.num_vertices)
    assert np.allclose(traj["q"], traj["q"][0], atol=1e-10)


def test_gradient_matches_finite_differences(coarse_mesh):
    truth = ss.ActuationParams()
    truth.amplitude, truth.slope, truth.frequency = 0.15, 8.0, 2.0
    ds = ss.synthesize_dataset("x", coarse_mesh, ss.SimConfig(), truth, 4500.0)
    keep = [i for i, t in enumerate(ds.trace.timestamps) if t <= 0.3]
    target = ss.AngleTrace([ds.trace.timestamps[i] for i in keep], [ds.trace.sin_theta[i] for i in keep])
    guess = ss.ActuationParams()
    guess.amplitude, guess.slope, guess.frequency = 0.1, 6.0, 2.0
    chk = ss.check_gradient(coarse_mesh, ss.SimConfig(), guess, target)
    assert chk["amplitude"]["relative_error"] < 1e-4
    assert chk["slope"]["relative_error"] < 1e-4


def test_identify_small_problem(coarse_mesh):
    cfg = ss.SimConfig()
    truth = ss.ActuationParams()
    truth.amplitude, truth.slope, truth.frequency = 0.12, 8.0, 3.5
    data = [ss.synthesize_dataset("a", coarse_mesh, cfg, truth, 4000.0)]
    opt = ss.OptimizerConfig()
    opt.max_iterations = 5
    fit = ss.identify(data, coarse_mesh, cfg, ss.ActuationParams(), opt)
    assert fit.iterations == 5
    assert len(fit.loss_history) == 5
    assert fit.best_loss <= fit.loss_history[0]
    doc = json.loads(fit.to_json("abc"))
    assert doc["config_hash"] == "abc"
    report = ss.validate(fit, data, coarse_mesh, cfg, ss.ActuationParams())
    assert report.per_dataset[0].mae == fit.per_dataset_mae[0].mae
