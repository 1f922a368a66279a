import math

import numpy as np
import pytest

import dgrecon


@pytest.fixture(scope="module")
def sphere():
    return dgrecon.make_scene("sphere", 3)


def test_scene_rendering(sphere):
    assert sphere.key == "sphere:3"
    assert len(sphere.cameras) == 24
    depth = sphere.gt_depths[0]
    K = sphere.cameras[0].K
    assert depth.shape == (K.height, K.width)
    assert depth.dtype == np.float32
    assert (depth > 0).any()
    assert not np.array_equal(sphere.depths[0], depth)


def test_sdf_values(sphere):
    assert sphere.sdf([0.0, 0.0, 0.3]) == -1.0
    assert sphere.sdf([0.0, 0.0, 0.55]) == pytest.approx(0.0, abs=1e-12)


def test_fuse_and_mesh(sphere):
    vol = dgrecon.fuse_depths(sphere.gt_depths, sphere.cameras, sphere.region, sphere.tau)
    assert vol.values.shape == tuple(sphere.region.dims)
    assert vol.weights.max() > 0
    v, f = dgrecon.marching_cubes(vol, skip_unobserved=True)
    assert v.shape[1] == 3 and f.shape[1] == 3
    radii = np.linalg.norm(v - np.array([0.0, 0.0, 0.3]), axis=1)
    assert abs(radii.mean() - 0.25) < 0.01

    gv, gf = sphere.gt_mesh()
    m = dgrecon.metrics_3d(v, f, gv, gf)
    assert m["f1"] > 95.0
    assert m["chamfer_cm"] == pytest.approx((m["acc_cm"] + m["comp_cm"]) / 2)
    self_m = dgrecon.metrics_3d(gv, gf, gv, gf)
    assert self_m["chamfer_cm"] == 0.0 and self_m["f1"] == 100.0


def test_render_plane():
    K = dgrecon.Intrinsics(20, 20, 7.5, 5.5, 16, 12)
    v = np.array([[-5, -5, 2], [5, -5, 2], [5, 5, 2], [-5, 5, 2]], dtype=float)
    f = np.array([[0, 1, 2], [0, 2, 3]])
    pose = dgrecon.Pose(np.eye(4))
    depth = dgrecon.render_depth(v, f, K, pose)
    assert np.all(depth == 2.0)
    m = dgrecon.metrics_2d([depth * 1.04], [depth])
    assert m["delta_105"] == 100.0
    assert m["absrel"] == pytest.approx(0.04, abs=1e-6)


def test_bad_inputs():
    with pytest.raises(ValueError):
        dgrecon.make_scene("castle")
    with pytest.raises(ValueError):
        dgrecon.render_depth(np.zeros((3, 3)), np.array([[0, 1, 5]]),
                             dgrecon.Intrinsics(1, 1, 0, 0, 2, 2), dgrecon.Pose(np.eye(4)))


def test_train_and_reconstruct(tmp_path, sphere):
    model = dgrecon.train(["sphere:1"], {"epochs": 1, "chunks_per_scene": 3, "points_per_step": 256})
    assert model.parameter_count > 0
    path = tmp_path / "m.ckpt"
    model.save(path)
    loaded = dgrecon.load_model(path)
    vol_a, info_a = dgrecon.reconstruct(model, sphere, spacing=0.02, occupancy_filter=False)
    vol_b, info_b = dgrecon.reconstruct(loaded, sphere, spacing=0.02, occupancy_filter=True)
    assert info_a["evaluations"] == info_a["cells"]
    assert info_b["evaluations"] <= info_a["evaluations"]
    assert vol_a.values.shape == vol_b.values.shape
    assert math.isfinite(info_a["per_frame_ms"])
