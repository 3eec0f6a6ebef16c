import numpy as np
import pytest

from binpick.core import Point3, RigidTransform
from binpick.errors import InputError
from binpick.fusion import estimate_homography
from binpick.pose import euler_zyx_to_rotation
from binpick.core import EulerZYX
from binpick.synth import (
    BoxSpec,
    SceneSpec,
    add_depth_noise,
    depth_camera,
    ground_truth,
    render_depth,
    render_image,
    scene_from_dict,
    scene_homography,
    visibility_accounting,
)


def make_box(dims_mm, pos_mm, rot_zyx_deg=(0, 0, 0), intensity=200):
    rot = euler_zyx_to_rotation(EulerZYX(*map(float, rot_zyx_deg)))
    return BoxSpec(dimensions_mm=tuple(dims_mm),
                   pose=RigidTransform(rot, Point3(*(v / 1000.0 for v in pos_mm))),
                   face_intensity=intensity)


def simple_scene(boxes=(), **kw):
    defaults = dict(rgb_resolution=(448, 344))
    defaults.update(kw)
    return SceneSpec(boxes=tuple(boxes), **defaults)


class TestRenderDepth:
    def test_empty_bin_floor_depth_equals_mount_height(self):
        cloud = render_depth(simple_scene())
        assert cloud.width == 224 and cloud.height == 172
        z = cloud.points[..., 2][cloud.valid]
        assert len(z) > 0
        assert np.abs(z - 1.2).max() < 1e-9

    def test_margin_ring_is_invalid(self):
        cloud = render_depth(simple_scene())
        assert not cloud.valid.all()
        assert not cloud.valid[0, 0]  # corner ray passes the 10% margin

    def test_centered_box_is_height_closer(self):
        scene = simple_scene([make_box((100, 100, 100), (0, 0, 50))])
        cloud = render_depth(scene)
        cy, cx = cloud.height // 2, cloud.width // 2
        center_z = cloud.points[cy, cx, 2]
        assert center_z == pytest.approx(1.1, abs=1e-9)

    def test_occluded_box_has_no_top_hits(self):
        lower = make_box((100, 100, 50), (0, 0, 25))
        upper = make_box((200, 200, 20), (0, 0, 150))
        scene = simple_scene([lower, upper])
        truth = ground_truth(scene)
        assert truth[0].visibility == 0.0
        assert truth[1].visibility == pytest.approx(1.0)

    def test_noiseless_points_lie_on_truth_plane(self):
        scene = simple_scene([make_box((120, 90, 60), (30, -20, 30),
                                       rot_zyx_deg=(20, 0, 0))])
        cloud = render_depth(scene)
        truth = ground_truth(scene)[0]
        n = truth.normal
        d = -float(n @ (truth.centroid_mm / 1000.0))
        pts = cloud.valid_points()
        dists = pts @ n + d
        on_plane = np.abs(dists) < 1e-9
        assert on_plane.sum() > 200  # the visible top face

    def test_visibility_accounting_sums_to_grid(self):
        scene = simple_scene([make_box((100, 100, 50), (-80, 40, 25)),
                              make_box((80, 120, 40), (60, -60, 20))])
        acct = visibility_accounting(scene)
        assert sum(acct["box_pixels"]) + acct["bin_pixels"] + acct["invalid_pixels"] \
            == acct["total"] == 224 * 172


class TestRenderImage:
    def test_empty_bin_uniform_floor(self):
        img = render_image(simple_scene())
        assert (img.pixels == 60).all()

    def test_single_box_hard_edges(self):
        scene = simple_scene([make_box((150, 150, 50), (0, 0, 25), intensity=220)])
        img = render_image(scene)
        values = set(np.unique(img.pixels).tolist())
        assert values == {60, 220}
        # the face projects to a centered square; edges are hard steps
        face = img.pixels == 220
        ys, xs = np.nonzero(face)
        w, h = img.width, img.height
        assert abs((xs.min() + xs.max()) / 2 - (w - 1) / 2) < 1.0
        assert abs((ys.min() + ys.max()) / 2 - (h - 1) / 2) < 1.0

    def test_adjacent_boxes_share_internal_edge(self):
        scene = simple_scene([
            make_box((100, 100, 50), (-50, 0, 25), intensity=180),
            make_box((100, 100, 50), (50, 0, 25), intensity=220),
        ])
        img = render_image(scene)
        values = set(np.unique(img.pixels).tolist())
        assert values == {60, 180, 220}
        row = img.pixels[img.height // 2]
        left = np.nonzero(row == 180)[0]
        right = np.nonzero(row == 220)[0]
        assert left.max() + 1 == right.min()  # touching along the shared boundary


class TestDepthNoise:
    def test_zero_sigma_identity(self):
        cloud = render_depth(simple_scene())
        noisy = add_depth_noise(cloud, 0.0, seed=1)
        assert np.array_equal(noisy.points, cloud.points)

    def test_noise_statistics_along_ray(self):
        scene = simple_scene()
        cloud = render_depth(scene)
        noisy = add_depth_noise(cloud, 0.002, seed=2)
        delta = noisy.points[cloud.valid] - cloud.points[cloud.valid]
        displacement = np.linalg.norm(delta, axis=1)
        assert displacement.std() > 0
        signed = np.sign(delta[:, 2]) * displacement
        std = signed.std()
        assert abs(std - 0.002) < 0.0002
        rays = cloud.points[cloud.valid]
        rays = rays / np.linalg.norm(rays, axis=1, keepdims=True)
        cross = np.linalg.norm(np.cross(delta, rays), axis=1)
        assert cross.max() < 1e-12  # displacement is purely along the ray

    def test_seed_determinism(self):
        cloud = render_depth(simple_scene())
        a = add_depth_noise(cloud, 0.002, seed=3)
        b = add_depth_noise(cloud, 0.002, seed=3)
        assert np.array_equal(a.points, b.points)
        c = add_depth_noise(cloud, 0.002, seed=4)
        assert not np.array_equal(a.points, c.points)


class TestGroundTruth:
    def test_axis_aligned_box(self):
        scene = simple_scene([make_box((100, 80, 60), (20, -30, 30))])
        truth = ground_truth(scene)[0]
        # world (20, -30, 60) mm maps to sensor (20, +30, 1140) mm
        assert truth.centroid_mm == pytest.approx([20, 30, 1140], abs=1e-9)
        assert truth.euler.as_tuple() == pytest.approx((0, 0, 0), abs=1e-9)
        assert truth.priority == "parent"
        assert truth.normal == pytest.approx([0, 0, -1], abs=1e-12)

    def test_tilted_box_euler_pm45(self):
        scene = simple_scene([make_box((100, 100, 40), (0, 0, 120),
                                       rot_zyx_deg=(0, 0, 45))])
        truth = ground_truth(scene)[0]
        assert abs(abs(truth.euler.theta3) - 45) < 1e-9
        assert abs(truth.euler.theta2) < 1e-9

    def test_stacked_small_box_is_child(self):
        big = make_box((200, 200, 60), (0, 0, 30), intensity=180)
        small = make_box((80, 80, 40), (0, 0, 80), intensity=230)
        truth = ground_truth(simple_scene([big, small]))
        assert truth[0].priority == "parent"
        assert truth[1].priority == "child"

    def test_homography_closes_fusion_loop(self):
        scene = simple_scene()
        h_true = scene_homography(scene)
        rng = np.random.default_rng(5)
        src = rng.uniform(0, 448, size=(8, 2))
        dst = h_true.map_points(src)
        est = estimate_homography(src, dst)
        assert np.abs(est.h - h_true.h).max() / np.abs(h_true.h).max() < 1e-6

    def test_depth_camera_frames_bin_with_margin(self):
        scene = simple_scene()
        cam = depth_camera(scene)
        # the bin's long side spans the image width inside the 10% margin
        half_width_m = 0.5 * 0.6 * 1.1
        u_edge = cam.fx * half_width_m / 1.2 + cam.cx
        assert u_edge == pytest.approx(cam.width - 0.5, abs=1e-9)


class TestSceneValidation:
    def test_box_outside_bin_rejected(self):
        with pytest.raises(ValueError):
            simple_scene([make_box((100, 100, 50), (400, 0, 25))])

    def test_undersize_box_rejected_without_override(self):
        with pytest.raises(ValueError):
            make_box((10, 10, 5), (0, 0, 2.5))
        BoxSpec(dimensions_mm=(10, 10, 5),
                pose=RigidTransform(np.eye(3), Point3(0, 0, 0.0025)),
                allow_undersize=True)

    def test_scene_from_dict_roundtrip(self):
        scene = scene_from_dict({
            "bin_size_mm": [600, 400],
            "rgb_resolution": [448, 344],
            "noise_sigma_m": 0.002,
            "seed": 9,
            "boxes": [{"dimensions_mm": [100, 100, 50],
                       "position_mm": [0, 0, 25],
                       "rotation_zyx_deg": [0, 0, 0],
                       "face_intensity": 210}],
        })
        assert scene.noise_sigma_m == 0.002
        assert scene.boxes[0].face_intensity == 210

    def test_unknown_keys_rejected(self):
        with pytest.raises(InputError):
            scene_from_dict({"bogus": 1})
        with pytest.raises(InputError):
            scene_from_dict({"boxes": [{"dimensions_mm": [100, 100, 50],
                                        "position_mm": [0, 0, 25],
                                        "paint": "red"}]})
