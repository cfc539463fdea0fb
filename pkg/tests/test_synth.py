import numpy as np
import pytest

from imrc import synth
from imrc.core import DegenerateResultError
from imrc.fields import sample_density
from imrc.observation import project
from imrc.sh import sh_basis_matrix


def test_bake_empty_scene():
    vol = synth.bake_volume(synth.make_scene("empty", 16), 16)
    assert vol.resolution == (16, 16, 16)
    assert np.all(vol.data == 0)


def test_bake_requires_resolution_16():
    with pytest.raises(ValueError):
        synth.bake_volume(synth.make_scene("lambertian-sphere", 16), 15)


def test_hollow_shell_band():
    scene = synth.make_scene("lambertian-sphere", 48, hollow=True)
    vol = synth.bake_volume(scene, 48)
    r = np.linalg.norm(vol.vertex_positions() - scene.center, axis=1)
    nz = vol.data > 0
    assert nz.any()
    assert np.all(np.abs(r[nz] - scene.size[0]) <= scene.ramp + 1e-9)


def test_solid_sphere_profile():
    scene = synth.make_scene("lambertian-sphere", 32)
    vol = synth.bake_volume(scene, 32)
    r = np.linalg.norm(vol.vertex_positions(), axis=1)
    inner = r < scene.size[0] - scene.ramp / 2
    outer = r > scene.size[0] + scene.ramp / 2
    np.testing.assert_allclose(vol.data[inner], scene.sigma_max, rtol=1e-6)
    assert np.all(vol.data[outer] == 0)


def test_bake_then_resample_at_vertices():
    scene = synth.make_scene("textured-cube", 24)
    vol = synth.bake_volume(scene, 24)
    pos = vol.vertex_positions()
    idx = np.random.default_rng(0).choice(vol.n_vertices, 300, replace=False)
    for i in idx:
        assert sample_density(vol, pos[i]) == float(vol.data[i])


def _rays(cam):
    from imrc.metric import pixel_rays

    d, _ = pixel_rays(cam)
    return d


def test_render_empty_scene_is_black():
    scene = synth.make_scene("empty", 32)
    imgs = synth.render_views(scene, synth.camera_rig("sphere_ring", 3, 3.0, width=16, height=16), 0.01)
    assert all(np.all(im.pixels == 0) for im in imgs)


def test_render_lambertian_foreground_and_silhouette():
    scene = synth.make_scene("lambertian-sphere", 128)
    color = np.array([204, 102, 51]) / 255
    cams = synth.camera_rig("hemisphere", 3, 3.0, width=96, height=96)
    imgs = synth.render_views(scene, cams, scene.ramp / 2)
    R = scene.size[0]
    for cam, img in zip(cams, imgs):
        d = _rays(cam)
        o = cam.origin - scene.center
        tca = -(d @ o)
        dist = np.sqrt(np.maximum(np.dot(o, o) - tca ** 2, 0)).reshape(img.height, img.width)
        px = img.pixels
        deep = dist < R - 2 * scene.ramp
        np.testing.assert_allclose(px[deep], np.broadcast_to(color, px[deep].shape), atol=1e-12)
        # silhouette: rendered half-coverage mask vs the analytic projected disc
        rendered = px[..., 0] > color[0] / 2
        analytic = dist < R
        wrong = rendered != analytic
        px_size = np.linalg.norm(o) / cam.intrinsics[0, 0]
        assert np.all(np.abs(dist[wrong] - R) <= px_size)


def test_render_rejects_bad_step():
    with pytest.raises(ValueError):
        synth.render_views(synth.make_scene("empty", 16), synth.camera_rig("sphere_ring", 2, 3.0), 0.0)


@pytest.fixture(scope="module")
def sphere_vol():
    return synth.bake_volume(synth.make_scene("textured-sphere", 32), 32)


def test_dilate_then_erode(sphere_vol):
    dil = synth.apply_perturbation(sphere_vol, synth.Perturbation("dilate", 2))
    back = synth.apply_perturbation(dil, synth.Perturbation("erode", 2))
    assert np.all(dil.data >= sphere_vol.data)
    assert np.all(back.data >= 0) and np.all(dil.data >= 0)
    # closing of a convex solid gives back the original up to a thin band
    changed = np.count_nonzero(back.data != sphere_vol.data)
    assert changed <= 0.01 * np.count_nonzero(sphere_vol.data)


def test_erode_shrinks_and_can_annihilate(sphere_vol):
    er = synth.apply_perturbation(sphere_vol, synth.Perturbation("erode", 2))
    assert np.all(er.data <= sphere_vol.data)
    assert np.count_nonzero(er.data) < np.count_nonzero(sphere_vol.data)
    with pytest.raises(DegenerateResultError):
        synth.apply_perturbation(sphere_vol, synth.Perturbation("erode", 20))


def test_translate_composes(sphere_vol):
    one = synth.Perturbation("translate", 1)
    twice = synth.apply_perturbation(synth.apply_perturbation(sphere_vol, one), one)
    two = synth.apply_perturbation(sphere_vol, synth.Perturbation("translate", 2))
    np.testing.assert_array_equal(twice.data, two.data)
    np.testing.assert_array_equal(two.to_array()[2:], sphere_vol.to_array()[:-2])
    assert np.all(two.to_array()[:2] == 0)


def test_floaters_deterministic_and_in_empty_space():
    scene = synth.make_scene("textured-sphere", 64)
    vol = synth.bake_volume(scene, 64)
    p = synth.Perturbation.parse("floaters-5", seed=11)
    a = synth.apply_perturbation(vol, p)
    b = synth.apply_perturbation(vol, p)
    np.testing.assert_array_equal(a.data, b.data)
    c = synth.apply_perturbation(vol, synth.Perturbation.parse("floaters-5", seed=12))
    assert not np.array_equal(a.data, c.data)
    centers = synth.floater_positions(vol, p)
    assert len(centers) == 5
    added = (a.data - vol.data) > 0
    assert np.all(vol.data[added] == 0)
    # analytic distance from the blob centers to the sphere surface, in voxels
    gap = (np.linalg.norm(centers, axis=1) - scene.size[0]) / vol.spacing[0]
    assert np.all(gap - 3 * p.magnitude >= 3)


def test_perturbation_parse_and_validation():
    assert synth.Perturbation.parse("dilate-2") == synth.Perturbation("dilate", 2.0)
    assert synth.Perturbation.parse("floaters-5").count == 5
    assert synth.Perturbation.parse("translate-2").name == "translate-2"
    with pytest.raises(ValueError):
        synth.Perturbation("shear", 1)
    with pytest.raises(ValueError):
        synth.Perturbation("dilate", 0)


def test_ring_rig_spacing():
    cams = synth.camera_rig("sphere_ring", 4, 2.0)
    o = np.array([c.origin for c in cams])
    ang = np.degrees(np.arctan2(o[:, 1], o[:, 0]))
    np.testing.assert_allclose(np.diff(ang) % 360, 90.0)
    np.testing.assert_allclose(np.linalg.norm(o, axis=1), 2.0)


@pytest.mark.parametrize("kind", ["sphere_ring", "hemisphere"])
def test_rigs_see_look_at(kind):
    target = (0.1, -0.2, 0.3)
    cams = synth.camera_rig(kind, 9, 3.0, look_at=target, width=40, height=30)
    for c in cams:
        np.testing.assert_allclose(project(c, target), (19.5, 14.5), atol=1e-9)
        np.testing.assert_array_equal(c.intrinsics, cams[0].intrinsics)
    if kind == "hemisphere":
        assert all(c.origin[2] - target[2] >= 0 for c in cams)


def test_rig_errors():
    with pytest.raises(ValueError):
        synth.camera_rig("sphere_ring", 1, 3.0)
    with pytest.raises(ValueError):
        synth.camera_rig("cone", 4, 3.0)


@pytest.mark.parametrize("kind", ["lambertian-sphere", "textured-sphere", "glossy-sphere", "textured-cube"])
def test_scene_colors_in_range(kind):
    scene = synth.make_scene(kind, 32)
    rng = np.random.default_rng(0)
    pts = scene.sample_surface(2000, seed=1)
    d = rng.normal(size=(2000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    col = scene.color_fn(pts, d)
    assert np.all(col >= 0) and np.all(col <= 1)


def test_scene_color_is_band_limited():
    # the glossy sphere's color at a fixed point is an exact degree-2 expansion
    scene = synth.make_scene("glossy-sphere", 32)
    p = scene.sample_surface(1, seed=3)
    d = np.random.default_rng(4).normal(size=(200, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    col = scene.color_fn(np.repeat(p, 200, axis=0), d)
    y = sh_basis_matrix(d, 2)
    coef, *_ = np.linalg.lstsq(y, col, rcond=None)
    np.testing.assert_allclose(y @ coef, col, atol=1e-12)
    assert np.ptp(col, axis=0).max() > 0.05


def test_invalid_tone_coefficients_rejected():
    scene = synth.make_scene("lambertian-sphere", 32)
    bad = scene.tone_coeffs.copy()
    bad[0, 1] = 3.0
    from dataclasses import replace

    with pytest.raises(ValueError):
        replace(scene, tone_coeffs=bad)


def test_surface_samples_lie_on_surfaces():
    sphere = synth.make_scene("textured-sphere", 32)
    pts = sphere.sample_surface(500)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), sphere.size[0])
    cube = synth.make_scene("textured-cube", 32)
    local = cube.sample_surface(500) @ cube.rotation.T
    assert np.allclose(np.max(np.abs(local) / cube.size, axis=1), 1.0)
    np.testing.assert_allclose(cube.nearest_surface(cube.sample_surface(50)), cube.sample_surface(50), atol=1e-12)
