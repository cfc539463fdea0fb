import math

import numpy as np
import pytest

from imrc.core import EvalConfig
from imrc.fields import (DensityVolume, Ray, march_arrays, march_ray, ray_through_bbox, sample_density,
                         transmittance_to_camera)
from tests.conftest import constant_volume


def slab_volume(sigma=5.0, n=32, k0=10, k1=19):
    """Density ``sigma`` on vertex layers ``k0..k1`` along z, zero elsewhere."""
    g = np.zeros((n, n, n), np.float32)
    g[:, :, k0:k1 + 1] = sigma
    return DensityVolume.from_array(g, (0, 0, 0), (1, 1, 1))


def slab_optical_depth(vol, sigma, k0, k1, cos_theta):
    # trilinear slab: flat top over (k1-k0) cells plus two one-cell linear ramps
    return sigma * (k1 - k0 + 1) * vol.spacing[2] / cos_theta


def test_volume_validation():
    with pytest.raises(ValueError):
        DensityVolume((2, 2, 2), (0, 0, 0), (1, 1, 1), np.full(8, -1.0))
    with pytest.raises(ValueError):
        DensityVolume((2, 2, 2), (0, 0, 0), (1, 1, 1), np.zeros(7))
    with pytest.raises(ValueError):
        DensityVolume((2, 2, 2), (1, 0, 0), (1, 1, 1), np.zeros(8))
    with pytest.raises(ValueError):
        DensityVolume((2, 2, 2), (0, 0, 0), (1, 1, 1), [0, 0, 0, 0, 0, 0, 0, np.inf])


def test_from_array_uses_x_fastest_order():
    g = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    vol = DensityVolume.from_array(g, (0, 0, 0), (1, 1, 1))
    assert vol.data[1] == g[1, 0, 0]
    assert vol.data[2] == g[0, 1, 0]
    assert vol.data[6] == g[0, 0, 1]
    np.testing.assert_array_equal(vol.to_array(), g)
    pos = vol.vertex_positions()
    np.testing.assert_allclose(pos[7], vol.vertex_position((1, 0, 1)))


def test_sample_density_examples():
    vol = constant_volume(1.0)
    assert sample_density(vol, (0.31, 0.52, 0.77)) == pytest.approx(1.0, abs=1e-12)
    rng = np.random.default_rng(3)
    g = rng.uniform(0, 5, size=(4, 4, 4)).astype(np.float32)
    vol = DensityVolume.from_array(g, (0, 0, 0), (3, 3, 3))
    assert sample_density(vol, (1, 2, 3)) == float(g[1, 2, 3])
    g = np.zeros((2, 2, 2), np.float32)
    g[1, 0, 0] = 2.0
    vol = DensityVolume.from_array(g, (0, 0, 0), (1, 1, 1))
    assert sample_density(vol, (0.5, 0, 0)) == pytest.approx(1.0)


def test_sample_density_is_zero_outside_bbox():
    vol = constant_volume(3.0)
    for p in [(-0.01, 0.5, 0.5), (0.5, 1.2, 0.5), (0.5, 0.5, 7.0)]:
        assert sample_density(vol, p) == 0.0


def test_transmittance_examples():
    assert transmittance_to_camera(constant_volume(0.0), (0.1, 0.1, 0.1), (0.9, 0.9, 0.9), 0.01) == 1.0
    # path of length 2 fully inside a constant field
    vol = constant_volume(1.0, n=8, lo=(-2, -2, -2), hi=(2, 2, 2))
    t = transmittance_to_camera(vol, (0, 0, -1), (0, 0, 1), 0.05)
    assert abs(t - math.exp(-2)) / math.exp(-2) < 0.01
    vol = constant_volume(10.0, n=8, lo=(-6, -6, -6), hi=(6, 6, 6))
    assert transmittance_to_camera(vol, (0, 0, -5), (0, 0, 5), 0.1) <= 1e-20


def test_transmittance_zero_length_and_bad_step():
    vol = constant_volume(4.0)
    assert transmittance_to_camera(vol, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5), 0.1) == 1.0
    with pytest.raises(ValueError):
        transmittance_to_camera(vol, (0.5, 0.5, 0.5), (0.9, 0.5, 0.5), 0.0)


def test_transmittance_truncates_at_bbox_exit():
    vol = constant_volume(1.0, n=8, lo=(0, 0, 0), hi=(1, 1, 1))
    near = transmittance_to_camera(vol, (0.5, 0.5, 0.5), (0.5, 0.5, 3.0), 0.01)
    far = transmittance_to_camera(vol, (0.5, 0.5, 0.5), (0.5, 0.5, 300.0), 0.01)
    assert near == pytest.approx(math.exp(-0.5), rel=1e-9)
    assert far == near


def test_transmittance_partial_last_interval():
    vol = constant_volume(1.0, n=8, lo=(-2, -2, -2), hi=(2, 2, 2))
    # 1.03 is not a multiple of 0.1; the remainder interval must use its true length
    t = transmittance_to_camera(vol, (0, 0, 0), (0, 0, 1.03), 0.1)
    assert t == pytest.approx(math.exp(-1.03), rel=1e-12)


def test_transmittance_monotone_in_density():
    rng = np.random.default_rng(0)
    g = rng.uniform(0, 3, (6, 6, 6)).astype(np.float32)
    lo = DensityVolume.from_array(g, (0, 0, 0), (1, 1, 1))
    hi = DensityVolume.from_array(g + rng.uniform(0, 1, g.shape).astype(np.float32), (0, 0, 0), (1, 1, 1))
    for _ in range(20):
        v, o = rng.uniform(0, 1, 3), rng.uniform(-1, 2, 3)
        a = transmittance_to_camera(lo, v, o, 0.02)
        b = transmittance_to_camera(hi, v, o, 0.02)
        assert 0.0 <= b <= a <= 1.0


def test_slab_transmittance_matches_closed_form_and_converges():
    sigma, k0, k1 = 5.0, 10, 19
    vol = slab_volume(sigma, 32, k0, k1)
    step = EvalConfig().resolve_step(vol)
    rng = np.random.default_rng(0)
    errs = {step: [], step / 2: []}
    for _ in range(100):
        th, ph = rng.uniform(0.05, 0.7), rng.uniform(0, 2 * np.pi)
        d = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        v = np.array([0.5, 0.5, rng.uniform(0.1, 0.25)])
        o = v + d * (0.9 - v[2]) / d[2]
        exact = math.exp(-slab_optical_depth(vol, sigma, k0, k1, d[2]))
        for s in errs:
            errs[s].append(abs(transmittance_to_camera(vol, v, o, s) - exact) / exact)
    assert max(errs[step]) < 0.01
    assert np.mean(errs[step / 2]) <= np.mean(errs[step]) / 2


def test_march_ray_empty_volume():
    vol = constant_volume(0.0)
    samples = march_ray(vol, Ray(np.zeros(3), np.array([1.0, 0, 0]), 0.0, 1.0), 0.1)
    assert len(samples) == 11
    assert samples[0].delta == 0.0 and samples[0].t == 0.0
    assert all(s.alpha == 0.0 and s.transmittance_before == 1.0 for s in samples)


def test_march_ray_inverted_bounds_is_empty():
    assert march_ray(constant_volume(1.0), Ray(np.zeros(3), np.array([1.0, 0, 0]), 0.5, 0.2), 0.1) == []


def test_march_ray_slab_transmittance_tracks_closed_form():
    sigma = 40.0
    vol = slab_volume(sigma, 32, 10, 19)
    h = vol.spacing[2]
    ray = Ray(np.array([0.5, 0.5, 0.0]), np.array([0.0, 0.0, 1.0]), 0.0, 1.0)
    a = march_arrays(vol, ray, h / 4)
    assert a["transmittance_before"][0] == 1.0
    # full crossing: optical depth sigma * 10 h
    assert a["transmittance_before"][-1] == pytest.approx(math.exp(-sigma * 10 * h), rel=1e-3)
    assert np.all(np.diff(a["transmittance_before"]) <= 0)

    def depth_inside(t):
        # exact integral of the trilinear slab profile from 0 to t
        z = np.clip(t / h, 0, None)
        up = np.clip(z - 9, 0, 1) ** 2 / 2
        flat = np.clip(z - 10, 0, 9)
        down = np.clip(z - 19, 0, 1)
        down = down - down ** 2 / 2
        return sigma * h * (up + flat + down)

    # left-sum quadrature error is bounded by one sample's optical depth
    tau_hat = -np.log(np.maximum(a["transmittance_before"], 1e-300))
    tau = depth_inside(a["t"])
    ok = tau < 30
    assert np.all(np.abs(tau_hat[ok] - tau[ok]) <= sigma * h / 4 + 1e-9)


def test_march_ray_weights_telescope():
    rng = np.random.default_rng(5)
    vol = DensityVolume.from_array(rng.uniform(0, 8, (9, 9, 9)).astype(np.float32), (0, 0, 0), (1, 1, 1))
    for _ in range(10):
        ray = ray_through_bbox(vol, rng.uniform(-1, 2, 3) * [1, 1, 0] - [0, 0, 1], rng.normal(size=3) + [0, 0, 3])
        if ray is None:
            continue
        a = march_arrays(vol, ray, 0.013)
        w = a["transmittance_before"] * a["alpha"]
        assert w.sum() <= 1.0 + 1e-12
        assert w.sum() == pytest.approx(1 - math.exp(-np.sum(a["sigma"] * a["delta"])), abs=1e-12)


def test_ray_through_bbox_miss():
    vol = constant_volume(1.0)
    assert ray_through_bbox(vol, (5, 5, 5), (1, 0, 0)) is None
    r = ray_through_bbox(vol, (0.5, 0.5, -1), (0, 0, 1))
    assert r.t_near == pytest.approx(1.0) and r.t_far == pytest.approx(2.0)
