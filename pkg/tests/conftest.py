import numpy as np
import pytest

from imrc import synth
from imrc.fields import DensityVolume
from imrc.observation import CameraModel, ImageBuffer


def identity_camera(width=101, height=101, f=100.0, cx=50.0, cy=50.0, image=None, origin=(0.0, 0.0, 0.0)):
    m = np.eye(4)
    m[:3, 3] = origin
    k = np.array([[f, 0, cx], [0, f, cy], [0, 0, 1.0]])
    return CameraModel(width, height, k, m, image)


def constant_volume(value, n=8, lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)):
    return DensityVolume((n, n, n), lo, hi, np.full(n ** 3, value, np.float32))


def solid_image(w, h, color):
    return ImageBuffer(w, h, np.broadcast_to(np.asarray(color, dtype=np.float64), (h, w, 3)).copy())


@pytest.fixture(scope="session")
def small_textured():
    """Textured sphere at 32^3 with 12 hemisphere cameras (64 px)."""
    scene = synth.make_scene("textured-sphere", 32)
    vol = synth.bake_volume(scene, 32)
    cams = synth.attach_images(scene, synth.camera_rig("hemisphere", 12, 3.0, width=64, height=64),
                               scene.ramp / 2)
    return scene, vol, cams


@pytest.fixture(scope="session")
def small_lambertian():
    """Constant-color sphere at 32^3 with a 12-camera equatorial ring (64 px)."""
    scene = synth.make_scene("lambertian-sphere", 32)
    vol = synth.bake_volume(scene, 32)
    cams = synth.attach_images(scene, synth.camera_rig("sphere_ring", 12, 3.0, width=64, height=64),
                               scene.ramp / 2)
    return scene, vol, cams
