"""Monte Carlo renderer contracts: determinism, error scaling, clipping."""

from dataclasses import replace

import numba
import numpy as np
import pytest

from lensalign.optics import EmitterGeometry, apply_pose
from lensalign.patterns import uniform
from lensalign.render import RenderParams, SensorImage, render, trace_backward
from lensalign.optics import Ray

from conftest import shrink_app


@pytest.fixture(scope="module")
def tiny_system(default_app):
    app = shrink_app(default_app, pixels=32)
    return app.system


class TestRenderBasics:
    def test_uniform_emitter_positivity(self, tiny_system):
        # unobstructed geometry (wide-open stop, oversized emitter): every
        # pixel whose center chief ray reaches the emitter must be lit
        system = replace(
            tiny_system,
            stop=replace(tiny_system.stop, semi_diameter=1.35),
            emitter=EmitterGeometry(400.0, 300.0, 300.0, uniform(32, 1.0).data),
        )
        img = render(system, RenderParams(samples_per_pixel=32, seed=3))
        from lensalign.optics import rear_aperture_disk

        disk_c, _, _ = rear_aperture_disk(system)
        s = system.sensor
        lit, val = [], []
        for iy in range(s.pixels_y):
            for ix in range(s.pixels_x):
                px = -s.width_mm / 2 + (ix + 0.5) * s.width_mm / s.pixels_x
                py = s.height_mm / 2 - (iy + 0.5) * s.height_mm / s.pixels_y
                d = disk_c - np.array([px, py, s.z_mm])
                d /= np.linalg.norm(d)
                if trace_backward(Ray(np.array([px, py, s.z_mm]), d), system) is not None:
                    lit.append((iy, ix))
        assert lit, "chief rays should reach the emitter somewhere"
        for iy, ix in lit:
            assert img.data[iy, ix] > 0.0

    def test_bit_identical_for_equal_inputs(self, tiny_system):
        a = render(tiny_system, RenderParams(16, 1234))
        b = render(tiny_system, RenderParams(16, 1234))
        assert np.array_equal(a.data, b.data)

    def test_seed_changes_image(self, tiny_system):
        a = render(tiny_system, RenderParams(16, 1))
        b = render(tiny_system, RenderParams(16, 2))
        assert not np.array_equal(a.data, b.data)

    def test_thread_count_does_not_change_output(self, tiny_system):
        before = numba.get_num_threads()
        try:
            numba.set_num_threads(1)
            a = render(tiny_system, RenderParams(16, 77))
            numba.set_num_threads(max(2, before))
            b = render(tiny_system, RenderParams(16, 77))
        finally:
            numba.set_num_threads(before)
        assert np.array_equal(a.data, b.data)

    def test_rejects_zero_size_sensor(self, tiny_system):
        broken = replace(tiny_system, sensor=replace(tiny_system.sensor, pixels_x=0))
        with pytest.raises(ValueError):
            render(broken, RenderParams(4, 0))

    def test_rejects_empty_bitmap(self, tiny_system):
        with pytest.raises(ValueError):
            EmitterGeometry(400.0, 100.0, 100.0, np.zeros((0, 0)))

    def test_image_invariants(self, tiny_system):
        img = render(tiny_system, RenderParams(8, 5))
        assert img.data.shape == (img.height, img.width)
        assert np.all(img.data >= 0)
        with pytest.raises(ValueError):
            SensorImage(width=2, height=2, data=np.array([[-1.0, 0.0], [0.0, 0.0]]))


class TestMonteCarloScaling:
    def test_per_pixel_std_scales_with_sqrt_spp(self, tiny_system):
        # 100 re-renders per spp; std ratio between spp and 4*spp near 2
        seeds = range(100)
        stacks = {
            spp: np.stack([render(tiny_system, RenderParams(spp, s)).data for s in seeds])
            for spp in (16, 64)
        }
        std16 = stacks[16].std(axis=0)
        std64 = stacks[64].std(axis=0)
        mask = std64 > 1e-6
        assert mask.sum() > 50
        ratio = np.mean(std16[mask] / std64[mask])
        assert 2.0 / 1.5 <= ratio <= 2.0 * 1.5

    def test_mean_abs_difference_decreases_with_spp(self, tiny_system):
        # render-vs-4x-spp gap shrinks monotonically, averaged over 20 seeds
        gaps = []
        for spp in (16, 64, 256):
            diffs = [
                np.mean(
                    np.abs(
                        render(tiny_system, RenderParams(spp, 1000 + s)).data
                        - render(tiny_system, RenderParams(4 * spp, 2000 + s)).data
                    )
                )
                for s in range(20)
            ]
            gaps.append(np.mean(diffs))
        assert gaps[0] > gaps[1] > gaps[2]


class TestApertureMonotonicity:
    def test_shrinking_stop_never_brightens_pixels(self, tiny_system):
        semis = (0.61, 0.45, 0.3, 0.15)
        images = []
        for semi in semis:
            system = replace(tiny_system, stop=replace(tiny_system.stop, semi_diameter=semi))
            images.append(render(system, RenderParams(16, 99)).data)
        for wide, narrow in zip(images, images[1:]):
            assert np.all(narrow <= wide + 1e-15)


class TestDeterminismUnderPose:
    def test_pose_and_render_pure_function(self, tiny_system):
        moved = apply_pose(tiny_system, [0.05, -0.03, 0.1, 0.3, -0.2, 0.0])
        a = render(moved, RenderParams(16, 5))
        b = render(apply_pose(tiny_system, [0.05, -0.03, 0.1, 0.3, -0.2, 0.0]), RenderParams(16, 5))
        assert np.array_equal(a.data, b.data)
