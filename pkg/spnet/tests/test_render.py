# tests/test_render.py
import math

import numpy as np
import pytest
from PIL import Image
from pydantic import ValidationError

from spnet.exceptions import FormatError
from spnet.geometry import Rotation, TriangleMesh, normalize
from spnet.geometry.synth import box, icosphere, synth_shape, torus
from spnet.projection import (
    BVHCaster,
    BruteForceCaster,
    DepthImage,
    decode,
    encode,
    export_png,
    ray_cast,
    read_image,
    render,
    render_views,
    write_image,
)
from spnet.projection.codec import GRID_KIND, decode_grid, encode_grid
from spnet.state_management import CasterKind, HitPolicy, ProjectionKind


def random_directions(rng: np.random.Generator, count: int) -> np.ndarray:
    directions = rng.normal(size=(count, 3))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


class TestRayCast:
    """Test suite for ray / mesh intersection"""

    def setup_method(self):
        """Set up shared meshes"""
        self.sphere = icosphere(3)
        self.cube = normalize(box())

    def test_sphere_distance(self):
        """Test rays from the center of a unit icosphere travel about 1"""
        rng = np.random.default_rng(0)
        for direction in random_directions(rng, 50):
            assert ray_cast(self.sphere, direction) == pytest.approx(1.0, abs=5e-3)

    def test_cube_face(self):
        """Test the normalized cube face sits at 1/sqrt(3)"""
        assert ray_cast(self.cube, [1.0, 0.0, 0.0]) == pytest.approx(1.0 / math.sqrt(3.0), abs=1e-6)

    def test_miss_is_zero(self):
        """Test a ray that hits nothing reports 0"""
        mesh = TriangleMesh(vertices=[[0, 0, 0.5], [0.1, 0, 0.5], [0, 0.1, 0.5]], faces=[[0, 1, 2]])
        assert ray_cast(mesh, [0.0, 0.0, -1.0]) == 0.0

    def test_hit_policies(self):
        """Test farthest and nearest pick different layers of an open mesh"""
        mesh = TriangleMesh(
            vertices=[
                [0.3, -1, -1], [0.3, 1, -1], [0.3, 0, 1],
                [0.6, -1, -1], [0.6, 1, -1], [0.6, 0, 1],
            ],
            faces=[[0, 1, 2], [3, 4, 5]],
        )
        assert ray_cast(mesh, [1, 0, 0], HitPolicy.FARTHEST) == pytest.approx(0.6)
        assert ray_cast(mesh, [1, 0, 0], HitPolicy.NEAREST) == pytest.approx(0.3)

    def test_face_permutation_invariance(self):
        """Test reordering faces does not change any hit"""
        mesh = normalize(torus())
        permuted = mesh.with_faces(mesh.faces[np.random.default_rng(1).permutation(mesh.num_faces)])
        rng = np.random.default_rng(2)
        origins = np.zeros((200, 3))
        directions = random_directions(rng, 200)
        np.testing.assert_array_equal(
            BVHCaster(mesh).cast(origins, directions),
            BVHCaster(permuted).cast(origins, directions),
        )

    @pytest.mark.parametrize("policy", list(HitPolicy))
    def test_bvh_matches_brute_force(self, policy):
        """Test the BVH agrees with the exhaustive caster on 500 random rays"""
        mesh = normalize(torus(segments=24, rings=12))
        assert mesh.num_faces >= 500
        rng = np.random.default_rng(7)
        origins = random_directions(rng, 500) * rng.uniform(0.0, 1.0, size=(500, 1))
        directions = random_directions(rng, 500)
        brute = BruteForceCaster(mesh).cast(origins, directions, policy)
        bvh = BVHCaster(mesh, leaf_size=4).cast(origins, directions, policy)
        assert (brute > 0).any()
        np.testing.assert_allclose(bvh, brute, atol=1e-9)


class TestRender:
    """Test suite for depth image rendering"""

    def setup_method(self):
        """Set up a star-shaped test object"""
        self.mesh = normalize(synth_shape("box", np.random.default_rng(11), object_id="box_0000"))

    def test_sphere_uv_image(self):
        """Test a UV rendering of the unit sphere is 1 everywhere"""
        image = render(icosphere(3), ProjectionKind.UV, size=64)
        assert image.pixels.shape == (64, 64)
        assert image.pixels.dtype == np.float32
        np.testing.assert_allclose(image.pixels, 1.0, atol=5e-3)

    def test_kavrayskiy_background(self):
        """Test pixels outside the Kavrayskiy lobes stay 0"""
        image = render(icosphere(3), ProjectionKind.KAVRAYSKIY_VII, size=64)
        assert image.pixels[0, 0] == 0.0
        assert image.pixels[32, 32] == pytest.approx(1.0, abs=5e-3)

    def test_full_turn_equals_identity(self):
        """Test azimuth 2pi renders exactly like azimuth 0"""
        base = render(self.mesh, ProjectionKind.UV, size=32)
        turned = render(self.mesh, ProjectionKind.UV, Rotation(azimuth=2 * math.pi), size=32)
        np.testing.assert_array_equal(base.pixels, turned.pixels)

    def test_azimuth_shifts_uv_columns(self):
        """Test a 45 degree azimuth rotation shifts the UV image by 16 of 128 columns"""
        base = render(self.mesh, ProjectionKind.UV, size=128)
        turned = render(self.mesh, ProjectionKind.UV, Rotation.from_degrees(azimuth=45), size=128)
        np.testing.assert_allclose(turned.pixels, np.roll(base.pixels, -16, axis=1), atol=1e-6)

    def test_mirror_flips_uv_rows(self):
        """Test mirroring the object through z = 0 flips the UV image vertically"""
        mirrored = self.mesh.with_vertices(self.mesh.vertices * np.array([1.0, 1.0, -1.0]))
        base = render(self.mesh, ProjectionKind.UV, size=64)
        flipped = render(mirrored, ProjectionKind.UV, size=64)
        np.testing.assert_allclose(flipped.pixels, np.flipud(base.pixels), atol=1e-6)

    def test_depth_map_baseline(self):
        """Test the orthographic baseline records the first cube face"""
        image = render(normalize(box()), ProjectionKind.DEPTH_MAP_YZ, size=64)
        expected = 1.0 - (1.0 - 1.0 / math.sqrt(3.0)) / 2.0
        assert image.pixels[32, 32] == pytest.approx(expected, abs=1e-6)
        assert image.pixels[0, 0] == 0.0

    def test_panorama_baseline(self):
        """Test the cylindrical baseline of a sphere is about 1 at the equator"""
        image = render(icosphere(3), ProjectionKind.PANORAMA_Z, size=64)
        np.testing.assert_allclose(image.pixels[31], 1.0, atol=6e-3)

    def test_brute_and_bvh_render_alike(self):
        """Test both casters produce the same image"""
        bvh = render(self.mesh, ProjectionKind.CASSINI, size=32)
        brute = render(self.mesh, ProjectionKind.CASSINI, size=32, caster_kind=CasterKind.BRUTE)
        np.testing.assert_allclose(bvh.pixels, brute.pixels, atol=1e-6)

    def test_render_views_order_and_threads(self):
        """Test concurrent rendering matches serial rendering in input order"""
        rotations = [Rotation.from_degrees(azimuth=a, elevation=e) for a in (0, 90, 180) for e in (0, 45)]
        serial = render_views(self.mesh, ProjectionKind.UV, rotations, size=16, max_workers=1)
        threaded = render_views(self.mesh, ProjectionKind.UV, rotations, size=16, max_workers=4)
        for rotation, a, b in zip(rotations, serial, threaded):
            assert a.rotation == rotation
            assert a.source_id == "box_0000"
            np.testing.assert_array_equal(a.pixels, b.pixels)
            np.testing.assert_array_equal(a.pixels, render(self.mesh, ProjectionKind.UV, rotation, size=16).pixels)

    def test_depth_image_validation(self):
        """Test depth images must be square grids of values in [0, 1]"""
        with pytest.raises(ValidationError):
            DepthImage(pixels=np.full((4, 4), 1.5), projection_kind=ProjectionKind.UV)
        with pytest.raises(ValidationError):
            DepthImage(pixels=np.zeros((4, 3)), projection_kind=ProjectionKind.UV)


class TestCodec:
    """Test suite for the SPDI container and PNG export"""

    def setup_method(self):
        """Set up a rendered image"""
        mesh = normalize(synth_shape("cylinder", np.random.default_rng(4), object_id="cylinder_0001"))
        self.image = render(mesh, ProjectionKind.ECKERT_IV, Rotation.from_degrees(azimuth=90, elevation=45), size=16)

    def test_round_trip_is_exact(self, tmp_path):
        """Test pixels, kind and rotation survive encoding bit for bit"""
        path = tmp_path / "views" / "view00.spdi"
        write_image(self.image, path)
        restored = read_image(path, source_id="cylinder_0001")
        np.testing.assert_array_equal(restored.pixels, self.image.pixels)
        assert restored.projection_kind == ProjectionKind.ECKERT_IV
        assert restored.rotation == self.image.rotation
        assert encode(restored) == encode(self.image)

    def test_bad_payloads(self):
        """Test magic, version and length checks"""
        data = encode(self.image)
        with pytest.raises(FormatError):
            decode(b"XXXX" + data[4:])
        with pytest.raises(FormatError):
            decode(data[:4] + b"\x09\x00" + data[6:])
        with pytest.raises(FormatError):
            decode(data[:-1])
        with pytest.raises(FormatError):
            decode(data[:10])

    def test_generic_grid(self):
        """Test non-square grids use the generic kind code"""
        values = np.arange(6, dtype=np.float32).reshape(2, 3)
        code, grid, _ = decode_grid(encode_grid(values))
        assert code == GRID_KIND
        np.testing.assert_array_equal(grid, values)
        with pytest.raises(FormatError):
            decode(encode_grid(np.zeros((2, 2))))

    def test_png_export(self, tmp_path):
        """Test the PNG holds round(65535 * depth)"""
        path = tmp_path / "view.png"
        export_png(self.image, path)
        with Image.open(path) as png:
            levels = np.array(png).astype(np.int64)
        expected = np.round(self.image.pixels.astype(np.float64) * 65535.0).astype(np.int64)
        np.testing.assert_array_equal(levels, expected)
