import numpy as np
import pytest

from nlstereo.imageio import FormatError, read_pfm, read_pnm, write_pfm, write_pnm


class TestPfm:
    def test_roundtrip_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        disp = rng.standard_normal((7, 9)).astype(np.float32).astype(np.float64)
        path = tmp_path / "d.pfm"
        write_pfm(path, disp)
        back = read_pfm(path)
        assert back.tobytes() == disp.tobytes()

    def test_hand_built_bytes(self, tmp_path):
        # 2x2 little-endian file with known values, bottom row first
        payload = np.array([3.0, 4.0, 1.0, 2.0], dtype="<f4").tobytes()
        path = tmp_path / "hand.pfm"
        path.write_bytes(b"Pf\n2 2\n-1.0\n" + payload)
        got = read_pfm(path)
        np.testing.assert_array_equal(got, [[1.0, 2.0], [3.0, 4.0]])

    def test_big_endian_scale(self, tmp_path):
        payload = np.array([5.0, 6.0], dtype=">f4").tobytes()
        path = tmp_path / "be.pfm"
        path.write_bytes(b"Pf\n2 1\n1.0\n" + payload)
        np.testing.assert_array_equal(read_pfm(path), [[5.0, 6.0]])

    def test_color_variant_flag(self, tmp_path):
        payload = np.zeros(2 * 2 * 3, dtype="<f4").tobytes()
        path = tmp_path / "c.pfm"
        path.write_bytes(b"PF\n2 2\n-1.0\n" + payload)
        with pytest.raises(FormatError, match="color"):
            read_pfm(path)
        img = read_pfm(path, allow_color=True)
        assert img.shape == (3, 2, 2)

    def test_zero_scale_rejected(self, tmp_path):
        path = tmp_path / "z.pfm"
        path.write_bytes(b"Pf\n1 1\n0\n" + b"\x00" * 4)
        with pytest.raises(FormatError, match="scale"):
            read_pfm(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.pfm"
        path.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 10)
        with pytest.raises(FormatError, match="truncated"):
            read_pfm(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "b.pfm"
        path.write_bytes(b"Qx\n1 1\n-1\n" + b"\x00" * 4)
        with pytest.raises(FormatError, match="magic"):
            read_pfm(path)

    def test_non_finite_write_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="finite"):
            write_pfm(tmp_path / "n.pfm", np.array([[np.nan]]))


class TestPnm:
    def test_zero_image_roundtrip(self, tmp_path):
        img = np.zeros((1, 3, 4, 5))
        path = tmp_path / "z.ppm"
        write_pnm(path, img)
        np.testing.assert_array_equal(read_pnm(path), img)

    def test_maxval_pixel_is_one(self, tmp_path):
        img = np.ones((1, 1, 2, 2))
        path = tmp_path / "w.pgm"
        write_pnm(path, img)
        np.testing.assert_array_equal(read_pnm(path), 1.0)

    def test_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.random((1, 3, 6, 7))
        path = tmp_path / "q.ppm"
        write_pnm(path, img)
        back = read_pnm(path)
        assert np.abs(back - img).max() <= 1.0 / 510.0 + 1e-12

    def test_grayscale_uses_p5(self, tmp_path):
        path = tmp_path / "g.pgm"
        write_pnm(path, np.full((1, 1, 2, 2), 0.5))
        assert path.read_bytes().startswith(b"P5\n")

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n255\n\x00\xff")
        img = read_pnm(path)
        np.testing.assert_allclose(img[0, 0, 0], [0.0, 1.0])

    def test_ascii_variant_rejected(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P2\n2 1\n255\n0 255\n")
        with pytest.raises(FormatError, match="magic"):
            read_pnm(path)

    def test_bad_maxval_rejected(self, tmp_path):
        path = tmp_path / "m.pgm"
        path.write_bytes(b"P5\n2 1\n65535\n\x00\x00\x00\x00")
        with pytest.raises(FormatError, match="maxval"):
            read_pnm(path)


class TestFuzzSafety:
    @pytest.mark.parametrize("seed", range(60))
    def test_random_bytes_never_crash(self, tmp_path, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(0, 400))
        blob = rng.integers(0, 256, size=n, dtype=np.uint8).tobytes()
        if seed % 3 == 0:  # bias some blobs toward plausible headers
            blob = rng.choice([b"Pf\n", b"PF\n", b"P5\n", b"P6\n"]) + blob
        path = tmp_path / "fuzz.bin"
        path.write_bytes(blob)
        for reader in (read_pfm, read_pnm):
            try:
                reader(path)
            except FormatError:
                pass
    # any other exception propagates and fails the test
