import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rrnit import (SolverConfig, add_noise, build_problem, hilbert_operator, make_deblur_problem,
                   make_hilbert_problem, read_pgm, run_rrnit, synthetic_image)
from rrnit.problems import write_pgm


def assert_same_problem(a, b):
    for name in ("y_exact", "y_delta", "x0", "x_star"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert a.delta == b.delta
    np.testing.assert_array_equal(a.operator.to_dense(), b.operator.to_dense())


class TestAddNoise:
    def test_zero_level(self, rng):
        y = rng.standard_normal(6)
        yd, delta = add_noise(y, 0.0, seed=3)
        np.testing.assert_array_equal(yd, y)
        assert delta == 0.0 and yd is not y

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(1, 60),
           level=st.sampled_from([1e-1, 1e-3, 1e-5, 1e-8]))
    def test_exact_level(self, seed, n, level):
        y = np.random.default_rng(seed + 1).uniform(0.5, 2.0, n)
        yd, delta = add_noise(y, level, seed)
        ny = np.linalg.norm(y)
        assert abs(np.linalg.norm(yd - y) / ny - level) <= 1e-15 + 1e-9 * level
        assert np.linalg.norm(yd - y) <= delta
        assert delta == pytest.approx(level * ny, rel=1e-9)

    def test_determinism(self, rng):
        y = rng.standard_normal(10)
        a, da = add_noise(y, 1e-3, seed=5)
        b, db = add_noise(y, 1e-3, seed=5)
        c, _ = add_noise(y, 1e-3, seed=6)
        np.testing.assert_array_equal(a, b)
        assert da == db
        assert not np.array_equal(a, c)

    def test_errors(self):
        with pytest.raises(ValueError):
            add_noise(np.zeros(3), 1e-3)
        with pytest.raises(ValueError):
            add_noise(np.ones(3), -1e-3)


class TestHilbertProblem:
    def test_setup(self):
        pr = make_hilbert_problem(25, relative_level=1e-5, seed=0)
        np.testing.assert_array_equal(pr.x_star, np.ones(25))
        np.testing.assert_array_equal(pr.x0, np.zeros(25))
        np.testing.assert_allclose(pr.y_exact, pr.operator(pr.x_star), rtol=0, atol=0)
        assert pr.noise_level == pytest.approx(1e-5, rel=1e-9)
        assert pr.descriptor == dict(kind="hilbert", n=25, x_star="ones", noise_level=1e-5, seed=0)
        assert pr.residual(pr.x0) == pytest.approx(np.linalg.norm(pr.y_delta))
        assert pr.error(pr.x0) == pytest.approx(5.0)

    def test_level_1e7(self):
        pr = make_hilbert_problem(25, relative_level=1e-7, seed=1)
        assert np.linalg.norm(pr.y_delta - pr.y_exact) <= pr.delta
        assert pr.noise_level == pytest.approx(1e-7, rel=1e-9)

    def test_ramp(self):
        pr = make_hilbert_problem(5, "ramp", 0.0)
        np.testing.assert_allclose(pr.x_star, np.linspace(0, 1, 5))

    def test_errors(self):
        with pytest.raises(ValueError):
            make_hilbert_problem(1)
        with pytest.raises(ValueError):
            make_hilbert_problem(5, "zeros")

    def test_exact_2x2_recovery(self):
        pr = make_hilbert_problem(2, relative_level=0.0)
        tr = run_rrnit(pr, SolverConfig(p=0.2, max_outer=50, linear_solver="direct"))
        best = min(tr.errors)
        assert best <= 1e-6
        assert tr.stop_reason == "max_outer" or tr.iterations <= 50

    def test_determinism(self):
        assert_same_problem(make_hilbert_problem(25, relative_level=1e-5, seed=4),
                            make_hilbert_problem(25, relative_level=1e-5, seed=4))


class TestDeblurProblem:
    def test_delta_kernel_stops_immediately(self):
        img = synthetic_image("squares", 16)
        pr = make_deblur_problem(img, psf_size=1, sigma=1.0, relative_level=1e-3, seed=2)
        np.testing.assert_allclose(pr.y_exact, img.ravel(), atol=1e-15)
        np.testing.assert_array_equal(pr.x0, pr.y_delta)
        tr = run_rrnit(pr, SolverConfig(p=0.2, tau=1.01))
        assert tr.iterations == 0 and tr.k_star == 0 and tr.stop_reason == "discrepancy"

    @pytest.mark.parametrize("boundary", ["periodic", "zero"])
    def test_checkerboard_restores(self, boundary):
        pr = make_deblur_problem(synthetic_image("checkerboard", 32), 9, 1.5, 1e-5, seed=0,
                                 boundary=boundary)
        tr = run_rrnit(pr, SolverConfig(p=0.2, tau=3))
        assert tr.stop_reason == "discrepancy"
        nx = np.linalg.norm(pr.x_star)
        assert tr.errors[-1] / nx < tr.errors[0] / nx

    def test_large_scale_construction(self):
        img = synthetic_image("gradient", 256)
        pr = make_deblur_problem(img, psf_size=257, sigma=4.0, relative_level=1e-3, seed=0)
        assert pr.operator.shape == (256 * 256, 256 * 256)
        assert pr.noise_level == pytest.approx(1e-3, rel=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            make_deblur_problem(np.zeros((0, 0)))
        with pytest.raises(ValueError):
            make_deblur_problem(np.ones((8, 8)), psf_size=4)

    def test_determinism_and_rebuild(self):
        a = make_deblur_problem(synthetic_image("squares", 16), 5, 1.0, 1e-4, seed=9,
                                descriptor=dict(image="squares", size=16))
        assert_same_problem(a, build_problem(a.descriptor))


class TestSyntheticImages:
    @pytest.mark.parametrize("name", ["checkerboard", "squares", "gradient"])
    def test_range(self, name):
        img = synthetic_image(name, 20)
        assert img.shape == (20, 20)
        assert img.min() >= 0 and img.max() <= 1 and img.max() > img.min()

    def test_unknown(self):
        with pytest.raises(ValueError):
            synthetic_image("lena")


class TestBuildProblem:
    def test_hilbert_roundtrip(self):
        pr = make_hilbert_problem(8, "ramp", 1e-4, seed=3)
        assert_same_problem(pr, build_problem(pr.descriptor))

    def test_pgm_path(self, tmp_path):
        path = tmp_path / "img.pgm"
        write_pgm(path, synthetic_image("squares", 12))
        desc = dict(kind="deblur", image_path=str(path), psf_size=3, sigma=1.0,
                    noise_level=1e-3, seed=0)
        pr = build_problem(desc)
        assert pr.operator.image_shape == (12, 12)
        assert_same_problem(pr, build_problem(pr.descriptor))

    def test_errors(self):
        with pytest.raises(ValueError):
            build_problem(dict(kind="potential"))
        with pytest.raises(ValueError):
            build_problem(dict(kind="deblur", psf_size=3, sigma=1.0, noise_level=0.0))


class TestPGM:
    @pytest.mark.parametrize("maxval", [255, 65535, 1000])
    @pytest.mark.parametrize("plain", [False, True])
    def test_roundtrip(self, tmp_path, maxval, plain):
        img = np.random.default_rng(0).random((7, 5))
        path = tmp_path / "x.pgm"
        write_pgm(path, img, maxval=maxval, plain=plain)
        back = read_pgm(path)
        assert back.shape == (7, 5)
        assert np.max(np.abs(back - img)) <= 0.5 / maxval + 1e-12

    def test_comments_and_whitespace(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P2\n# a comment\n3 2 # trailing\n4\n0 1 2\n3 4 0\n")
        np.testing.assert_allclose(read_pgm(path), [[0, 0.25, 0.5], [0.75, 1, 0]])

    def test_raw_8bit_exact(self, tmp_path):
        path = tmp_path / "r.pgm"
        path.write_bytes(b"P5 2 2 255\n" + bytes([0, 51, 102, 255]))
        np.testing.assert_allclose(read_pgm(path), [[0, 0.2], [0.4, 1]])

    @pytest.mark.parametrize("data", [b"P6\n1 1\n255\n\x00\x00\x00", b"P5\n2 2\n255\n\x00",
                                      b"P2\n2 2\n0\n", b"P2\n2"])
    def test_malformed(self, tmp_path, data):
        path = tmp_path / "bad.pgm"
        path.write_bytes(data)
        with pytest.raises(ValueError):
            read_pgm(path)
