"""Benchmark problems: noisy Hilbert systems and Gaussian-blur deblurring.

Noise is drawn from NumPy's ``default_rng`` (PCG64 bit generator) and
rescaled so that ``||y_delta - y||`` hits the requested relative level.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .linop import ConvolutionOperator, LinearOperator, gaussian_psf, hilbert_operator

__all__ = [
    "Problem",
    "add_noise",
    "make_hilbert_problem",
    "make_deblur_problem",
    "synthetic_image",
    "read_pgm",
    "write_pgm",
    "build_problem",
]

X_STAR_CHOICES = ("ones", "ramp")
SYNTHETIC_IMAGES = ("checkerboard", "squares", "gradient")


@dataclass(frozen=True)
class Problem:
    """A linear inverse problem ``A x = y`` observed through ``y_delta``.

    ``delta`` is the absolute noise bound ``||y_delta - y_exact||``.
    ``descriptor`` records how the problem was built, so it can be rebuilt
    bit-for-bit by :func:`build_problem`.
    """
    operator: LinearOperator
    y_exact: np.ndarray
    y_delta: np.ndarray
    delta: float
    x0: np.ndarray
    x_star: Optional[np.ndarray] = None
    seed: int = 0
    descriptor: Optional[dict] = None

    @property
    def noise_level(self):
        ny = np.linalg.norm(self.y_exact)
        return self.delta / ny if ny else 0.0

    def residual(self, x):
        return float(np.linalg.norm(self.operator.forward(x) - self.y_delta))

    def error(self, x):
        if self.x_star is None:
            return None
        return float(np.linalg.norm(self.x_star - x))


def add_noise(y, relative_level, seed=0):
    """Return ``(y_delta, delta)`` with ``||y_delta - y|| = relative_level ||y||``.

    Standard normal noise from ``numpy.random.default_rng(seed)`` is rescaled
    to the target norm. ``delta`` is the norm of the perturbation actually
    stored, so ``||y_delta - y|| <= delta`` holds exactly; it differs from
    ``relative_level * ||y||`` only by rounding in ``y + noise``.
    """
    y = np.asarray(y, dtype=float)
    if relative_level < 0:
        raise ValueError("relative_level must be nonnegative")
    if relative_level == 0:
        return y.copy(), 0.0
    ny = np.linalg.norm(y)
    if ny == 0:
        raise ValueError("cannot scale relative noise for zero data")
    e = np.random.default_rng(seed).standard_normal(y.shape)
    e *= relative_level * ny / np.linalg.norm(e)
    y_delta = y + e
    return y_delta, float(np.linalg.norm(y_delta - y))


def _x_star(n, choice):
    if choice == "ones":
        return np.ones(n)
    if choice == "ramp":
        return np.linspace(0.0, 1.0, n)
    raise ValueError("unknown x_star choice {!r}; expected one of {}".format(
        choice, X_STAR_CHOICES))


def make_hilbert_problem(n=25, x_star_choice="ones", relative_level=1e-5, seed=0):
    """Hilbert system with ``x* = ones`` (or a ramp on [0, 1]) and ``x0 = 0``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    op = hilbert_operator(n)
    x_star = _x_star(n, x_star_choice)
    y = op.forward(x_star)
    y_delta, delta = add_noise(y, relative_level, seed)
    descriptor = dict(kind="hilbert", n=int(n), x_star=x_star_choice,
                      noise_level=float(relative_level), seed=int(seed))
    return Problem(op, y, y_delta, delta, np.zeros(n), x_star, int(seed), descriptor)


def synthetic_image(name="checkerboard", size=32):
    """Small test images with values in [0, 1]."""
    i, j = np.mgrid[0:size, 0:size]
    if name == "checkerboard":
        block = max(size // 8, 1)
        return (((i // block) + (j // block)) % 2).astype(float)
    if name == "squares":
        img = np.zeros((size, size))
        q = size // 4
        img[q:3 * q, q:3 * q] = 0.5
        img[size // 2 - q // 2:size // 2 + q // 2, size // 2 - q // 2:size // 2 + q // 2] = 1.0
        return img
    if name == "gradient":
        return (i + j) / (2.0 * (size - 1))
    raise ValueError("unknown synthetic image {!r}; expected one of {}".format(
        name, SYNTHETIC_IMAGES))


def make_deblur_problem(image, psf_size=9, sigma=1.5, relative_level=1e-5, seed=0,
                        boundary="periodic", descriptor=None):
    """Blur ``image`` with a Gaussian PSF; the initial guess is ``y_delta``."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or image.size == 0:
        raise ValueError("image must be a nonempty 2-D array")
    h, w = image.shape
    op = ConvolutionOperator(gaussian_psf(psf_size, sigma), w, h, boundary)
    x_star = image.ravel().copy()
    y = op.forward(x_star)
    y_delta, delta = add_noise(y, relative_level, seed)
    desc = dict(kind="deblur", height=h, width=w, psf_size=int(psf_size),
                sigma=float(sigma), noise_level=float(relative_level), seed=int(seed),
                boundary=op.boundary)
    if descriptor:
        desc.update(descriptor)
    return Problem(op, y, y_delta, delta, y_delta.copy(), x_star, int(seed), desc)


def build_problem(descriptor):
    """Rebuild a problem from a :attr:`Problem.descriptor` dictionary."""
    d = dict(descriptor)
    kind = d.get("kind")
    if kind == "hilbert":
        return make_hilbert_problem(d["n"], d.get("x_star", "ones"), d["noise_level"],
                                    d.get("seed", 0))
    if kind == "deblur":
        if d.get("image_path"):
            image = read_pgm(d["image_path"])
            extra = dict(image_path=d["image_path"])
        elif d.get("image"):
            image = synthetic_image(d["image"], d.get("size", 32))
            extra = dict(image=d["image"], size=d.get("size", 32))
        else:
            raise ValueError("deblur descriptor needs 'image' or 'image_path'")
        return make_deblur_problem(image, d["psf_size"], d["sigma"], d["noise_level"],
                                   d.get("seed", 0), d.get("boundary", "periodic"), extra)
    raise ValueError("unknown problem kind {!r}".format(kind))


def _pgm_tokens(data):
    # header tokens, skipping '#' comments; yields (token, end_offset)
    pos = 0
    while True:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        yield data[start:pos], pos


def read_pgm(path):
    """Read a PGM image (``P2`` plain or ``P5`` raw, 8 or 16 bit) scaled to [0, 1]."""
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    magic, _ = next(tokens)
    if magic not in (b"P2", b"P5"):
        raise ValueError("{} is not a PGM file (magic {!r})".format(path, magic))
    width = int(next(tokens)[0])
    height = int(next(tokens)[0])
    maxval, end = next(tokens)
    maxval = int(maxval)
    if not 0 < maxval < 65536:
        raise ValueError("invalid PGM maxval {}".format(maxval))
    count = width * height
    if magic == b"P2":
        values = np.array(data[end:].split()[:count], dtype=np.int64)
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[end + 1:end + 1 + count * dtype.itemsize]
        values = np.frombuffer(raw, dtype=dtype)
    if values.size != count:
        raise ValueError("PGM pixel data truncated")
    return values.reshape(height, width).astype(float) / maxval


def write_pgm(path, image, maxval=255, plain=False):
    """Write a [0, 1] image as PGM; used for test fixtures and restored images."""
    image = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    h, w = image.shape
    q = np.rint(image * maxval).astype(np.int64)
    header = "{}\n{} {}\n{}\n".format("P2" if plain else "P5", w, h, maxval).encode()
    if plain:
        body = "\n".join(" ".join(str(v) for v in row) for row in q).encode() + b"\n"
    else:
        body = q.astype(">u2" if maxval > 255 else "u1").tobytes()
    Path(path).write_bytes(header + body)
