"""Matrix-free linear operators between real Euclidean spaces.

Every operator acts on flat 1-D float arrays. Images are flattened row-major,
so an operator on ``height x width`` images has ``domain_dim = height * width``.
"""

import numpy as np
from scipy import signal

__all__ = [
    "DimensionError",
    "LinearOperator",
    "DenseOperator",
    "ConvolutionOperator",
    "apply",
    "apply_adjoint",
    "hilbert_operator",
    "gaussian_psf",
    "operator_norm_estimate",
]


class DimensionError(ValueError):
    """Raised when a vector does not match the operator's domain or range."""


class LinearOperator:
    """Base class for a linear map ``A: R^domain_dim -> R^range_dim``.

    Subclasses implement ``_forward`` and ``_adjoint`` on already validated
    float arrays. Instances are treated as immutable once constructed.
    """

    def __init__(self, domain_dim, range_dim):
        if domain_dim < 1 or range_dim < 1:
            raise ValueError("operator dimensions must be positive")
        self.domain_dim = int(domain_dim)
        self.range_dim = int(range_dim)
        self._dense = None
        self._norm = None

    @property
    def shape(self):
        return (self.range_dim, self.domain_dim)

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        x = _as_vector(x, self.domain_dim, "domain")
        return self._forward(x)

    def adjoint(self, y):
        y = _as_vector(y, self.range_dim, "range")
        return self._adjoint(y)

    def _forward(self, x):
        raise NotImplementedError

    def _adjoint(self, y):
        raise NotImplementedError

    def to_dense(self):
        """Materialize the operator as a ``range_dim x domain_dim`` array.

        Built column by column from ``forward`` and memoized; intended for
        small operators (direct solvers, oracles).
        """
        if self._dense is None:
            eye = np.eye(self.domain_dim)
            cols = [self._forward(eye[:, j]) for j in range(self.domain_dim)]
            self._dense = np.column_stack(cols)
            self._dense.setflags(write=False)
        return self._dense

    def normal_solve(self, shift, scale, rhs):
        """Solve ``(shift I + scale A*A) x = rhs`` exactly, or return None.

        Operators with a cheap diagonalization override this; the default
        signals that no fast exact solver exists.
        """
        return None

    def norm(self):
        """Memoized :func:`operator_norm_estimate` with 100 iterations, seed 0."""
        if self._norm is None:
            self._norm = operator_norm_estimate(self, 100, 0)
        return self._norm

    def __repr__(self):
        return "{}(shape={})".format(type(self).__name__, self.shape)


class DenseOperator(LinearOperator):
    """Operator given by an explicit real matrix."""

    def __init__(self, matrix):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        super().__init__(matrix.shape[1], matrix.shape[0])
        matrix.setflags(write=False)
        self.matrix = matrix
        self._dense = matrix

    def _forward(self, x):
        return self.matrix @ x

    def _adjoint(self, y):
        return self.matrix.T @ y


class ConvolutionOperator(LinearOperator):
    """2-D convolution of an image with a point spread function.

    Parameters
    ----------
    kernel : array_like
        2-D PSF with odd side lengths; its center pixel is the origin.
    image_width, image_height : int
        Size of the images the operator acts on.
    boundary : {'periodic', 'zero'}
        ``'periodic'`` wraps the image around (FFT semantics); ``'zero'``
        pads with zeros outside the image. In both cases the adjoint is the
        correlation with the same kernel, i.e. convolution with the kernel
        rotated by 180 degrees.
    """

    BOUNDARIES = ("periodic", "zero")

    def __init__(self, kernel, image_width, image_height, boundary="periodic"):
        kernel = np.array(kernel, dtype=float)
        if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
            raise ValueError("kernel must be 2-D with odd side lengths")
        if boundary == "zero-pad":
            boundary = "zero"
        if boundary not in self.BOUNDARIES:
            raise ValueError("unknown boundary {!r}".format(boundary))
        n = int(image_width) * int(image_height)
        super().__init__(n, n)
        kernel.setflags(write=False)
        self.kernel = kernel
        self.image_width = int(image_width)
        self.image_height = int(image_height)
        self.boundary = boundary
        if boundary == "periodic":
            self._otf = np.fft.rfft2(self._wrapped_kernel())

    @property
    def image_shape(self):
        return (self.image_height, self.image_width)

    def _wrapped_kernel(self):
        # Fold the centered kernel onto the image torus so that index (0, 0)
        # holds the kernel center; kernels larger than the image alias.
        h, w = self.image_shape
        kh, kw = self.kernel.shape
        rows = (np.arange(kh) - kh // 2) % h
        cols = (np.arange(kw) - kw // 2) % w
        wrapped = np.zeros((h, w))
        np.add.at(wrapped, (rows[:, None], cols[None, :]), self.kernel)
        return wrapped

    def normal_solve(self, shift, scale, rhs):
        # periodic convolution is diagonal in the Fourier basis
        if self.boundary != "periodic":
            return None
        spectrum = np.fft.rfft2(np.asarray(rhs, dtype=float).reshape(self.image_shape))
        spectrum /= shift + scale * np.abs(self._otf) ** 2
        return np.fft.irfft2(spectrum, s=self.image_shape).ravel()

    def _forward(self, x):
        img = x.reshape(self.image_shape)
        if self.boundary == "periodic":
            out = np.fft.irfft2(np.fft.rfft2(img) * self._otf, s=self.image_shape)
        else:
            out = signal.convolve2d(img, self.kernel, mode="same")
        return out.ravel()

    def _adjoint(self, y):
        img = y.reshape(self.image_shape)
        if self.boundary == "periodic":
            out = np.fft.irfft2(np.fft.rfft2(img) * np.conj(self._otf), s=self.image_shape)
        else:
            out = signal.correlate2d(img, self.kernel, mode="same")
        return out.ravel()


def _as_vector(v, dim, space):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != dim:
        raise DimensionError(
            "expected a {} vector of length {}, got shape {}".format(space, dim, v.shape))
    return v


def apply(op, x):
    """Return ``A x``."""
    return op.forward(x)


def apply_adjoint(op, y):
    """Return ``A* y``."""
    return op.adjoint(y)


def hilbert_operator(n):
    """The ``n x n`` Hilbert matrix ``H[i, j] = 1 / (i + j - 1)`` (1-based)."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    i = np.arange(1, n + 1)
    return DenseOperator(1.0 / (i[:, None] + i[None, :] - 1))


def gaussian_psf(size, sigma):
    """Centered, rotationally symmetric Gaussian kernel normalized to sum 1.

    Same construction as MATLAB's ``fspecial('gaussian', [size size], sigma)``.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError("PSF size must be an odd positive integer")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    u = np.arange(size) - size // 2
    g = np.exp(-(u[:, None] ** 2 + u[None, :] ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def operator_norm_estimate(op, iters=50, seed=0):
    """Estimate ``||A||`` (largest singular value) by power iteration on ``A* A``.

    The starting vector is drawn from ``numpy.random.default_rng(seed)``. Each
    iterate gives a lower bound ``||A v||`` with ``||v|| = 1``; the returned
    value is the best bound seen, so it never decreases as ``iters`` grows.
    A zero operator yields 0.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.domain_dim)
    v /= np.linalg.norm(v)
    best = 0.0
    for _ in range(iters):
        av = op.forward(v)
        best = max(best, float(np.linalg.norm(av)))
        w = op.adjoint(av)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            break
        v = w / nw
    return best
