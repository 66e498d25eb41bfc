"""FFT backend: pyFFTW plans when available, scipy.fft otherwise."""

from __future__ import annotations

import threading

import numpy as np
import scipy.fft

try:  # pragma: no cover - exercised implicitly
    import pyfftw

    pyfftw.interfaces.cache.enable()
    _HAVE_FFTW = True
except ImportError:  # pragma: no cover
    _HAVE_FFTW = False



def _planner(measure):
    # measured plans run about 25% faster but depend on timings, so two
    # processes may pick different algorithms and differ in the last bits
    return "FFTW_MEASURE" if measure else "FFTW_ESTIMATE"


class RealPlan:
    """Reusable r2c/c2r transform pair for a fixed real shape."""

    def __init__(self, shape):
        self.shape = tuple(shape)
        self.spectral_shape = self.shape[:-1] + (self.shape[-1] // 2 + 1,)
        self._lock = threading.Lock()
        if _HAVE_FFTW:
            self._real = pyfftw.empty_aligned(self.shape, dtype="float64")
            self._spec = pyfftw.empty_aligned(self.spectral_shape, dtype="complex128")
            axes = tuple(range(len(self.shape)))
            self._fwd = pyfftw.FFTW(self._real, self._spec, axes=axes,
                                    flags=("FFTW_ESTIMATE",), threads=1)
            self._bwd = pyfftw.FFTW(self._spec, self._real, axes=axes,
                                    direction="FFTW_BACKWARD",
                                    flags=("FFTW_ESTIMATE",), threads=1)

    def forward(self, a, pad_to_shape=True):
        """rfftn of ``a`` zero-padded into the plan shape (corner aligned)."""
        if not _HAVE_FFTW:
            return scipy.fft.rfftn(a, s=self.shape)
        with self._lock:
            self._real[...] = 0.0
            self._real[tuple(slice(0, n) for n in a.shape)] = a
            self._fwd()
            return self._spec.copy()

    def backward(self, spec, crop=None):
        """irfftn of ``spec``; optionally crop the leading ``crop`` block."""
        if not _HAVE_FFTW:
            out = scipy.fft.irfftn(spec, s=self.shape)
        else:
            with self._lock:
                self._spec[...] = spec
                self._bwd()
                out = self._real.copy()
        if crop is not None:
            out = np.ascontiguousarray(out[tuple(slice(0, n) for n in crop)])
        return out


class PaddedConvolution:
    """Linear convolution of a real 3D block with a fixed kernel.

    The block (shape ``n``) is zero padded to ``P = 2n`` per axis.  The
    transforms are pruned axis by axis: the forward pass only transforms
    rows that can be nonzero, the backward pass only rows whose output
    lands in the block.  That is about 58% of the work of full 3D
    transforms.  All padding buffers stay zero between calls.
    ``kernel_hat`` (rfftn layout of the padded shape) must already
    include the 1/N normalization.  ``single=True`` runs the transforms in
    single precision, which halves the memory traffic.
    """

    def __init__(self, block_shape, padded_shape, kernel_hat, single=False, measure=False):
        self.n = n0, n1, n2 = tuple(block_shape)
        self.shape = P0, P1, P2 = tuple(padded_shape)
        self.block = tuple(slice(0, k) for k in self.n)
        self.kernel_hat = kernel_hat.astype(np.float32 if single else np.float64)
        self._lock = threading.Lock()
        H = P2 // 2 + 1
        if not _HAVE_FFTW:
            return
        c, r = ("complex64", "float32") if single else ("complex128", "float64")
        flags = (_planner(measure),)
        self._x = pyfftw.zeros_aligned((n0, n1, P2), dtype=r)
        self._y = pyfftw.zeros_aligned((n0, P1, H), dtype=c)
        self._z = pyfftw.zeros_aligned((P0, P1, H), dtype=c)
        self._y2 = pyfftw.empty_aligned((n0, P1, H), dtype=c)
        self._x2 = pyfftw.empty_aligned((n0, n1, P2), dtype=r)
        plan = pyfftw.FFTW
        z = self._z
        self._steps = [
            plan(self._x, self._y[:, :n1, :], axes=(2,), flags=flags, threads=1),
            plan(self._y, z[:n0], axes=(1,), flags=flags, threads=1),
            plan(z, z, axes=(0,), flags=flags, threads=1),
        ]
        self._back = [
            plan(z, z, axes=(0,), direction="FFTW_BACKWARD", flags=flags, threads=1),
            plan(z[:n0], self._y2, axes=(1,), direction="FFTW_BACKWARD",
                 flags=flags, threads=1),
            plan(self._y2[:, :n1, :], self._x2, axes=(2,), direction="FFTW_BACKWARD",
                 flags=flags + ("FFTW_DESTROY_INPUT",), threads=1),
        ]
        # measuring scribbles on the buffers; the padding must start at zero
        for buf in (self._x, self._y, self._z):
            buf[...] = 0

    def __call__(self, a):
        if not _HAVE_FFTW:
            spec = scipy.fft.rfftn(a, s=self.shape) * self.kernel_hat
            out = scipy.fft.irfftn(spec, s=self.shape, norm="forward")
            return np.ascontiguousarray(out[self.block])
        with self._lock:
            self._x[..., : self.n[2]] = a
            for step in self._steps:
                step.execute()
            np.multiply(self._z, self.kernel_hat, out=self._z)
            for step in self._back:
                step.execute()  # unnormalized; the kernel carries 1/N
            self._z[self.n[0]:] = 0.0  # in-place passes filled the padding
            return self._x2[..., : self.n[2]].astype(np.float64)


class InPlaceMultiplier:
    """Spectral multiplier applied in place to a persistent complex buffer.

    ``data`` holds the field between calls; ``apply(mult)`` replaces it with
    ``ifftn(mult * fftn(data))`` where ``mult`` already carries 1/N.
    """

    def __init__(self, shape, measure=False):
        self.shape = tuple(shape)
        if _HAVE_FFTW:
            flag = _planner(measure)
            axes = tuple(range(len(self.shape)))
            self.data = pyfftw.empty_aligned(self.shape, dtype="complex128")
            self._spec = pyfftw.empty_aligned(self.shape, dtype="complex128")
            self._fwd = pyfftw.FFTW(self.data, self._spec, axes=axes,
                                    flags=(flag,), threads=1)
            self._bwd = pyfftw.FFTW(self._spec, self.data, axes=axes,
                                    direction="FFTW_BACKWARD",
                                    flags=(flag, "FFTW_DESTROY_INPUT"), threads=1)
        else:
            self.data = np.empty(self.shape, dtype=complex)

    def apply(self, mult):
        if not _HAVE_FFTW:
            self.data[...] = scipy.fft.ifftn(mult * scipy.fft.fftn(self.data), norm="forward")
            return
        self._fwd.execute()
        np.multiply(self._spec, mult, out=self._spec)
        self._bwd.execute()


def rfft_multiply(a, mult):
    """Real-to-real spectral multiplier on the natural (unpadded) shape."""
    return scipy.fft.irfftn(mult * scipy.fft.rfftn(a), s=a.shape)


def backend_name():
    return "pyfftw" if _HAVE_FFTW else "scipy"
