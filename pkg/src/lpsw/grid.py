"""Periodic grid, fields, normalized DFT and exact spectral operators.

The physical domain is the torus [0, L)^2 sampled on an n x n grid.  Array
axis 0 runs along x1 and axis 1 along x2.  Spectra are stored in numpy FFT
order and normalized as Fourier coefficients, so that a constant field c has
the single coefficient c at m = (0, 0) and the grid-quadrature L^2 norm obeys

    spacing^2 * sum |f|^2 == L^2 * sum |F|^2.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

DEFAULT_LENGTH = 2 * math.pi * 16
MAGIC = b"BSWF"
_HEADER = struct.Struct("<4sIdI")


@dataclass(frozen=True)
class Grid:
    n: int
    length: float = DEFAULT_LENGTH

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 16 or n & (n - 1):
            raise ConfigurationError(f"grid size n={n!r} must be a power of two >= 16")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ConfigurationError(f"grid length L={self.length!r} must be positive and finite")

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def k_unit(self) -> float:
        """Lattice spacing 2*pi/L of the frequency lattice."""
        return 2 * math.pi / self.length

    @property
    def k_nyquist(self) -> float:
        return self.k_unit * self.n / 2

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer mode numbers m, shape (2, n, n), in FFT order."""
        m = np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(np.int64)
        return np.stack(np.meshgrid(m, m, indexing="ij"))

    @cached_property
    def wavevector(self) -> np.ndarray:
        return self.k_unit * self.modes.astype(float)

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.wavevector**2, axis=0)

    @cached_property
    def kmag(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True on modes kept by the 2/3 rule: |m_i| <= n/3 on both axes."""
        cut = self.n / 3
        return np.all(np.abs(self.modes) <= cut, axis=0)

    @cached_property
    def coords(self) -> np.ndarray:
        x = np.arange(self.n) * self.spacing
        return np.stack(np.meshgrid(x, x, indexing="ij"))

    # array-level transforms, used by every module that needs raw speed

    def fft(self, values: np.ndarray) -> np.ndarray:
        return np.fft.fft2(values, axes=(-2, -1)) / self.n**2

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(coeffs * self.n**2, axes=(-2, -1)).real

    def ifft_complex(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(coeffs * self.n**2, axes=(-2, -1))

    def truncate(self, coeffs: np.ndarray) -> np.ndarray:
        return np.where(self.dealias_mask, coeffs, 0.0)

    def to_dict(self) -> dict:
        return {"n": int(self.n), "length": float(self.length)}


def _check_values(grid: Grid, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape == grid.shape:
        return values
    if values.ndim == 3 and values.shape[0] in (1, 2) and values.shape[1:] == grid.shape:
        return values[0] if values.shape[0] == 1 else values
    raise ConfigurationError(
        f"field of shape {values.shape} does not match grid {grid.shape} "
        "(expected (n, n) or (2, n, n))"
    )


@dataclass(eq=False)
class Field:
    """Real samples of a scalar (n, n) or vector (2, n, n) field on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values)

    @property
    def components(self) -> int:
        return 1 if self.values.ndim == 2 else self.values.shape[0]

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == 3

    @cached_property
    def spectrum(self) -> np.ndarray:
        return self.grid.fft(self.values)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __add__(self, other):
        if isinstance(other, Field):
            _same_grid(self, other)
            other = other.values
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            _same_grid(self, other)
            other = other.values
        return Field(self.grid, self.values - other)

    def __mul__(self, scalar):
        return Field(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    @classmethod
    def zeros(cls, grid: Grid, components: int = 1) -> "Field":
        shape = grid.shape if components == 1 else (components, *grid.shape)
        return cls(grid, np.zeros(shape))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        x1, x2 = grid.coords
        return cls(grid, np.asarray(fn(x1, x2), dtype=float))


@dataclass(eq=False)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray = field(repr=False)


def _same_grid(a, b):
    if a.grid != b.grid:
        raise ConfigurationError(f"grid mismatch: {a.grid} vs {b.grid}")


def dft_forward(f: Field) -> SpectralField:
    return SpectralField(f.grid, f.grid.fft(_check_values(f.grid, f.values)))


def dft_inverse(F: SpectralField) -> Field:
    coeffs = np.asarray(F.coeffs)
    if coeffs.shape[-2:] != F.grid.shape:
        raise ConfigurationError(f"spectrum of shape {coeffs.shape} does not match grid {F.grid.shape}")
    return Field(F.grid, F.grid.ifft(coeffs))


def spectral_gradient(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Gradient spectrum: (2, ...) prepended to the coefficient shape."""
    k = grid.wavevector
    if coeffs.ndim == 2:
        return 1j * k * coeffs
    return 1j * k[:, None] * coeffs[None]


def gradient(f: Field) -> Field:
    if f.is_vector:
        raise ConfigurationError("gradient expects a scalar field")
    g = f.grid
    return Field(g, g.ifft(spectral_gradient(g, f.spectrum)))


def divergence(v: Field) -> Field:
    if not v.is_vector:
        raise ConfigurationError("divergence expects a vector field")
    g = v.grid
    return Field(g, g.ifft(np.sum(1j * g.wavevector * v.spectrum, axis=0)))


def laplacian(f: Field) -> Field:
    g = f.grid
    return Field(g, g.ifft(-g.k2 * f.spectrum))


def translate(f: Field, shift) -> Field:
    """Exact periodic translation f(x - shift) via a spectral phase."""
    g = f.grid
    phase = np.exp(-1j * np.tensordot(np.asarray(shift, dtype=float), g.wavevector, axes=1))
    return Field(g, g.ifft(f.spectrum * phase))


def product_coeffs(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Spectrum of the dealiased product of two band-limited physical arrays.

    Inputs must already lie in the 2/3 band; only the output is truncated.
    Broadcasting follows numpy rules on the physical arrays.
    """
    return grid.truncate(grid.fft(a * b))


def pointwise_product(f: Field, g: Field) -> Field:
    """Dealiased product: both inputs truncated to |m_i| <= n/3, output truncated too."""
    _same_grid(f, g)
    grid = f.grid
    a = grid.ifft(grid.truncate(f.spectrum))
    b = grid.ifft(grid.truncate(g.spectrum))
    if a.ndim != b.ndim:
        a, b = (a[None], b) if a.ndim == 2 else (a, b[None])
    return Field(grid, grid.ifft(product_coeffs(grid, a, b)))


def band_limit(f: Field) -> Field:
    """Projection onto the 2/3 dealiasing band."""
    return Field(f.grid, f.grid.ifft(f.grid.truncate(f.spectrum)))


# ---------------------------------------------------------------------------
# file formats


def write_field(path, f: Field) -> None:
    """Write the little-endian binary container: header then row-major f64 samples."""
    values = np.ascontiguousarray(f.values.reshape(f.components, f.grid.n, f.grid.n), dtype="<f8")
    header = _HEADER.pack(MAGIC, f.grid.n, float(f.grid.length), f.components)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.tobytes(order="C"))


def read_field(path) -> Field:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ConfigurationError(f"{path}: truncated field header")
    magic, n, length, components = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ConfigurationError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    count = components * n * n
    payload = data[_HEADER.size:]
    if len(payload) != 8 * count:
        raise ConfigurationError(
            f"{path}: expected {count} samples for n={n}, components={components}, got {len(payload) // 8}"
        )
    values = np.frombuffer(payload, dtype="<f8").astype(float).reshape(components, n, n)
    return Field(Grid(int(n), float(length)), values)


def write_field_csv(path, f: Field) -> None:
    """Long-form CSV: component, i1, i2, value; grid in a leading comment line."""
    values = f.values.reshape(f.components, f.grid.n, f.grid.n)
    with open(path, "w", newline="") as fh:
        fh.write(f"# n={f.grid.n} length={f.grid.length!r} components={f.components}\n")
        w = csv.writer(fh)
        w.writerow(["component", "i1", "i2", "value"])
        for c in range(f.components):
            for i1 in range(f.grid.n):
                for i2 in range(f.grid.n):
                    w.writerow([c, i1, i2, repr(float(values[c, i1, i2]))])


def read_field_csv(path) -> Field:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ConfigurationError(f"{path}: missing grid comment line")
        meta = dict(item.split("=", 1) for item in first[1:].split())
        try:
            n, length, components = int(meta["n"]), float(meta["length"]), int(meta["components"])
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"{path}: malformed grid comment line {first.strip()!r}") from exc
        values = np.full((components, n, n), np.nan)
        reader = csv.DictReader(fh)
        for row in reader:
            values[int(row["component"]), int(row["i1"]), int(row["i2"])] = float(row["value"])
    if np.isnan(values).any():
        raise ConfigurationError(f"{path}: missing samples")
    return Field(Grid(n, length), values)


def compose(f: Field, func, oversample: int = 4) -> Field:
    """Band-limited func(f): evaluate on an oversampled grid, then project to the 2/3 band.

    The input is truncated to the band first.  With oversampling the aliasing
    of the high-frequency tail of func(f) back into the band is negligible for
    analytic ``func``.
    """
    grid = f.grid
    if oversample < 1 or oversample & (oversample - 1):
        raise ConfigurationError(f"oversample={oversample} must be a power of two")
    coeffs = grid.truncate(f.spectrum)
    n, big = grid.n, grid.n * oversample
    m = grid.modes
    idx = (m[0] % big, m[1] % big)
    mask = grid.dealias_mask
    fine = np.zeros(coeffs.shape[:-2] + (big, big), dtype=complex)
    fine[..., idx[0][mask], idx[1][mask]] = coeffs[..., mask]
    values = np.fft.ifft2(fine * big**2, axes=(-2, -1)).real
    out_fine = np.fft.fft2(func(values), axes=(-2, -1)) / big**2
    out = np.zeros_like(coeffs)
    out[..., mask] = out_fine[..., idx[0][mask], idx[1][mask]]
    return Field(grid, grid.ifft(out))
