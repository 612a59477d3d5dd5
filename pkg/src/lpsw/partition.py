"""Dyadic partition of unity and the block, cut-off, paraproduct and remainder operators.

The ball multiplier chi is 1 on |xi| <= 1, vanishes for |xi| >= 4/3 and is
C-infinity in between (built from the exp(-1/t) ramp).  The annulus multiplier
is phi(xi) = chi(xi/2) - chi(xi), so that chi + sum_{j<=J} phi(2^-j .) telescopes
to chi(2^-(J+1) .), which is identically 1 on |xi| <= 2^(J+1).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError
from .grid import Field, Grid, product_coeffs

BALL_INNER = 1.0
BALL_OUTER = 4.0 / 3.0
ANNULUS = (3.0 / 4.0, 8.0 / 3.0)
KAPPA = 1.0  # unit frequency scale, 2*pi / L_ref with L_ref = 2*pi


def _ramp(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    a = _ramp(t)
    return a / (a + _ramp(1.0 - np.asarray(t, dtype=float)))


def chi(xi_norm):
    """Radial ball multiplier evaluated at |xi| (in units of KAPPA)."""
    r = np.asarray(xi_norm, dtype=float) / KAPPA
    return smooth_step((BALL_OUTER - r) / (BALL_OUTER - BALL_INNER))


def phi(xi_norm):
    r = np.asarray(xi_norm, dtype=float)
    return chi(r / 2.0) - chi(r)


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    """Multiplier tables of blocks j = -1..j_max on the frequency lattice of ``grid``.

    ``tables[j + 1]`` holds the multiplier of block j.  The instance is
    read-only after construction and may be shared between threads.
    """

    grid: Grid
    j_max: int
    tables: np.ndarray

    @property
    def chi_table(self) -> np.ndarray:
        return self.tables[0]

    @property
    def phi_tables(self) -> np.ndarray:
        return self.tables[1:]

    @property
    def block_indices(self) -> range:
        return range(-1, self.j_max + 1)

    @property
    def num_blocks(self) -> int:
        return self.j_max + 2

    @property
    def coverage_radius(self) -> float:
        return 2.0 ** (self.j_max + 1) * KAPPA

    @cached_property
    def covered(self) -> np.ndarray:
        """Lattice points where the partition sums to one."""
        return self.grid.kmag <= self.coverage_radius

    @cached_property
    def band(self) -> np.ndarray:
        """Operative band: inside both the dealias band and the coverage."""
        return self.grid.dealias_mask & self.covered

    @cached_property
    def weights(self) -> np.ndarray:
        return 2.0 ** np.arange(-1, self.j_max + 1, dtype=float)

    def table(self, j: int) -> np.ndarray:
        if j <= -2:
            return np.zeros(self.grid.shape)
        if j > self.j_max:
            raise ConfigurationError(f"block index j={j} exceeds j_max={self.j_max}")
        return self.tables[j + 1]

    def cutoff_table(self, j: int) -> np.ndarray:
        """Multiplier of S_j = sum_{j' <= j-1} Delta_j' (summed block by block)."""
        if j < 0:
            raise ConfigurationError(f"low-frequency cut-off needs j >= 0, got {j}")
        top = min(j - 1, self.j_max)
        return np.sum(self.tables[: top + 2], axis=0)

    def block_spectra(self, coeffs: np.ndarray) -> np.ndarray:
        """All block spectra at once; block axis first."""
        tab = self.tables if coeffs.ndim == 2 else self.tables[:, None]
        return tab * coeffs[None]

    def blocks(self, coeffs: np.ndarray) -> np.ndarray:
        """Physical values of Delta_j f for all j, block axis first."""
        return self.grid.ifft(self.block_spectra(coeffs))

    def partition_residual(self) -> float:
        total = np.sum(self.tables, axis=0)
        inside = self.grid.kmag <= 2.0**self.j_max * BALL_OUTER * KAPPA
        return float(np.max(np.abs(total[inside] - 1.0)))

    def orthogonality_residual(self) -> float:
        worst = 0.0
        for a in range(self.num_blocks):
            for b in range(a + 2, self.num_blocks):
                worst = max(worst, float(np.max(np.abs(self.tables[a] * self.tables[b]))))
        return worst

    def out_of_coverage(self, coeffs: np.ndarray) -> float:
        """Relative L^2 mass (amplitude ratio) of a spectrum outside the coverage."""
        energy = np.sum(np.abs(coeffs) ** 2)
        if energy == 0:
            return 0.0
        outside = np.sum(np.abs(coeffs[..., ~self.covered]) ** 2)
        return float(math.sqrt(outside / energy))


def build_partition(grid: Grid) -> DyadicPartition:
    ratio = grid.k_nyquist / (BALL_OUTER * KAPPA)
    j_max = math.floor(math.log2(ratio) + 1e-12)
    if j_max < 1:
        raise ConfigurationError(
            f"grid n={grid.n}, L={grid.length:g} reaches only |k| <= {grid.k_nyquist:g}; "
            "at least blocks j = -1, 0, 1 are required (increase n or decrease L)"
        )
    kmag = grid.kmag
    tables = [chi(kmag)]
    for j in range(j_max + 1):
        tables.append(chi(kmag / 2.0 ** (j + 1)) - chi(kmag / 2.0**j))
    tables = np.stack(tables)
    tables.setflags(write=False)
    return DyadicPartition(grid, j_max, tables)


def _check(P: DyadicPartition, *fields: Field):
    for f in fields:
        if f.grid != P.grid:
            raise ConfigurationError(f"grid mismatch: field on {f.grid}, partition on {P.grid}")


def dyadic_block(P: DyadicPartition, j: int, f: Field) -> Field:
    _check(P, f)
    if j <= -2:
        return Field.zeros(P.grid, f.components)
    return Field(P.grid, P.grid.ifft(P.table(j) * f.spectrum))


def low_freq_cutoff(P: DyadicPartition, j: int, f: Field) -> Field:
    _check(P, f)
    return Field(P.grid, P.grid.ifft(P.cutoff_table(j) * f.spectrum))


def _band_blocks(P, f):
    coeffs = P.grid.truncate(f.spectrum)
    return P.blocks(coeffs)


def paraproduct(P: DyadicPartition, u: Field, v: Field) -> Field:
    """T_u v = sum_j S_{j-1}u * Delta_j v with dealiased products."""
    _check(P, u, v)
    bu = _band_blocks(P, u)
    bv = _band_blocks(P, v)
    # low[i] = S_{j-1}u for block j = i - 1, i.e. sum of u-blocks up to j - 2
    low = np.cumsum(bu, axis=0)
    total = np.zeros(np.broadcast_shapes(u.values.shape, v.values.shape), dtype=complex)
    for j in range(1, P.j_max + 1):
        total += product_coeffs(P.grid, low[j - 1], bv[j + 1])
    return Field(P.grid, P.grid.ifft(total))


def remainder(P: DyadicPartition, u: Field, v: Field) -> Field:
    """R(u, v) = sum_{|k-j| <= 1} Delta_k u * Delta_j v with dealiased products."""
    _check(P, u, v)
    bu = _band_blocks(P, u)
    bv = _band_blocks(P, v)
    nb = P.num_blocks
    total = np.zeros(np.broadcast_shapes(u.values.shape, v.values.shape), dtype=complex)
    for a in range(nb):
        near = bv[max(a - 1, 0): min(a + 2, nb)].sum(axis=0)
        total += product_coeffs(P.grid, bu[a], near)
    return Field(P.grid, P.grid.ifft(total))


def dump_partition_rows(P: DyadicPartition):
    """(j, |k|, multiplier) for every distinct lattice radius where block j is nonzero."""
    m2 = np.sum(P.grid.modes**2, axis=0).ravel()
    rows = []
    for j in P.block_indices:
        tab = P.table(j).ravel()
        seen = {}
        for idx in np.flatnonzero(tab > 0):
            key = int(m2[idx])
            if key not in seen:
                seen[key] = float(tab[idx])
        for key in sorted(seen):
            rows.append((j, P.grid.k_unit * math.sqrt(key), seen[key]))
    return rows


def write_partition_csv(path, P: DyadicPartition) -> int:
    rows = dump_partition_rows(P)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "k_norm", "multiplier"])
        for j, k, val in rows:
            w.writerow([j, repr(k), repr(val)])
    return len(rows)
