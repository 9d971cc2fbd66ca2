"""Rough height fields: generation, statistics, composition and x/y/z I/O.

All lengths are in micrometres. A surface is an ``N x N`` grid of heights
measured from the deepest valley, so ``heights.min() == 0`` always holds.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, SurfaceFormatError, SurfaceShapeError

__all__ = [
    "RoughSurface",
    "SurfaceStats",
    "generate_rmd",
    "composite_topography",
    "surface_stats",
    "read_surface_xyz",
    "write_surface_xyz",
]


@dataclass(frozen=True, eq=False)
class RoughSurface:
    """Square height field with a physical lateral size.

    Parameters
    ----------
    heights : array_like, shape (N, N)
        Elevations [um]. They are shifted on construction so that the
        deepest valley sits at zero.
    size : float
        Lateral size ``l`` of the square patch [um].
    """

    heights: np.ndarray
    size: float
    label: str = field(default="", compare=False)

    def __post_init__(self):
        z = np.array(self.heights, dtype=float)
        if z.ndim != 2 or z.shape[0] != z.shape[1] or z.shape[0] < 1:
            raise SurfaceShapeError(f"heights must be a square 2D grid, got shape {z.shape}")
        if not np.all(np.isfinite(z)):
            raise ParameterError("heights must be finite")
        if not self.size > 0:
            raise ParameterError(f"lateral size must be positive, got {self.size}")
        z -= z.min()
        z.setflags(write=False)
        object.__setattr__(self, "heights", z)
        object.__setattr__(self, "size", float(self.size))

    @property
    def N(self):
        return self.heights.shape[0]

    @property
    def n(self):
        """Resolution exponent such that ``N = 2**n + 1``, or None."""
        m = self.N - 1
        if m >= 1 and m & (m - 1) == 0:
            return m.bit_length() - 1
        return None

    @property
    def cell_size(self):
        return self.size / self.N

    @property
    def max_height(self):
        return float(self.heights.max())

    def scaled(self, factor):
        return RoughSurface(self.heights * factor, self.size, self.label)


@dataclass(frozen=True)
class SurfaceStats:
    mean: float
    max: float
    rms: float


def generate_rmd(n, hurst, seed, max_height, size=1000.0, coarse_level=0):
    """Fractal surface by random midpoint displacement (diamond-square).

    The four corners get independent standard-normal heights, then every
    subdivision level sets the diamond and square midpoints to the mean of
    their neighbours plus a Gaussian perturbation whose standard deviation
    shrinks by ``2**-hurst`` per level. Finally the field is rescaled to
    span ``[0, max_height]``.

    With ``coarse_level = k > 0`` the surface is instead assembled from
    ``2**k x 2**k`` patches whose corners are all independent (a roll-off
    of the spectrum above the patch size).

    Random numbers come from numpy's PCG64 generator seeded with `seed`, so
    identical arguments give bit-identical grids.

    Parameters
    ----------
    n : int
        Resolution exponent, ``1 <= n <= 10``; the grid is ``(2**n + 1)``
        points per side.
    hurst : float
        Hurst exponent in ``(0, 1)``.
    seed : int
        RNG seed.
    max_height : float
        Peak-to-valley height after rescaling [um].
    size : float, optional
        Lateral size of the patch [um] (default 1 mm).
    coarse_level : int, optional
        Number of patch subdivisions per side as a power of two; 0 gives the
        classic single-square RMD. Clamped to `n`.
    """
    if not (isinstance(n, (int, np.integer)) and 1 <= n <= 10):
        raise ParameterError(f"resolution exponent must be an integer in [1, 10], got {n}")
    if not 0.0 < hurst < 1.0:
        raise ParameterError(f"Hurst exponent must lie in (0, 1), got {hurst}")
    if not max_height > 0:
        raise ParameterError(f"max_height must be positive, got {max_height}")
    if coarse_level < 0:
        raise ParameterError(f"coarse_level must be non-negative, got {coarse_level}")

    rng = np.random.Generator(np.random.PCG64(seed))
    N = 2**n + 1
    k = min(int(coarse_level), n)
    step = (N - 1) >> k
    z = np.zeros((N, N))
    z[::step, ::step] = rng.standard_normal((2**k + 1, 2**k + 1))

    sigma = 2.0 ** (-k * hurst)
    while step > 1:
        half = step // 2
        sigma *= 2.0 ** (-hurst)
        # diamond: centres of squares
        corners = (z[0:N - 1:step, 0:N - 1:step] + z[step::step, 0:N - 1:step]
                   + z[0:N - 1:step, step::step] + z[step::step, step::step])
        z[half::step, half::step] = 0.25 * corners + sigma * rng.standard_normal(corners.shape)
        # square: edge midpoints, averaged over the neighbours that exist
        for i0, j0 in ((0, half), (half, 0)):
            I, J = np.meshgrid(np.arange(i0, N, step), np.arange(j0, N, step), indexing="ij")
            acc = np.zeros(I.shape)
            cnt = np.zeros(I.shape)
            for di, dj in ((-half, 0), (half, 0), (0, -half), (0, half)):
                ii, jj = I + di, J + dj
                ok = (ii >= 0) & (ii < N) & (jj >= 0) & (jj < N)
                acc[ok] += z[ii[ok], jj[ok]]
                cnt += ok
            z[I, J] = acc / cnt + sigma * rng.standard_normal(I.shape)
        step = half

    z -= z.min()
    z *= max_height / z.max()
    return RoughSurface(z, size, label=f"rmd(n={n},H={hurst},seed={seed})")


def composite_topography(s1, s2):
    """Sum two height fields and re-datum at the deepest valley."""
    if s1.heights.shape != s2.heights.shape or not np.isclose(s1.size, s2.size):
        raise SurfaceShapeError(
            f"surfaces must share grid and size: {s1.heights.shape}/{s1.size} "
            f"vs {s2.heights.shape}/{s2.size}")
    e = s1.heights + s2.heights
    return RoughSurface(e - e.min(), s1.size)


def surface_stats(s):
    z = s.heights
    mean = float(z.mean())
    return SurfaceStats(mean=mean, max=float(z.max()),
                        rms=float(np.sqrt(np.mean((z - mean) ** 2))))


def write_surface_xyz(s, path):
    """Write ``x y z`` rows, row-major with x varying fastest."""
    a = s.cell_size
    N = s.N
    z = s.heights.tolist()
    with open(path, "w") as fh:
        fh.write(f"# rough surface N={N} size={s.size!r} um\n")
        for i in range(N):
            for j in range(N):
                fh.write(f"{j * a!r} {i * a!r} {z[i][j]!r}\n")


def read_surface_xyz(path):
    """Read a uniform square grid from a three-column x/y/z file.

    Lines starting with ``#`` and blank lines are ignored. The lateral size
    is taken as ``N`` times the grid spacing.
    """
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise SurfaceFormatError(f"expected 3 columns, got {len(parts)}", lineno)
        try:
            rows.append((float(parts[0]), float(parts[1]), float(parts[2]), lineno))
        except ValueError:
            raise SurfaceFormatError(f"cannot parse {text!r}", lineno) from None
    if not rows:
        raise SurfaceFormatError("no data rows")
    data = np.array([r[:3] for r in rows])
    N = int(round(np.sqrt(len(rows))))
    if N * N != len(rows):
        raise SurfaceFormatError(f"{len(rows)} points do not form a square grid")

    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    if len(xs) != N or len(ys) != N:
        raise SurfaceFormatError(f"expected {N} distinct x and y values, got {len(xs)} and {len(ys)}")
    if N > 1:
        dx, dy = np.diff(xs), np.diff(ys)
        a = dx[0]
        tol = 1e-9 * max(a, 1.0)
        if np.ptp(dx) > tol or np.ptp(dy) > tol or abs(dy[0] - a) > tol:
            raise SurfaceFormatError("grid spacing is not uniform")
    else:
        a = 1.0

    z = np.full((N, N), np.nan)
    jj = np.searchsorted(xs, data[:, 0])
    ii = np.searchsorted(ys, data[:, 1])
    for k, (i, j) in enumerate(zip(ii, jj)):
        if not np.isnan(z[i, j]):
            raise SurfaceFormatError(f"duplicate point ({data[k, 0]}, {data[k, 1]})", rows[k][3])
        z[i, j] = data[k, 2]
    return RoughSurface(z, N * a, label=str(path))
