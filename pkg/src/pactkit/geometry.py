"""Imaging grid, circular transducer ring, and synthetic phantoms.

All types are immutable after construction. Image files round-trip through
a plain CSV (lossless) or a 16-bit binary PGM (quantized, for viewing).
"""

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryError",
    "ImagingGrid",
    "TransducerRing",
    "ImageField",
    "make_grid",
    "make_ring",
    "make_point_phantom",
    "make_vessel_phantom",
    "field_from_image",
    "write_image_csv",
    "read_image_csv",
    "write_image_pgm",
    "read_image_pgm",
    "read_image",
]

VESSEL_MAX_FILL = 0.15  # hard cap on the nonzero pixel fraction


class GeometryError(ValueError):
    """A scene violates a geometric precondition (e.g. ring not enclosing)."""


@dataclass(frozen=True)
class ImagingGrid:
    """Square-pitched pixel lattice; pixel (i, j) center = origin + (i*dx, j*dx)."""

    nx: int
    ny: int
    dx: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid dimensions must be >= 1, got {self.nx}x{self.ny}")
        if not self.dx > 0:
            raise ValueError(f"pixel pitch must be > 0, got {self.dx}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def pixel_center(self, i: int, j: int) -> tuple[float, float]:
        return (self.origin[0] + i * self.dx, self.origin[1] + j * self.dx)

    def pixel_coords(self) -> np.ndarray:
        """(nx*ny, 2) pixel center coordinates, row-major (index = j*nx + i)."""
        i = np.arange(self.nx)
        j = np.arange(self.ny)
        xx = self.origin[0] + i * self.dx
        yy = self.origin[1] + j * self.dx
        out = np.empty((self.ny, self.nx, 2))
        out[:, :, 0] = xx[None, :]
        out[:, :, 1] = yy[:, None]
        return out.reshape(-1, 2)


def make_grid(nx: int, ny: int, dx: float, origin=(0.0, 0.0)) -> ImagingGrid:
    """Build an imaging grid; raises ValueError on non-positive dimensions or pitch."""
    return ImagingGrid(int(nx), int(ny), float(dx), tuple(origin))


def centered_grid(nx: int, ny: int, dx: float) -> ImagingGrid:
    """Grid whose pixel lattice is centered on the coordinate origin."""
    return make_grid(nx, ny, dx, (-(nx - 1) / 2 * dx, -(ny - 1) / 2 * dx))


@dataclass(frozen=True)
class TransducerRing:
    """Uniform circular sensor array; sensor m sits at angle 2*pi*m / count."""

    count: int
    radius: float
    center: tuple[float, float] = (0.0, 0.0)
    positions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"sensor count must be >= 1, got {self.count}")
        if not self.radius > 0:
            raise ValueError(f"ring radius must be > 0, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        ang = 2.0 * np.pi * np.arange(self.count) / self.count
        pos = np.stack(
            [self.center[0] + self.radius * np.cos(ang), self.center[1] + self.radius * np.sin(ang)],
            axis=1,
        )
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)


def check_enclosure(grid: ImagingGrid, ring: TransducerRing):
    """Verify every pixel center lies strictly inside the ring."""
    pix = grid.pixel_coords()
    r = np.hypot(pix[:, 0] - ring.center[0], pix[:, 1] - ring.center[1])
    worst = int(np.argmax(r))
    if r[worst] >= ring.radius:
        i, j = worst % grid.nx, worst // grid.nx
        raise GeometryError(
            f"ring (radius {ring.radius:g}) does not enclose pixel ({i}, {j}) "
            f"at distance {r[worst]:g} from the ring center"
        )


def make_ring(count: int, radius: float, center, grid: ImagingGrid) -> TransducerRing:
    """Build a transducer ring and verify it encloses every pixel of `grid`."""
    ring = TransducerRing(int(count), float(radius), tuple(center))
    check_enclosure(grid, ring)
    return ring


@dataclass(frozen=True)
class ImageField:
    """Scalar field over a grid, stored row-major (index = j*nx + i)."""

    grid: ImagingGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if v.size != self.grid.size:
            raise ValueError(
                f"field length {v.size} does not match grid {self.grid.nx}x{self.grid.ny}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def image(self) -> np.ndarray:
        """2-D (ny, nx) view of the field."""
        return self.values.reshape(self.grid.ny, self.grid.nx)


def field_from_image(grid: ImagingGrid, img: np.ndarray) -> ImageField:
    return ImageField(grid, np.asarray(img, dtype=np.float64).reshape(-1))


def make_point_phantom(grid: ImagingGrid, i: int, j: int, amplitude: float) -> ImageField:
    """All-zero field except `amplitude` at pixel (i, j)."""
    if not (0 <= i < grid.nx and 0 <= j < grid.ny):
        raise IndexError(f"pixel ({i}, {j}) out of bounds for {grid.nx}x{grid.ny} grid")
    v = np.zeros(grid.size)
    v[j * grid.nx + i] = amplitude
    return ImageField(grid, v)


def _disk_patch(img: np.ndarray, cx: float, cy: float, radius: float):
    """Bounding-box patch of `img` and the in-disk mask, or None if off-grid."""
    ny, nx = img.shape
    i0 = max(int(np.floor(cx - radius)), 0)
    i1 = min(int(np.ceil(cx + radius)), nx - 1)
    j0 = max(int(np.floor(cy - radius)), 0)
    j1 = min(int(np.ceil(cy + radius)), ny - 1)
    if i0 > i1 or j0 > j1:
        return None
    ii = np.arange(i0, i1 + 1)
    jj = np.arange(j0, j1 + 1)
    mask = (ii[None, :] - cx) ** 2 + (jj[:, None] - cy) ** 2 <= radius**2
    return img[j0 : j1 + 1, i0 : i1 + 1], mask


def make_vessel_phantom(grid: ImagingGrid, seed: int, branches: int = 5) -> ImageField:
    """Synthetic vascular phantom: seeded curvilinear strokes on zero background.

    Deterministic in (grid, seed, branches). Strokes are 1-3 pixels wide with
    values in [0, 1]; drawing stops before the nonzero fraction can exceed
    VESSEL_MAX_FILL, so the field is always sparse enough for the
    undersampled-reconstruction experiments.
    """
    if branches < 1:
        raise ValueError(f"branches must be >= 1, got {branches}")
    rng = np.random.default_rng(seed)
    nx, ny = grid.nx, grid.ny
    img = np.zeros((ny, nx))
    budget = int(VESSEL_MAX_FILL * nx * ny)
    painted = 0
    span = max(nx, ny)
    for _ in range(branches):
        x = rng.uniform(0.2 * nx, 0.8 * nx)
        y = rng.uniform(0.2 * ny, 0.8 * ny)
        heading = rng.uniform(0.0, 2.0 * np.pi)
        brightness = rng.uniform(0.55, 1.0)
        half_width = rng.uniform(0.5, 1.5)  # stroke width 1-3 px
        steps = int(rng.integers(max(4, span // 2), max(5, span)))
        for _step in range(steps):
            heading += rng.normal(0.0, 0.15)
            x += 0.6 * np.cos(heading)
            y += 0.6 * np.sin(heading)
            if not (0.0 <= x <= nx - 1 and 0.0 <= y <= ny - 1):
                break
            hit = _disk_patch(img, x, y, half_width)
            if hit is None:
                continue
            patch, mask = hit
            fresh = int(np.count_nonzero(mask & (patch == 0.0)))
            if painted + fresh > budget:
                return ImageField(grid, img.reshape(-1))
            patch[mask] = np.maximum(patch[mask], brightness)
            painted += fresh
    return ImageField(grid, img.reshape(-1))


# ---------------------------------------------------------------------------
# image file formats


def write_image_csv(field: ImageField, path):
    """Plain CSV, one image row per line, full-precision decimals (lossless)."""
    np.savetxt(path, field.image, delimiter=",", fmt="%.17g")


def read_image_csv(path, dx: float = 1.0, origin=(0.0, 0.0)) -> ImageField:
    img = np.loadtxt(path, delimiter=",", ndmin=2)
    grid = make_grid(img.shape[1], img.shape[0], dx, origin)
    return field_from_image(grid, img)


def write_image_pgm(field: ImageField, path):
    """16-bit binary PGM (P5), big-endian, linearly scaled to [0, 65535].

    The original value range and grid geometry ride in comment lines so the
    reader can undo the scaling (up to quantization).
    """
    img = field.image
    lo = float(img.min())
    hi = float(img.max())
    if hi > lo:
        q = np.round((img - lo) / (hi - lo) * 65535.0).astype(">u2")
    else:
        q = np.zeros(img.shape, dtype=">u2")
    g = field.grid
    header = (
        b"P5\n"
        + f"# range {lo!r} {hi!r}\n".encode()
        + f"# grid dx={g.dx!r} origin={g.origin[0]!r},{g.origin[1]!r}\n".encode()
        + f"{g.nx} {g.ny}\n65535\n".encode()
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(q.tobytes())


def read_image_pgm(path, dx: float | None = None, origin=None) -> ImageField:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    pos = 2
    fields: list[int] = []
    lo = hi = None
    meta_dx, meta_origin = 1.0, (0.0, 0.0)
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            end = data.index(b"\n", pos)
            comment = data[pos + 1 : end].decode().strip()
            if comment.startswith("range "):
                lo, hi = (float(t) for t in comment.split()[1:3])
            m = re.match(r"grid dx=([^ ]+) origin=([^,]+),(.+)", comment)
            if m:
                meta_dx = float(m.group(1))
                meta_origin = (float(m.group(2)), float(m.group(3)))
            pos = end + 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        fields.append(int(data[pos:end]))
        pos = end
    width, height, maxval = fields
    if maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit PGM (maxval 65535), got {maxval}")
    pos += 1  # single whitespace byte separates header from raster
    raster = np.frombuffer(data, dtype=">u2", count=width * height, offset=pos)
    img = raster.reshape(height, width).astype(np.float64)
    if lo is None or hi is None:
        lo, hi = 0.0, 65535.0
    img = lo + img / 65535.0 * (hi - lo) if hi > lo else np.full_like(img, lo)
    grid = make_grid(
        width,
        height,
        dx if dx is not None else meta_dx,
        origin if origin is not None else meta_origin,
    )
    return field_from_image(grid, img)


def read_image(path, dx: float | None = None, origin=None) -> ImageField:
    """Read an image field from either format (sniffed from the content)."""
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"P5":
        return read_image_pgm(path, dx=dx, origin=origin)
    return read_image_csv(path, dx=dx if dx is not None else 1.0, origin=origin or (0.0, 0.0))
