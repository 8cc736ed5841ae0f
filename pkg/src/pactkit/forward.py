"""Discrete forward model: measurement matrices and sensor data.

The time-domain matrix realizes a delta at the acoustic delay with linear
interpolation between the two bracketing time samples, scaled by 1/(2*pi*c).
The frequency-domain matrix holds i*c*k_n * exp(-i*k_n*d) / d per entry.
Both are stored dense; the benchmarks are explicitly about dense products.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import GeometryError, ImageField, ImagingGrid, TransducerRing, check_enclosure

__all__ = [
    "AcousticConfig",
    "MeasurementMatrix",
    "SensorData",
    "TruncationWarning",
    "build_time_matrix",
    "build_freq_matrix",
    "forward_project",
    "add_noise",
    "write_matrix",
    "read_matrix",
    "write_signal",
    "read_signal",
]

DEFAULT_SOUND_SPEED = 1500.0  # m/s


class TruncationWarning(UserWarning):
    """Some acoustic delays fell outside the acquisition window."""


@dataclass(frozen=True)
class AcousticConfig:
    """Propagation speed and sampling of the acquisition window.

    q_s time samples are spaced dt apart (sample s covers time s*dt,
    s = 1..q_s). The q_n wavenumbers are the DFT bin frequencies of that
    window, DC excluded: k_n = 2*pi*n / (q_s*dt) / c for n = 1..q_n.
    """

    c: float = DEFAULT_SOUND_SPEED
    dt: float = 1e-7
    q_s: int = 64
    q_n: int = 64

    def __post_init__(self):
        if not (self.c > 0 and self.dt > 0):
            raise ValueError(f"c and dt must be > 0, got c={self.c}, dt={self.dt}")
        if self.q_s < 1 or self.q_n < 1:
            raise ValueError(f"sample counts must be >= 1, got q_s={self.q_s}, q_n={self.q_n}")

    @property
    def k_values(self) -> np.ndarray:
        n = np.arange(1, self.q_n + 1, dtype=np.float64)
        return 2.0 * np.pi * n / (self.q_s * self.dt) / self.c

    @property
    def window(self) -> float:
        """Acquisition window length q_s*dt in seconds."""
        return self.q_s * self.dt


@dataclass(frozen=True)
class MeasurementMatrix:
    """Dense discretization of the forward operator.

    Row layout is sensor-major: row m*q + (n-1) holds sensor m's n-th time
    sample (time domain) or wavenumber (frequency domain). provenance keeps
    the grid/ring/acoustic objects the builder used, when known.
    """

    domain: str  # "time" | "frequency"
    entries: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.domain not in ("time", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")
        e = np.asarray(self.entries)
        want = np.complex128 if self.domain == "frequency" else np.float64
        e = np.ascontiguousarray(e, dtype=want)
        if e.ndim != 2:
            raise ValueError("matrix entries must be 2-D")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def grid(self) -> ImagingGrid | None:
        return self.provenance.get("grid")

    @property
    def ring(self) -> TransducerRing | None:
        return self.provenance.get("ring")

    @property
    def acoustic(self) -> AcousticConfig | None:
        return self.provenance.get("acoustic")

    def layout(self) -> tuple[int, int]:
        """(sensor count, samples per sensor); needs builder provenance."""
        ring = self.ring
        ac = self.acoustic
        if ring is None or ac is None:
            raise ValueError("matrix has no builder provenance; pass the layout explicitly")
        q = ac.q_s if self.domain == "time" else ac.q_n
        return ring.count, q


@dataclass(frozen=True)
class SensorData:
    """Stacked per-sensor measurements; sensor m owns the contiguous block
    [m*samples, (m+1)*samples)."""

    domain: str
    sensors: int
    samples: int
    values: np.ndarray

    def __post_init__(self):
        if self.domain not in ("time", "frequency"):
            raise ValueError(f"unknown domain {self.domain!r}")
        want = np.complex128 if self.domain == "frequency" else np.float64
        v = np.ascontiguousarray(np.asarray(self.values).ravel(), dtype=want)
        if v.size != self.sensors * self.samples:
            raise ValueError(
                f"signal length {v.size} != sensors*samples = {self.sensors * self.samples}"
            )
        if not np.all(np.isfinite(v.view(np.float64))):
            raise ValueError("sensor data must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def length(self) -> int:
        return self.values.size


def _pixel_sensor_distances(grid: ImagingGrid, ring: TransducerRing) -> np.ndarray:
    """(sensors, pixels) distance table; zero distance is a geometry error."""
    check_enclosure(grid, ring)
    pix = grid.pixel_coords()
    d = np.hypot(
        pix[None, :, 0] - ring.positions[:, 0:1],
        pix[None, :, 1] - ring.positions[:, 1:2],
    )
    if not (d > 0).all():
        m, p = np.unravel_index(int(np.argmin(d)), d.shape)
        raise GeometryError(f"sensor {m} coincides with pixel index {p}")
    return d


def build_time_matrix(
    grid: ImagingGrid, ring: TransducerRing, acoustic: AcousticConfig
) -> MeasurementMatrix:
    """Time-domain measurement matrix.

    For pixel p and sensor m the delay tau = d/c lands between samples
    s0 = floor(tau/dt) and s0+1; those rows receive weights (1-frac)/(2*pi*c)
    and frac/(2*pi*c). Weights whose sample falls outside 1..q_s are dropped
    and a TruncationWarning is issued (the count is kept in provenance).
    """
    d = _pixel_sensor_distances(grid, ring)
    m_count, p_count = d.shape
    q_s = acoustic.q_s
    u = d / (acoustic.c * acoustic.dt)  # delay in sample units
    s0 = np.floor(u).astype(np.int64)
    frac = u - s0
    w = 1.0 / (2.0 * np.pi * acoustic.c)

    K = np.zeros((m_count * q_s, p_count))
    cols = np.broadcast_to(np.arange(p_count), d.shape)
    m_idx = np.arange(m_count)[:, None]

    in0 = (s0 >= 1) & (s0 <= q_s)
    in1 = (s0 + 1 >= 1) & (s0 + 1 <= q_s)
    rows0 = m_idx * q_s + (s0 - 1)
    rows1 = m_idx * q_s + s0
    K[rows0[in0], cols[in0]] = (1.0 - frac[in0]) * w
    K[rows1[in1], cols[in1]] = frac[in1] * w

    # a pair is truncated if it loses a weight: the (1-frac) weight whenever
    # s0 is out of window, the frac weight only when it is actually nonzero
    truncated = int(np.count_nonzero(~in0 | (~in1 & (frac > 0.0))))
    if truncated:
        warnings.warn(
            f"{truncated} pixel-sensor delays fall (partly) outside the "
            f"{acoustic.window:g} s acquisition window; their weights are dropped",
            TruncationWarning,
            stacklevel=2,
        )
    return MeasurementMatrix(
        "time",
        K,
        provenance={
            "grid": grid,
            "ring": ring,
            "acoustic": acoustic,
            "truncated_pairs": truncated,
        },
    )


def build_freq_matrix(
    grid: ImagingGrid, ring: TransducerRing, acoustic: AcousticConfig
) -> MeasurementMatrix:
    """Frequency-domain measurement matrix: i*c*k_n * exp(-i*k_n*d) / d."""
    d = _pixel_sensor_distances(grid, ring)
    m_count, p_count = d.shape
    k = acoustic.k_values
    q_n = k.size
    K = np.empty((m_count * q_n, p_count), dtype=np.complex128)
    for m in range(m_count):  # per-sensor blocks keep the temporaries small
        dm = d[m]
        block = (1j * acoustic.c * k)[:, None] * np.exp(-1j * k[:, None] * dm[None, :])
        block /= dm[None, :]
        K[m * q_n : (m + 1) * q_n] = block
    return MeasurementMatrix(
        "frequency", K, provenance={"grid": grid, "ring": ring, "acoustic": acoustic}
    )


def _matvec(K: MeasurementMatrix, x: np.ndarray, pool: kernels.WorkerPool | None) -> np.ndarray:
    v = x.astype(np.complex128) if K.domain == "frequency" else x
    if pool is None:
        return kernels.matvec_serial(K.entries, v)
    return kernels.matvec_parallel(K.entries, v, pool)


def _adjoint_matvec(
    K: MeasurementMatrix, y: np.ndarray, pool: kernels.WorkerPool | None
) -> np.ndarray:
    v = y.astype(np.complex128) if K.domain == "frequency" else y
    if pool is None:
        return kernels.matvec_adjoint_serial(K.entries, v)
    return kernels.matvec_adjoint_parallel(K.entries, v, pool)


def forward_project(
    K: MeasurementMatrix, x: ImageField, pool: kernels.WorkerPool | None = None
) -> SensorData:
    """y = K @ vec(x) through the kernel layer (serial unless a pool is given)."""
    if K.cols != x.grid.size:
        raise ValueError(f"matrix has {K.cols} columns but field has {x.grid.size} pixels")
    sensors, samples = K.layout()
    y = _matvec(K, x.values, pool)
    return SensorData(K.domain, sensors, samples, y)


def add_noise(y: SensorData, sigma: float, seed: int) -> SensorData:
    """Seeded i.i.d. Gaussian perturbation (independent real/imag parts)."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return y
    rng = np.random.default_rng(seed)
    if y.domain == "frequency":
        noise = rng.normal(0.0, sigma, y.length) + 1j * rng.normal(0.0, sigma, y.length)
    else:
        noise = rng.normal(0.0, sigma, y.length)
    return SensorData(y.domain, y.sensors, y.samples, y.values + noise)


# ---------------------------------------------------------------------------
# file formats: "PACTMAT <domain> <rows> <cols>" / "PACTSIG <domain> <p> <q>"
# header line, then raw little-endian float64, row-major, complex interleaved


def _raw_bytes(arr: np.ndarray) -> bytes:
    if arr.dtype == np.complex128:
        return np.ascontiguousarray(arr).view(np.float64).astype("<f8").tobytes()
    return np.ascontiguousarray(arr).astype("<f8").tobytes()


def _raw_read(buf: bytes, offset: int, count: int, complex_: bool) -> np.ndarray:
    n = count * (2 if complex_ else 1)
    flat = np.frombuffer(buf, dtype="<f8", count=n, offset=offset).astype(np.float64)
    if complex_:
        return flat.view(np.complex128)
    return flat


def write_matrix(K: MeasurementMatrix, path):
    with open(path, "wb") as f:
        f.write(f"PACTMAT {K.domain} {K.rows} {K.cols}\n".encode())
        f.write(_raw_bytes(K.entries))


def read_matrix(path) -> MeasurementMatrix:
    with open(path, "rb") as f:
        data = f.read()
    end = data.index(b"\n")
    tag, domain, rows, cols = data[:end].decode().split()
    if tag != "PACTMAT":
        raise ValueError(f"{path}: not a PACTMAT file")
    rows, cols = int(rows), int(cols)
    entries = _raw_read(data, end + 1, rows * cols, domain == "frequency").reshape(rows, cols)
    return MeasurementMatrix(domain, entries)


def write_signal(y: SensorData, path):
    with open(path, "wb") as f:
        f.write(f"PACTSIG {y.domain} {y.sensors} {y.samples}\n".encode())
        f.write(_raw_bytes(y.values))


def read_signal(path) -> SensorData:
    with open(path, "rb") as f:
        data = f.read()
    end = data.index(b"\n")
    tag, domain, p, q = data[:end].decode().split()
    if tag != "PACTSIG":
        raise ValueError(f"{path}: not a PACTSIG file")
    p, q = int(p), int(q)
    values = _raw_read(data, end + 1, p * q, domain == "frequency")
    return SensorData(domain, p, q, values)
