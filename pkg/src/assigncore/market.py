"""Random assignment markets: productivity laws, generation, and a bit-exact file format.

Entry ``alpha[i, j]`` of a generated market is a pure function of
``(seed, i * (n + k) + j)``: it is produced from the matching word of a
Philox-4x64 stream keyed by the seed, so rows can be generated in any order
(or by independent processes) and still agree bit for bit.

Ties between entries are broken by lowest index everywhere in the package.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterator, TextIO

import numpy as np

MAGIC = "# assigncore market v1"
MAX_SEED = 2**64 - 1

# Chunk size (entries) when drawing large matrices, to bound temporaries.
_CHUNK_ENTRIES = 1 << 22


class MarketFormatError(ValueError):
    """Raised when a market file cannot be parsed or violates the market invariants."""


@dataclass(frozen=True)
class DistributionSpec:
    """One of the productivity laws supported by the generator.

    ``kind`` is ``"uniform01"``, ``"exponential"`` (parameter ``rate``) or
    ``"weibull"`` (``shape`` and ``scale``).
    """

    kind: str
    rate: float | None = None
    shape: float | None = None
    scale: float | None = None

    def __post_init__(self):
        if self.kind == "uniform01":
            if self.rate is not None or self.shape is not None or self.scale is not None:
                raise ValueError("uniform01 takes no parameters")
        elif self.kind == "exponential":
            if self.rate is None or not (self.rate > 0) or not math.isfinite(self.rate):
                raise ValueError(f"exponential rate must be a positive real, got {self.rate!r}")
            if self.shape is not None or self.scale is not None:
                raise ValueError("exponential takes only a rate")
        elif self.kind == "weibull":
            for name in ("shape", "scale"):
                value = getattr(self, name)
                if value is None or not (value > 0) or not math.isfinite(value):
                    raise ValueError(f"weibull {name} must be a positive real, got {value!r}")
            if self.rate is not None:
                raise ValueError("weibull takes shape and scale, not rate")
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def uniform(cls) -> "DistributionSpec":
        return cls("uniform01")

    @classmethod
    def exponential(cls, rate: float = 1.0) -> "DistributionSpec":
        return cls("exponential", rate=float(rate))

    @classmethod
    def weibull(cls, shape: float, scale: float = 1.0) -> "DistributionSpec":
        return cls("weibull", shape=float(shape), scale=float(scale))

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """Parse ``uniform``, ``exp:RATE`` or ``weibull:SHAPE[:SCALE]``."""
        parts = text.strip().split(":")
        head = parts[0].lower()
        try:
            if head in ("uniform", "uniform01", "u"):
                if len(parts) != 1:
                    raise ValueError("uniform takes no parameters")
                return cls.uniform()
            if head in ("exp", "exponential"):
                if len(parts) > 2:
                    raise ValueError("exp takes one parameter")
                return cls.exponential(float(parts[1]) if len(parts) == 2 else 1.0)
            if head == "weibull":
                if len(parts) not in (2, 3):
                    raise ValueError("weibull takes SHAPE[:SCALE]")
                scale = float(parts[2]) if len(parts) == 3 else 1.0
                return cls.weibull(float(parts[1]), scale)
        except (ValueError, IndexError) as exc:
            raise ValueError(f"bad distribution {text!r}: {exc}") from None
        raise ValueError(f"unknown distribution {text!r}")

    @property
    def tag(self) -> str:
        # repr() of a float round-trips exactly, so tags are lossless.
        if self.kind == "uniform01":
            return "uniform"
        if self.kind == "exponential":
            return f"exp:{self.rate!r}"
        return f"weibull:{self.shape!r}:{self.scale!r}"

    @property
    def bounded(self) -> bool:
        return self.kind == "uniform01"

    @property
    def density_at_sup(self) -> float | None:
        """Density at the top of the support, defined only for bounded laws."""
        return 1.0 if self.kind == "uniform01" else None

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform01":
            return np.clip(x, 0.0, 1.0)
        pos = np.maximum(x, 0.0)
        if self.kind == "exponential":
            return -np.expm1(-self.rate * pos)
        return -np.expm1(-((pos / self.scale) ** self.shape))

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        """Map uniform variates in [0, 1) to this law by inversion."""
        if self.kind == "uniform01":
            return u
        tail = -np.log1p(-u)
        if self.kind == "exponential":
            return tail / self.rate
        return self.scale * tail ** (1.0 / self.shape)

    def __str__(self):
        return self.tag


def _validate_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def _unit_draws(seed: int, first: int, count: int) -> np.ndarray:
    """Uniform [0, 1) variates for flat indices ``first .. first + count - 1``."""
    bg = np.random.Philox(key=seed)
    block, offset = divmod(first, 4)
    if block:
        bg.advance(block)
    raw = bg.random_raw(offset + count)[offset:]
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True, eq=False)
class Market:
    """``n`` firms, ``n + k`` workers and the ``n x (n + k)`` productivity matrix."""

    n: int
    k: int
    alpha: np.ndarray = field(repr=False)
    dist: DistributionSpec = field(default_factory=DistributionSpec.uniform)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        _validate_seed(self.seed)
        alpha = np.array(self.alpha, dtype=np.float64, copy=True)
        if alpha.shape != (self.n, self.n + self.k):
            raise MarketFormatError(
                f"alpha has shape {alpha.shape}, expected {(self.n, self.n + self.k)}"
            )
        if not np.isfinite(alpha).all():
            raise MarketFormatError("alpha contains non-finite entries")
        if self.dist.bounded and alpha.size and (alpha.min() < 0.0 or alpha.max() > 1.0):
            raise MarketFormatError("bounded distribution but entries fall outside [0, 1]")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def from_matrix(cls, alpha, dist: DistributionSpec | None = None, seed: int = 0) -> "Market":
        alpha = np.asarray(alpha, dtype=np.float64)
        if alpha.ndim != 2:
            raise MarketFormatError("alpha must be two-dimensional")
        n, m = alpha.shape
        if m < n:
            raise MarketFormatError(f"need at least as many workers as firms, got {n}x{m}")
        return cls(n, m - n, alpha, dist or DistributionSpec.uniform(), seed)

    @property
    def n_workers(self) -> int:
        return self.n + self.k

    def __eq__(self, other):
        if not isinstance(other, Market):
            return NotImplemented
        return (
            self.n == other.n
            and self.k == other.k
            and self.dist == other.dist
            and self.seed == other.seed
            and np.array_equal(self.alpha.view(np.uint64), other.alpha.view(np.uint64))
        )

    __hash__ = None


def market_rows(n: int, k: int, dist: DistributionSpec, seed: int,
                start: int = 0, stop: int | None = None,
                chunk_rows: int | None = None) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(first_row, block)`` pieces of the productivity matrix.

    Blocks are bit-identical to the corresponding rows of
    ``generate_market(n, k, dist, seed).alpha``, without materializing the
    whole matrix.
    """
    seed = _validate_seed(seed)
    m = n + k
    stop = n if stop is None else stop
    if chunk_rows is None:
        chunk_rows = max(1, _CHUNK_ENTRIES // max(m, 1))
    row = start
    while row < stop:
        last = min(stop, row + chunk_rows)
        u = _unit_draws(seed, row * m, (last - row) * m)
        yield row, dist.from_unit(u).reshape(last - row, m)
        row = last


def generate_market(n: int, k: int, dist: DistributionSpec, seed: int) -> Market:
    """Draw an ``n x (n + k)`` market with i.i.d. entries from ``dist``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    alpha = np.empty((n, n + k))
    for row, block in market_rows(n, k, dist, seed):
        alpha[row:row + len(block)] = block
    return Market(n, k, alpha, dist, _validate_seed(seed))


def write_market(market: Market, stream: TextIO | None = None) -> str:
    """Serialize ``market``; each entry is the 16-hex-digit IEEE-754 bit pattern."""
    out = io.StringIO()
    out.write(f"{MAGIC}\n")
    out.write(f"n {market.n}\nk {market.k}\ndist {market.dist.tag}\nseed {market.seed}\n")
    big_endian = market.alpha.astype(">f8")
    for row in big_endian:
        hexed = row.tobytes().hex()
        out.write(" ".join(hexed[i:i + 16] for i in range(0, len(hexed), 16)))
        out.write("\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def _parse_header(lines: list[str], required: bool) -> tuple[dict, int]:
    header: dict[str, str] = {}
    pos = 0
    if lines and lines[0].strip() == MAGIC:
        pos = 1
    elif required:
        raise MarketFormatError("missing market header line")
    for key in ("n", "k", "dist", "seed"):
        if pos >= len(lines):
            break
        parts = lines[pos].split(None, 1)
        if len(parts) != 2 or parts[0] != key:
            if required:
                raise MarketFormatError(f"expected header field {key!r} on line {pos + 1}")
            break
        header[key] = parts[1].strip()
        pos += 1
    if required and len(header) != 4:
        raise MarketFormatError("truncated header")
    return header, pos


def read_market(source: str | bytes | TextIO, csv: bool = False,
                dist: DistributionSpec | None = None) -> Market:
    """Parse a market written by :func:`write_market`.

    With ``csv=True`` rows are comma-separated decimals (lossy); the header
    is then optional, dimensions are taken from the matrix and ``dist``
    (default uniform) labels the result.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    lines = [ln for ln in source.splitlines() if ln.strip()]
    header, pos = _parse_header(lines, required=not csv)

    try:
        hdr_dist = DistributionSpec.parse(header["dist"]) if "dist" in header else None
        n = int(header["n"]) if "n" in header else None
        k = int(header["k"]) if "k" in header else None
        seed = int(header["seed"]) if "seed" in header else 0
    except ValueError as exc:
        raise MarketFormatError(f"malformed header: {exc}") from None

    body = lines[pos:]
    rows = []
    for lineno, line in enumerate(body, start=pos + 1):
        try:
            if csv:
                rows.append([float(tok) for tok in line.split(",")])
            else:
                tokens = line.split()
                if any(len(tok) != 16 for tok in tokens):
                    raise ValueError("entries must be 16 hex digits")
                rows.append(np.frombuffer(bytes.fromhex("".join(tokens)), dtype=">f8"))
        except ValueError as exc:
            raise MarketFormatError(f"line {lineno}: {exc}") from None

    if not rows:
        raise MarketFormatError("market has no rows")
    if n is None:
        n = len(rows)
    if k is None:
        k = len(rows[0]) - n
    if len(rows) != n:
        raise MarketFormatError(f"expected {n} rows, found {len(rows)}")
    for i, row in enumerate(rows):
        if len(row) != n + k:
            raise MarketFormatError(f"row {i} has {len(row)} entries, expected {n + k}")
    alpha = np.array(rows, dtype=np.float64).reshape(n, n + k)
    try:
        return Market(n, k, alpha, hdr_dist or dist or DistributionSpec.uniform(), seed)
    except MarketFormatError:
        raise
    except ValueError as exc:
        raise MarketFormatError(str(exc)) from None
