"""OBD-II primitives: PID catalog, request/response frames, and the linear codec.

Everything here models diagnostic reads (service mode 0x01).  A PID is
described by a linear decode rule ``value = scale * N + offset`` where ``N``
is the big-endian unsigned integer formed from the payload bytes.  The
bundled catalog covers the common mode-0x01 PIDs with single-valued linear
formulas, plus the 4-byte odometer (0xA6, 0.1 km resolution) and the
supported-PIDs probe bitmask (0x00).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterator

READ_MODE = 0x01  # diagnostic data read; anything else is treated as a write op
RESPONSE_MODE_FLAG = 0x40

WRITE_RESOURCE = "write"


class ObdError(Exception):
    """Base class for OBD-layer failures."""


class UnknownPidError(ObdError):
    """PID code not present in the catalog."""


class ValueRangeError(ObdError):
    """Physical value cannot be represented by the PID's payload encoding."""


class FrameError(ObdError):
    """Malformed request or response frame."""


def pid_hex(code: int) -> str:
    """Canonical resource key for a PID, e.g. ``0x0D``."""
    return f"0x{code:02X}"


@dataclass(frozen=True)
class PidSpec:
    """Decode rule for one mode-0x01 PID."""

    code: int
    name: str
    unit: str
    nbytes: int
    scale: float
    offset: float

    def __post_init__(self) -> None:
        if not 0 <= self.code <= 0xFF:
            raise ValueError(f"PID code out of range: {self.code}")
        if self.nbytes < 1 or self.nbytes > 4:
            raise ValueError(f"unsupported payload width: {self.nbytes}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def raw_max(self) -> int:
        return (1 << (8 * self.nbytes)) - 1

    @property
    def min_value(self) -> float:
        return self.offset

    @property
    def max_value(self) -> float:
        return self.scale * self.raw_max + self.offset

    def decode(self, payload: bytes) -> float:
        if len(payload) != self.nbytes:
            raise FrameError(
                f"{pid_hex(self.code)}: expected {self.nbytes} payload bytes, got {len(payload)}"
            )
        return self.scale * int.from_bytes(payload, "big") + self.offset

    def encode(self, value: float) -> bytes:
        """Quantize a physical value to payload bytes.

        Inverse of :meth:`decode` up to quantization: the round trip error is
        at most half of ``scale``.
        """
        raw = round((value - self.offset) / self.scale)
        if raw < 0 or raw > self.raw_max:
            raise ValueRangeError(
                f"{pid_hex(self.code)}: {value} outside [{self.min_value}, {self.max_value}]"
            )
        return int(raw).to_bytes(self.nbytes, "big")


class PidCatalog:
    """Immutable lookup table of :class:`PidSpec` entries keyed by code."""

    def __init__(self, specs: Iterator[PidSpec] | list[PidSpec]):
        self._by_code: dict[int, PidSpec] = {}
        for spec in specs:
            if spec.code in self._by_code:
                raise ValueError(f"duplicate PID {pid_hex(spec.code)}")
            self._by_code[spec.code] = spec

    def __len__(self) -> int:
        return len(self._by_code)

    def __iter__(self) -> Iterator[PidSpec]:
        return iter(sorted(self._by_code.values(), key=lambda s: s.code))

    def __contains__(self, code: int) -> bool:
        return code in self._by_code

    @property
    def codes(self) -> list[int]:
        return sorted(self._by_code)

    def lookup(self, code: int) -> PidSpec:
        try:
            return self._by_code[code]
        except KeyError:
            raise UnknownPidError(f"no catalog entry for {pid_hex(code)}") from None

    @classmethod
    def from_csv(cls, stream: io.TextIOBase) -> "PidCatalog":
        """Parse the catalog CSV (columns: code,name,unit,nbytes,scale,offset)."""
        reader = csv.DictReader(stream)
        required = {"code", "name", "unit", "nbytes", "scale", "offset"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"catalog header must contain {sorted(required)}")
        specs = []
        for lineno, row in enumerate(reader, start=2):
            try:
                specs.append(
                    PidSpec(
                        code=int(row["code"], 16),
                        name=row["name"],
                        unit=row["unit"],
                        nbytes=int(row["nbytes"]),
                        scale=float(row["scale"]),
                        offset=float(row["offset"]),
                    )
                )
            except (ValueError, TypeError) as exc:
                raise ValueError(f"catalog line {lineno}: {exc}") from exc
        return cls(specs)


_default_catalog: PidCatalog | None = None


def load_default_catalog() -> PidCatalog:
    """Load (and cache) the catalog bundled with the package."""
    global _default_catalog
    if _default_catalog is None:
        path = resources.files("obdgate").joinpath("data/pid_catalog.csv")
        with path.open("r", encoding="utf-8") as fh:
            _default_catalog = PidCatalog.from_csv(fh)
    return _default_catalog


# --- request/response frames -----------------------------------------------
#
# Wire layout (simplified ISO-TP single frames):
#   request:  [mode, pid]
#   response: [mode | 0x40, pid, payload...]


@dataclass(frozen=True)
class ObdRequest:
    """One diagnostic request as submitted to the gateway."""

    principal_id: str
    pid: int
    issued_at: float  # s, simulation clock
    mode: int = READ_MODE
    seq: int = 0  # global submission index, breaks arbitration ties

    @property
    def is_read(self) -> bool:
        return self.mode == READ_MODE

    @property
    def resource(self) -> str:
        """Policy resource key: PID hex for reads, ``write`` otherwise."""
        return pid_hex(self.pid) if self.is_read else WRITE_RESOURCE

    def to_frame(self) -> bytes:
        return bytes([self.mode, self.pid])


@dataclass(frozen=True)
class ObdResponse:
    """Decoded reply for one request."""

    pid: int
    raw: bytes  # payload bytes only
    value: float
    unit: str
    answered_at: float

    def to_frame(self) -> bytes:
        return bytes([READ_MODE | RESPONSE_MODE_FLAG, self.pid]) + self.raw


def parse_request_frame(frame: bytes) -> tuple[int, int]:
    """Split a request frame into (mode, pid)."""
    if len(frame) != 2:
        raise FrameError(f"request frame must be 2 bytes, got {len(frame)}")
    return frame[0], frame[1]


def parse_response_frame(frame: bytes, catalog: PidCatalog) -> ObdResponse:
    """Decode a response frame against the catalog."""
    if len(frame) < 2:
        raise FrameError("response frame shorter than header")
    mode, code = frame[0], frame[1]
    if not mode & RESPONSE_MODE_FLAG:
        raise FrameError(f"response mode 0x{mode:02X} missing reply flag")
    spec = catalog.lookup(code)
    payload = frame[2:]
    return ObdResponse(
        pid=code,
        raw=payload,
        value=spec.decode(payload),
        unit=spec.unit,
        answered_at=float("nan"),
    )
