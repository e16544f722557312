"""Bit-exact codec for the hybrid classical-quantum frame.

Wire layout (all multi-byte integers big-endian):

    offset  size  field
    ------  ----  -----------------------------------------------
    0       2     magic 0x51 0x50
    2       1     version, currently 1
    3       1     flags: bit0 quantum payload present, bit1 ack
                  present, bits 2-7 reserved (must be zero)
    4       4     requesting_station_id
    8       4     receiving_station_id
    12      8     transmit_time_ns
    20      8     op_commence_time_ns (0 = unset)
    28      2     qubit_count
    30      9*q   qubit descriptors: qubit_id u32,
                  entanglement_group u32 (0 = unentangled),
                  encoding u8 (0 = DV, 1 = CV reference)
    30+9q   4     ack_session_id (0 when the ack flag is clear)
    34+9q   2     error_corr_len
    36+9q   n     opaque error-correction bytes
    36+9q+n 4     crc32 (IEEE reflected, over all preceding bytes)
    40+9q+n 2     end marker 0x0E 0x0F

Total length = 42 + 9*qubit_count + error_corr_len bytes.  Qubit payloads
are carried as descriptors (ids plus entanglement-group tags), never as
amplitudes; group ids are preserved verbatim and checked at the protocol
layer, not here.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

MAGIC = b"\x51\x50"
VERSION = 1
END_MARKER = b"\x0e\x0f"
FLAG_QUANTUM = 0x01
FLAG_ACK = 0x02
RESERVED_FLAGS = 0xFC

HEADER_LEN = 30
DESCRIPTOR_LEN = 9
TRAILER_FIXED_LEN = 12   # ack + error_corr_len + crc32 + end marker

ENCODING_DV = 0
ENCODING_CV_REFERENCE = 1

_U16 = 0xFFFF
_U32 = 0xFFFFFFFF
_U64 = 0xFFFFFFFFFFFFFFFF


class PacketError(ValueError):
    """Structured codec error; offset is the byte where decoding failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class BadMagic(PacketError):
    pass


class BadVersion(PacketError):
    pass


class ReservedFlagSet(PacketError):
    pass


class TruncatedInput(PacketError):
    pass


class CrcMismatch(PacketError):
    pass


class BadEndMarker(PacketError):
    pass


class TrailingBytes(PacketError):
    pass


class FieldMismatch(PacketError):
    """Cross-field inconsistency (flags vs payload/ack contents)."""


class EncodeValidationError(ValueError):
    """Packet violates an invariant and cannot be encoded."""


def crc32(data: bytes) -> int:
    """IEEE reflected CRC-32 (init 0xFFFFFFFF, final xor 0xFFFFFFFF)."""
    return zlib.crc32(data) & _U32


@dataclass(frozen=True)
class QubitDescriptor:
    qubit_id: int
    entanglement_group: int = 0   # 0 = unentangled
    encoding: int = ENCODING_DV


@dataclass(frozen=True)
class Packet:
    requesting_station_id: int
    receiving_station_id: int
    transmit_time_ns: int
    op_commence_time_ns: int = 0
    qubits: tuple = ()
    ack_session_id: int = 0
    ack_present: bool = False
    error_corr: bytes = b""
    version: int = VERSION

    @property
    def flags(self) -> int:
        return ((FLAG_QUANTUM if self.qubits else 0)
                | (FLAG_ACK if self.ack_present else 0))

    def encoded_length(self) -> int:
        return HEADER_LEN + DESCRIPTOR_LEN * len(self.qubits) \
            + TRAILER_FIXED_LEN + len(self.error_corr)


def _validate(p: Packet) -> None:
    if p.version != VERSION:
        raise EncodeValidationError(f"unsupported version {p.version}")
    for name, value, limit in (
            ("requesting_station_id", p.requesting_station_id, _U32),
            ("receiving_station_id", p.receiving_station_id, _U32),
            ("transmit_time_ns", p.transmit_time_ns, _U64),
            ("op_commence_time_ns", p.op_commence_time_ns, _U64),
            ("ack_session_id", p.ack_session_id, _U32)):
        if not 0 <= value <= limit:
            raise EncodeValidationError(f"{name}={value} out of range")
    if len(p.qubits) > _U16:
        raise EncodeValidationError(f"too many qubits: {len(p.qubits)}")
    if len(p.error_corr) > _U16:
        raise EncodeValidationError(
            f"error_corr too long: {len(p.error_corr)} bytes")
    if not p.ack_present and p.ack_session_id != 0:
        raise EncodeValidationError("ack_session_id must be 0 without the ack flag")
    for q in p.qubits:
        if not 0 <= q.qubit_id <= _U32:
            raise EncodeValidationError(f"qubit_id={q.qubit_id} out of range")
        if not 0 <= q.entanglement_group <= _U32:
            raise EncodeValidationError(
                f"entanglement_group={q.entanglement_group} out of range")
        if q.encoding not in (ENCODING_DV, ENCODING_CV_REFERENCE):
            raise EncodeValidationError(f"encoding={q.encoding} not in {{0, 1}}")


def encode(p: Packet) -> bytes:
    """Serialize a packet; raises EncodeValidationError on invariant breaks."""
    _validate(p)
    parts = [MAGIC,
             struct.pack(">BB", p.version, p.flags),
             struct.pack(">IIQQH", p.requesting_station_id,
                         p.receiving_station_id, p.transmit_time_ns,
                         p.op_commence_time_ns, len(p.qubits))]
    for q in p.qubits:
        parts.append(struct.pack(">IIB", q.qubit_id, q.entanglement_group,
                                 q.encoding))
    parts.append(struct.pack(">IH", p.ack_session_id, len(p.error_corr)))
    parts.append(p.error_corr)
    body = b"".join(parts)
    return body + struct.pack(">I", crc32(body)) + END_MARKER


def decode(data: bytes) -> Packet:
    """Parse one packet from bytes; total over arbitrary input.

    Never reads past the declared lengths; every failure raises a distinct
    PacketError subclass carrying the offending byte offset.
    """
    if len(data) < 2:
        raise TruncatedInput("input ends inside the magic", len(data))
    if data[:2] != MAGIC:
        raise BadMagic(f"bad magic {data[:2].hex()}", 0)
    if len(data) < 3:
        raise TruncatedInput("input ends before the version byte", len(data))
    if data[2] != VERSION:
        raise BadVersion(f"unsupported version {data[2]}", 2)
    if len(data) < 4:
        raise TruncatedInput("input ends before the flags byte", len(data))
    flags = data[3]
    if flags & RESERVED_FLAGS:
        raise ReservedFlagSet(f"reserved flag bits set in 0x{flags:02x}", 3)
    if len(data) < HEADER_LEN:
        raise TruncatedInput("input ends inside the header", len(data))
    req_id, recv_id, tx_ns, op_ns, qubit_count = struct.unpack(
        ">IIQQH", data[4:HEADER_LEN])
    if (qubit_count == 0) != (flags & FLAG_QUANTUM == 0):
        raise FieldMismatch(
            f"qubit_count={qubit_count} inconsistent with flags 0x{flags:02x}", 28)

    desc_end = HEADER_LEN + DESCRIPTOR_LEN * qubit_count
    if len(data) < desc_end + 6:
        raise TruncatedInput("input ends inside descriptors or trailer head",
                             len(data))
    qubits = []
    for k in range(qubit_count):
        off = HEADER_LEN + DESCRIPTOR_LEN * k
        qid, group, enc = struct.unpack(">IIB", data[off:off + DESCRIPTOR_LEN])
        if enc not in (ENCODING_DV, ENCODING_CV_REFERENCE):
            raise FieldMismatch(f"qubit encoding {enc} not in {{0, 1}}", off + 8)
        qubits.append(QubitDescriptor(qid, group, enc))

    ack_id, ec_len = struct.unpack(">IH", data[desc_end:desc_end + 6])
    if not (flags & FLAG_ACK) and ack_id != 0:
        raise FieldMismatch(
            f"ack_session_id={ack_id} present without the ack flag", desc_end)
    total = desc_end + 6 + ec_len + 6
    if len(data) < total:
        raise TruncatedInput("input ends inside error-correction bytes, "
                             "crc, or end marker", len(data))
    if len(data) > total:
        raise TrailingBytes(f"{len(data) - total} bytes past the end marker", total)
    ec_end = desc_end + 6 + ec_len
    error_corr = data[desc_end + 6:ec_end]
    (crc_stored,) = struct.unpack(">I", data[ec_end:ec_end + 4])
    crc_actual = crc32(data[:ec_end])
    if crc_stored != crc_actual:
        raise CrcMismatch(
            f"crc 0x{crc_stored:08x} != computed 0x{crc_actual:08x}", ec_end)
    if data[ec_end + 4:ec_end + 6] != END_MARKER:
        raise BadEndMarker(
            f"bad end marker {data[ec_end + 4:ec_end + 6].hex()}", ec_end + 4)

    return Packet(requesting_station_id=req_id, receiving_station_id=recv_id,
                  transmit_time_ns=tx_ns, op_commence_time_ns=op_ns,
                  qubits=tuple(qubits), ack_session_id=ack_id,
                  ack_present=bool(flags & FLAG_ACK), error_corr=error_corr)


def packet_to_dict(p: Packet) -> dict:
    """JSON-friendly view used by the CLI."""
    return {
        "version": p.version,
        "requesting_station_id": p.requesting_station_id,
        "receiving_station_id": p.receiving_station_id,
        "transmit_time_ns": p.transmit_time_ns,
        "op_commence_time_ns": p.op_commence_time_ns,
        "qubits": [{"qubit_id": q.qubit_id,
                    "entanglement_group": q.entanglement_group,
                    "encoding": q.encoding} for q in p.qubits],
        "ack_present": p.ack_present,
        "ack_session_id": p.ack_session_id,
        "error_corr_hex": p.error_corr.hex(),
    }


def packet_from_dict(d: dict) -> Packet:
    qubits = tuple(QubitDescriptor(q["qubit_id"],
                                   q.get("entanglement_group", 0),
                                   q.get("encoding", ENCODING_DV))
                   for q in d.get("qubits", []))
    return Packet(
        requesting_station_id=d["requesting_station_id"],
        receiving_station_id=d["receiving_station_id"],
        transmit_time_ns=d["transmit_time_ns"],
        op_commence_time_ns=d.get("op_commence_time_ns", 0),
        qubits=qubits,
        ack_session_id=d.get("ack_session_id", 0),
        ack_present=d.get("ack_present", False),
        error_corr=bytes.fromhex(d.get("error_corr_hex", "")),
        version=d.get("version", VERSION),
    )
