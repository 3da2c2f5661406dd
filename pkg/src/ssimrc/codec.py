"""A deterministic intra block-transform codec with exact bit accounting.

Each CTU is coded independently: a 7-bit mode header (6-bit QP, 1-bit
transform size) followed by its transform blocks in raster order.  A block
carries the DPCM residual of its DC level as a signed Exp-Golomb code, then
its AC levels in zig-zag order as (run + 1, level) pairs closed by a one-bit
end-of-block symbol ``ue(0)``.

Quantisation is uniform with a step of ``2 ** ((qp - 4) / 6)`` on the
orthonormal DCT and a rounding offset of one third of the step.  The DC step
is capped at twice the transform size so that flat content reconstructs to
within one grey level at every QP.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bitstream import BitReader, BitWriter, ue_lengths

QP_MIN, QP_MAX = 0, 51
TRANSFORM_SIZES = (8, 16)
MODE_SPAN = (-6, -4, -2, 0, 2, 4, 6)
HEADER_BITS = 7
DEADZONE = 1.0 / 3.0
MAGIC = b"TRC1"


@dataclass(frozen=True, order=True)
class CodingMode:
    qp: int
    transform_size: int = 8

    def __post_init__(self):
        if not QP_MIN <= self.qp <= QP_MAX:
            raise ValueError(f"qp {self.qp} outside [{QP_MIN}, {QP_MAX}]")
        if self.transform_size not in TRANSFORM_SIZES:
            raise ValueError(f"transform size {self.transform_size} not in {TRANSFORM_SIZES}")

    @property
    def step(self) -> float:
        return qp_step(self.qp)

    def label(self) -> str:
        return f"q{self.qp}t{self.transform_size}"


@dataclass(frozen=True)
class CostSpec:
    metric: str
    lam: float

    def __post_init__(self):
        if self.metric not in ("mse-cost", "mapped-ssim-cost"):
            raise ValueError(f"unknown cost metric {self.metric!r}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be finite and non-negative, got {self.lam}")

    def cost(self, d_mse: float, bits: int, pixel_count: int) -> float:
        # squared-error sum plus weighted rate; both metrics share this form,
        # the mapped variant just carries the scaled multiplier
        return d_mse * pixel_count + self.lam * bits


@dataclass(frozen=True)
class EncodeOutcome:
    mode: CodingMode
    bits: int
    d_mse: float
    pixel_count: int
    recon: np.ndarray | None = field(default=None, repr=False, compare=False)
    levels: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def bpp(self) -> float:
        return self.bits / self.pixel_count


def qp_step(qp: int) -> float:
    return 2.0 ** ((qp - 4) / 6.0)


def dc_step(qp: int, transform_size: int) -> float:
    return min(qp_step(qp), 2.0 * transform_size)


def hm_lambda(qp: int) -> float:
    """Conventional QP-to-multiplier relation for squared-error costs."""
    return 0.57 * 2.0 ** ((qp - 12) / 3.0)


def mode_set_for_frame(base_qp: int, span=MODE_SPAN) -> list[CodingMode]:
    """QP offsets around ``base_qp`` crossed with both transform sizes."""
    if not 6 <= base_qp <= 45:
        raise ValueError(f"base_qp {base_qp} outside [6, 45]")
    qps = sorted({min(QP_MAX, max(QP_MIN, base_qp + d)) for d in span})
    return [CodingMode(q, t) for q in qps for t in TRANSFORM_SIZES]


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    c[0] /= np.sqrt(2.0)
    c.setflags(write=False)
    return c


@lru_cache(maxsize=None)
def zigzag(n: int) -> np.ndarray:
    """Flat raster indices of an ``n x n`` block in zig-zag scan order."""
    order = sorted(((i, j) for i in range(n) for j in range(n)),
                   key=lambda p: (p[0] + p[1], p[1] if (p[0] + p[1]) % 2 == 0 else p[0]))
    idx = np.array([i * n + j for i, j in order])
    idx.setflags(write=False)
    return idx


def _padded(ctu: np.ndarray, t: int) -> np.ndarray:
    h, w = ctu.shape
    ph, pw = -(-h // t) * t, -(-w // t) * t
    if (ph, pw) == (h, w):
        return ctu
    return np.pad(ctu, ((0, ph - h), (0, pw - w)), mode="edge")


def _to_blocks(a: np.ndarray, t: int) -> np.ndarray:
    h, w = a.shape
    return a.reshape(h // t, t, w // t, t).transpose(0, 2, 1, 3).reshape(-1, t, t)


def _from_blocks(b: np.ndarray, t: int, ph: int, pw: int) -> np.ndarray:
    return b.reshape(ph // t, pw // t, t, t).transpose(0, 2, 1, 3).reshape(ph, pw)


class CtuTransform:
    """Forward transform of one CTU at one transform size, reusable across QPs."""

    def __init__(self, ctu, transform_size: int):
        ctu = np.asarray(getattr(ctu, "samples", ctu))
        self.source = ctu.astype(np.float64)
        self.shape = ctu.shape
        t = self.t = transform_size
        padded = _padded(self.source, t) - 128.0
        self.padded_shape = padded.shape
        c = dct_matrix(t)
        coeffs = c @ _to_blocks(padded, t) @ c.T
        self.coeffs = coeffs.reshape(-1, t * t)[:, zigzag(t)]

    def quantize(self, qp: int) -> np.ndarray:
        step = np.full(self.t * self.t, qp_step(qp))
        step[0] = dc_step(qp, self.t)
        mag = np.floor(np.abs(self.coeffs) / step + DEADZONE)
        return (np.sign(self.coeffs) * mag).astype(np.int64)

    def encode(self, mode: CodingMode, keep: bool = True) -> EncodeOutcome:
        levels = self.quantize(mode.qp)
        recon = reconstruct(levels, mode, self.shape)
        err = recon.astype(np.float64) - self.source
        d_mse = float(np.mean(err * err))
        bits = count_bits(levels)
        return EncodeOutcome(mode, bits, d_mse, self.shape[0] * self.shape[1],
                             recon if keep else None, levels if keep else None)


def reconstruct(levels: np.ndarray, mode: CodingMode, shape) -> np.ndarray:
    t = mode.transform_size
    step = np.full(t * t, qp_step(mode.qp))
    step[0] = dc_step(mode.qp, t)
    coeffs = np.empty((levels.shape[0], t * t))
    coeffs[:, zigzag(t)] = levels * step
    c = dct_matrix(t)
    blocks = c.T @ coeffs.reshape(-1, t, t) @ c
    h, w = shape
    ph, pw = -(-h // t) * t, -(-w // t) * t
    pix = _from_blocks(blocks, t, ph, pw)[:h, :w] + 128.0
    return np.clip(np.rint(pix), 0, 255).astype(np.uint8)


def count_bits(levels: np.ndarray) -> int:
    """Exact length of the CTU payload the writer would emit for ``levels``."""
    dc = levels[:, 0]
    diff = np.diff(dc, prepend=0)
    bits = HEADER_BITS + int(ue_lengths(np.where(diff > 0, 2 * diff - 1, -2 * diff)).sum())
    ac = levels[:, 1:]
    blk, pos = np.nonzero(ac)
    if blk.size:
        prev = np.empty_like(pos)
        prev[0] = -1
        prev[1:] = np.where(blk[1:] == blk[:-1], pos[:-1], -1)
        run = pos - prev - 1
        vals = ac[blk, pos]
        bits += int(ue_lengths(run + 1).sum())
        bits += int(ue_lengths(2 * (np.abs(vals) - 1) + (vals < 0)).sum())
    return bits + levels.shape[0]  # one end-of-block bit per block


def code_ctu_with_mode(ctu, mode: CodingMode) -> EncodeOutcome:
    return CtuTransform(ctu, mode.transform_size).encode(mode)


def evaluate_modes(ctu, mode_set, keep: bool = False) -> list[EncodeOutcome]:
    """Code ``ctu`` with every mode, sharing the forward transform per size."""
    transforms = {}
    out = []
    for mode in mode_set:
        tr = transforms.get(mode.transform_size)
        if tr is None:
            tr = transforms[mode.transform_size] = CtuTransform(ctu, mode.transform_size)
        out.append(tr.encode(mode, keep=keep))
    return out


def select_mode(outcomes, cost: CostSpec) -> int:
    """Index of the minimum-cost outcome; ties go to fewer bits, then lower QP."""
    if not outcomes:
        raise ValueError("empty mode set")
    keys = [(cost.cost(o.d_mse, o.bits, o.pixel_count), o.bits, o.mode.qp, o.mode.transform_size)
            for o in outcomes]
    return min(range(len(keys)), key=keys.__getitem__)


def rdo_encode_ctu(ctu, mode_set, cost: CostSpec) -> EncodeOutcome:
    """Minimum ``d_mse * M + lambda * bits`` outcome over ``mode_set``."""
    outcomes = evaluate_modes(ctu, mode_set)
    best = outcomes[select_mode(outcomes, cost)]
    return code_ctu_with_mode(ctu, best.mode)


# --------------------------------------------------------------------------
# bitstream

def write_ctu(writer: BitWriter, outcome: EncodeOutcome) -> None:
    mode = outcome.mode
    writer.write(mode.qp, 6)
    writer.write(TRANSFORM_SIZES.index(mode.transform_size), 1)
    prev_dc = 0
    for row in outcome.levels:
        writer.se(int(row[0]) - prev_dc)
        prev_dc = int(row[0])
        run = 0
        for v in row[1:]:
            if v == 0:
                run += 1
                continue
            writer.ue(run + 1)
            writer.level(int(v))
            run = 0
        writer.ue(0)


def read_ctu(reader: BitReader, shape) -> tuple[CodingMode, np.ndarray]:
    qp = reader.read(6)
    mode = CodingMode(qp, TRANSFORM_SIZES[reader.read(1)])
    t = mode.transform_size
    h, w = shape
    nblocks = (-(-h // t)) * (-(-w // t))
    levels = np.zeros((nblocks, t * t), dtype=np.int64)
    prev_dc = 0
    for b in range(nblocks):
        prev_dc = levels[b, 0] = prev_dc + reader.se()
        pos = 1
        while True:
            sym = reader.ue()
            if sym == 0:
                break
            pos += sym - 1
            if pos >= t * t:
                raise ValueError("corrupt bitstream: coefficient run overflows block")
            levels[b, pos] = reader.level()
            pos += 1
    return mode, levels


def decode_ctu(reader: BitReader, shape) -> np.ndarray:
    mode, levels = read_ctu(reader, shape)
    return reconstruct(levels, mode, shape)


def write_stream(frames_outcomes, width: int, height: int, ctu_size: int) -> bytes:
    """Serialise coded frames: 16-byte header, then byte-aligned frames of CTU payloads."""
    header = MAGIC + struct.pack("<HHHIH", width, height, ctu_size, len(frames_outcomes), 0)
    w = BitWriter()
    for outcomes in frames_outcomes:
        for o in outcomes:
            write_ctu(w, o)
        w.align()
    return header + w.getvalue()


def read_stream(data: bytes) -> list[np.ndarray]:
    from .media_io import partition

    if data[:4] != MAGIC or len(data) < 16:
        raise ValueError("not a toy-codec stream")
    width, height, ctu_size, nframes, _ = struct.unpack("<HHHIH", data[4:16])
    grid = partition((width, height), ctu_size)
    reader = BitReader(data[16:])
    frames = []
    for _ in range(nframes):
        plane = np.zeros((height, width), dtype=np.uint8)
        for x0, y0, w, h in grid:
            plane[y0:y0 + h, x0:x0 + w] = decode_ctu(reader, (h, w))
        reader.align()
        frames.append(plane)
    return frames
