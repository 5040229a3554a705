"""Flat model parameters stored as raw 32-bit words.

Everything that touches ciphertexts (XOR, mask selection, one-time pads)
works on ``uint32`` words so that NaN payloads and infinities produced by
XOR-ing float bit patterns survive untouched.  Float views are only taken
once a vector has been decrypted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DegenerateInputError, FormatError, ShapeError

WORD_BITS = 32
WORD_BYTES = 4

_LE_WORD = np.dtype("<u4")


@dataclass(frozen=True)
class Layer:
    offset: int
    length: int
    kind: str  # "weight" | "bias"
    name: str = ""


@dataclass(frozen=True)
class LayerLayout:
    """Contiguous word ranges of each layer plus the final-layer range.

    ``last_layer_range`` is an ``(offset, length)`` suffix of the full range
    that covers the final weight matrix and its bias.
    """

    layers: tuple[Layer, ...]
    last_layer_range: tuple[int, int]

    def __post_init__(self) -> None:
        expected = 0
        for layer in self.layers:
            if layer.kind not in ("weight", "bias"):
                raise ShapeError(f"unknown layer kind {layer.kind!r}")
            if layer.offset != expected or layer.length < 0:
                raise ShapeError("layer offsets must be contiguous and non-overlapping")
            expected += layer.length
        off, length = self.last_layer_range
        if length < 0 or off < 0 or off + length != expected:
            raise ShapeError("last_layer_range must be a suffix of the full range")

    @property
    def total(self) -> int:
        return sum(layer.length for layer in self.layers)

    @classmethod
    def flat(cls, n: int) -> "LayerLayout":
        """Single weight layer of ``n`` words that is also the last layer."""
        return cls((Layer(0, n, "weight", "flat"),), (0, n))

    @classmethod
    def from_shapes(cls, shapes: Sequence[tuple[str, str, int]], last_layer_start: int) -> "LayerLayout":
        """Build a layout from ``(name, kind, length)`` triples.

        ``last_layer_start`` is the index into ``shapes`` where the final layer
        begins.
        """
        layers = []
        offset = 0
        last_offset = None
        for i, (name, kind, length) in enumerate(shapes):
            if i == last_layer_start:
                last_offset = offset
            layers.append(Layer(offset, length, kind, name))
            offset += length
        if last_offset is None:
            raise ShapeError("last_layer_start out of range")
        return cls(tuple(layers), (last_offset, offset - last_offset))

    def to_dict(self) -> dict:
        return {
            "layers": [[l.offset, l.length, l.kind, l.name] for l in self.layers],
            "last_layer_range": list(self.last_layer_range),
        }


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ParamWords:
    """Immutable vector of |W| raw 32-bit words with a layer layout."""

    words: np.ndarray
    layout: LayerLayout

    def __post_init__(self) -> None:
        words = np.array(self.words, dtype=np.uint32, copy=True).reshape(-1)
        if words.size != self.layout.total:
            raise ShapeError(f"{words.size} words do not match layout total {self.layout.total}")
        object.__setattr__(self, "words", _frozen(words))

    def __len__(self) -> int:
        return int(self.words.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParamWords):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.words, other.words)

    def __hash__(self) -> int:
        return hash((self.layout, self.words.tobytes()))

    def __repr__(self) -> str:
        return f"ParamWords(n={len(self)})"

    @classmethod
    def from_floats(cls, values: Iterable[float] | np.ndarray, layout: LayerLayout | None = None) -> "ParamWords":
        arr = np.asarray(values, dtype=np.float32).reshape(-1)
        if layout is None:
            layout = LayerLayout.flat(arr.size)
        return cls(arr.view(np.uint32), layout)

    @classmethod
    def zeros(cls, layout: LayerLayout) -> "ParamWords":
        return cls(np.zeros(layout.total, dtype=np.uint32), layout)

    def floats(self) -> np.ndarray:
        """float32 view of the words (bit-exact, read-only)."""
        return self.words.view(np.float32)

    def floats64(self) -> np.ndarray:
        return self.words.view(np.float32).astype(np.float64)

    def __xor__(self, other: "ParamWords") -> "ParamWords":
        return xor_words(self, other)


@dataclass(frozen=True, eq=False)
class BitMask:
    """|W| bits selecting which parameters are kept by :func:`mask_select`."""

    bits: np.ndarray = field()

    def __post_init__(self) -> None:
        bits = np.array(self.bits, dtype=bool, copy=True).reshape(-1)
        object.__setattr__(self, "bits", _frozen(bits))

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(np.packbits(self.bits).tobytes())

    def complement(self) -> "BitMask":
        return BitMask(~self.bits)

    def popcount(self) -> int:
        return int(self.bits.sum())

    @classmethod
    def ones(cls, n: int) -> "BitMask":
        return cls(np.ones(n, dtype=bool))

    @classmethod
    def zeros(cls, n: int) -> "BitMask":
        return cls(np.zeros(n, dtype=bool))


# ---------------------------------------------------------------------------
# Ciphertext-domain operators
# ---------------------------------------------------------------------------


def xor_words(a: ParamWords, b: ParamWords) -> ParamWords:
    if len(a) != len(b):
        raise ShapeError(f"length mismatch: {len(a)} vs {len(b)}")
    if a.layout != b.layout:
        raise ShapeError("layout mismatch")
    return ParamWords(np.bitwise_xor(a.words, b.words), a.layout)


def mask_select(w: ParamWords, m: BitMask) -> ParamWords:
    """Keep word i where ``m[i]`` is set, clear it to 0x00000000 otherwise."""
    if len(m) != len(w):
        raise ShapeError(f"mask has {len(m)} bits for {len(w)} words")
    return ParamWords(np.where(m.bits, w.words, np.uint32(0)), w.layout)


# ---------------------------------------------------------------------------
# Plaintext vector math (decrypted parameters only)
# ---------------------------------------------------------------------------

Vector = Union[ParamWords, np.ndarray, Sequence[float]]


def as_float64(v: Vector) -> np.ndarray:
    if isinstance(v, ParamWords):
        return v.floats64()
    return np.asarray(v, dtype=np.float64).reshape(-1)


def scale(w: ParamWords, c: float) -> ParamWords:
    return ParamWords.from_floats(w.floats64() * c, w.layout)


def add(a: ParamWords, b: ParamWords) -> ParamWords:
    if a.layout != b.layout:
        raise ShapeError("layout mismatch")
    return ParamWords.from_floats(a.floats64() + b.floats64(), a.layout)


def sub(a: ParamWords, b: ParamWords) -> ParamWords:
    if a.layout != b.layout:
        raise ShapeError("layout mismatch")
    return ParamWords.from_floats(a.floats64() - b.floats64(), a.layout)


def l2_norm(w: Vector) -> float:
    return float(np.linalg.norm(as_float64(w)))


def last_layer(w: Vector, layout: LayerLayout | None = None) -> np.ndarray:
    """Slice of the final layer's weights and bias as float64."""
    if layout is None:
        if not isinstance(w, ParamWords):
            raise ShapeError("a layout is required for raw arrays")
        layout = w.layout
    arr = as_float64(w)
    if arr.size != layout.total:
        raise ShapeError("vector does not match layout")
    off, length = layout.last_layer_range
    return arr[off : off + length]


def coordinate_median(vectors: Sequence[Vector]) -> np.ndarray:
    if len(vectors) == 0:
        raise ShapeError("median of an empty list")
    stacked = np.vstack([as_float64(v) for v in vectors])
    return np.median(stacked, axis=0)


def cosine(u: Vector, v: Vector) -> float:
    a, b = as_float64(u), as_float64(v)
    if a.size != b.size:
        raise ShapeError("length mismatch")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity with a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def serialize(w: ParamWords) -> bytes:
    return w.words.astype(_LE_WORD, copy=False).tobytes()


def deserialize(data: bytes, layout: LayerLayout) -> ParamWords:
    if len(data) != WORD_BYTES * layout.total:
        raise FormatError(f"expected {WORD_BYTES * layout.total} bytes, got {len(data)}")
    return ParamWords(np.frombuffer(data, dtype=_LE_WORD).astype(np.uint32), layout)
