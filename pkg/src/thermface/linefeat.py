"""
Line-feature extraction with a bank of twelve 3x3 zero-sum masks.

The default bank holds four orientations (horizontal, vertical, +45 and
-45 degrees) with the line through each of the three positions of the
window. Lines carry weight +2 on three cells and -1 on the other six.
The diagonal families follow the wrapped diagonals of the 3x3 window, so
the three masks of one orientation partition its nine cells exactly as
the three rows do for the horizontal family.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ImageTooSmall, InvalidParameter, NonZeroSumMask, ParseError, UnreadableFile, WrongCount

BANK_SIZE = 12
# zero-sum check for user banks; allows decimal round-off in hand-typed files
SUM_TOLERANCE = 1e-9

_POSITIONS = {
    "horizontal": ("top", "center", "bottom"),
    "vertical": ("left", "center", "right"),
    "diag_plus45": ("top_left", "center", "bottom_right"),
    "diag_minus45": ("top_right", "center", "bottom_left"),
}
DEFAULT_LABELS = tuple(
    (orientation, position)
    for orientation, positions in _POSITIONS.items()
    for position in positions
)


@dataclass(frozen=True)
class Mask3:
    coefficients: np.ndarray
    label: tuple = ("custom", "")

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=np.float64)
        if coef.shape != (3, 3):
            raise InvalidParameter(f"mask must be 3x3, got shape {coef.shape}")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    def __eq__(self, other):
        return (
            isinstance(other, Mask3)
            and self.label == other.label
            and np.array_equal(self.coefficients, other.coefficients)
        )

    __hash__ = None


@dataclass(frozen=True)
class MaskBank:
    masks: tuple

    def __post_init__(self):
        masks = tuple(self.masks)
        if len(masks) != BANK_SIZE:
            raise WrongCount(f"mask bank needs exactly {BANK_SIZE} masks, got {len(masks)}")
        for i, mask in enumerate(masks):
            total = float(mask.coefficients.sum())
            if abs(total) > SUM_TOLERANCE:
                raise NonZeroSumMask(i, total)
        object.__setattr__(self, "masks", masks)

    def __len__(self):
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks)

    def __getitem__(self, i):
        return self.masks[i]

    def find(self, orientation: str, position: str) -> Mask3:
        for mask in self.masks:
            if mask.label == (orientation, position):
                return mask
        raise KeyError((orientation, position))

    def as_array(self) -> np.ndarray:
        return np.stack([m.coefficients for m in self.masks])


def _line_mask(cells) -> np.ndarray:
    coef = np.full((3, 3), -1.0)
    for r, c in cells:
        coef[r, c] = 2.0
    return coef


def default_mask_bank() -> MaskBank:
    rows, cols = np.indices((3, 3))
    masks = []
    for k in range(3):
        masks.append(_line_mask(zip(*np.nonzero(rows == k))))
    for k in range(3):
        masks.append(_line_mask(zip(*np.nonzero(cols == k))))
    # +45 rises to the right in image coordinates: cells with constant r + c (mod 3)
    for k in (1, 2, 0):
        masks.append(_line_mask(zip(*np.nonzero((rows + cols) % 3 == k))))
    for k in (2, 0, 1):
        masks.append(_line_mask(zip(*np.nonzero((rows - cols) % 3 == k))))
    return MaskBank(tuple(Mask3(c, label) for c, label in zip(masks, DEFAULT_LABELS)))


def is_rotation_closed(bank: MaskBank) -> bool:
    """True when every mask's 90-degree rotation is also in the bank."""
    arrays = [m.coefficients for m in bank]
    return all(any(np.array_equal(np.rot90(a), b) for b in arrays) for a in arrays)


# ---------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------
def parse_mask_bank(text: str) -> MaskBank:
    blocks, current = [], []
    start_line = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if current:
                blocks.append((start_line, current))
                current = []
            continue
        try:
            row = [float(tok) for tok in line.split()]
        except ValueError:
            raise ParseError(f"non-numeric coefficient in {line!r}", lineno) from None
        if len(row) != 3:
            raise ParseError(f"expected 3 coefficients, got {len(row)}", lineno)
        if not current:
            start_line = lineno
        current.append(row)
        if len(current) > 3:
            raise ParseError("mask block has more than 3 rows", lineno)
    if current:
        blocks.append((start_line, current))
    for lineno, block in blocks:
        if len(block) != 3:
            raise ParseError("mask block has fewer than 3 rows", lineno)
    if len(blocks) != BANK_SIZE:
        raise WrongCount(f"expected {BANK_SIZE} mask blocks, found {len(blocks)}")
    masks = []
    for i, (_, block) in enumerate(blocks):
        coef = np.array(block)
        if abs(float(coef.sum())) > SUM_TOLERANCE:
            raise NonZeroSumMask(i, float(coef.sum()))
        masks.append(Mask3(coef, DEFAULT_LABELS[i]))
    return MaskBank(tuple(masks))


def load_mask_bank(path) -> MaskBank:
    """Read twelve blank-line separated 3x3 blocks of reals; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"{path}: {exc}") from None
    return parse_mask_bank(text)


def format_mask_bank(bank: MaskBank) -> str:
    out = []
    for mask in bank:
        out.append(f"# {' '.join(mask.label)}")
        for row in mask.coefficients:
            out.append(" ".join(repr(float(v)) for v in row))
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------
def _pad(img: np.ndarray, wrap_columns: bool) -> np.ndarray:
    padded = np.pad(img, ((1, 1), (0, 0)), mode="edge")
    return np.pad(padded, ((0, 0), (1, 1)), mode="wrap" if wrap_columns else "edge")


def convolve3(img, mask: Mask3, wrap_columns: bool = True) -> np.ndarray:
    """
    Correlate *img* with a 3x3 zero-sum mask (no kernel flip), same-size output.

    Rows (log-radius) use edge replication. Columns (angle) wrap around
    unless ``wrap_columns`` is False, in which case they are replicated too.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 3:
        raise ImageTooSmall(f"need an image at least 3x3, got shape {img.shape}")
    coef = mask.coefficients if isinstance(mask, Mask3) else np.asarray(mask, dtype=np.float64)
    padded = _pad(img, wrap_columns)
    height, width = img.shape
    centre = padded[1 : 1 + height, 1 : 1 + width]
    out = np.zeros_like(img)
    # zero-sum masks: offsets from the centre pixel make flat regions exactly 0
    for a in range(3):
        for b in range(3):
            if (a, b) != (1, 1):
                out += coef[a, b] * (padded[a : a + height, b : b + width] - centre)
    return out


def line_response(img, bank: Optional[MaskBank] = None, wrap_columns: bool = True) -> np.ndarray:
    """Pointwise maximum of absolute mask responses, before normalisation."""
    bank = bank or default_mask_bank()
    response = None
    for mask in bank:
        r = np.abs(convolve3(img, mask, wrap_columns))
        response = r if response is None else np.maximum(response, r)
    return response


def extract_line_image(
    img,
    bank: Optional[MaskBank] = None,
    wrap_columns: bool = True,
    binarize_at: Optional[float] = None,
) -> np.ndarray:
    """
    Line-feature image in ``[0, 1]``.

    The max-abs response map is divided by its own maximum; an all-zero map
    stays zero. With ``binarize_at`` set, pixels at or above that level
    become 1 and the rest 0.
    """
    response = line_response(img, bank, wrap_columns)
    peak = response.max()
    if peak > 0:
        response = response / peak
    if binarize_at is not None:
        response = (response >= binarize_at).astype(np.float64)
    return response
