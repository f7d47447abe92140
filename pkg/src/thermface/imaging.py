"""
Grayscale image I/O, synthetic thermal faces and the dataset manifest.

Images travel through the pipeline as 2-D ``float64`` numpy arrays of shape
``(height, width)`` with every value in ``[0, 1]``. Column index is the x
coordinate, row index is y.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    InvalidLabel,
    InvalidParameter,
    ParseError,
    UnreadableFile,
    UnsupportedFormat,
    WriteFailure,
)

PathLike = Union[str, os.PathLike]

__all__ = [
    "DatasetManifest",
    "ManifestEntry",
    "as_gray",
    "atomic_write_bytes",
    "load_image",
    "load_manifest",
    "manifest_to_text",
    "save_image",
    "save_manifest",
    "synth_face",
]


def as_gray(img) -> np.ndarray:
    """Validate *img* as a GrayImage and return it as a float64 array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidParameter(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise InvalidParameter("pixel values must lie in [0, 1]")
    return arr


# ---------------------------------------------------------------------
# PGM / PNG reading
# ---------------------------------------------------------------------
def _pgm_header(data: bytes):
    """Parse the PNM header; return (magic, width, height, maxval, offset)."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise UnreadableFile("truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    pos += 1
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise UnreadableFile(f"bad PGM header: {exc}") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise UnreadableFile(f"bad PGM header values {width}x{height} maxval {maxval}")
    return magic, width, height, maxval, pos


def _read_pgm(data: bytes) -> np.ndarray:
    magic, width, height, maxval, offset = _pgm_header(data)
    count = width * height
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raster = data[offset : offset + count * dtype.itemsize]
        if len(raster) < count * dtype.itemsize:
            raise UnreadableFile("truncated PGM raster")
        values = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    else:
        try:
            values = np.array(data[offset - 1 :].split(), dtype=np.int64)
        except ValueError:
            raise UnreadableFile("non-numeric sample in ASCII PGM") from None
        if values.size < count:
            raise UnreadableFile("truncated ASCII PGM raster")
        values = values[:count].astype(np.float64)
    if values.max(initial=0.0) > maxval:
        raise UnreadableFile("sample exceeds maxval")
    return (values / maxval).reshape(height, width)


def _read_png(path: Path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode not in ("L", "1"):
                raise UnsupportedFormat(f"{path}: PNG mode {mode!r} is not 8-bit grayscale")
            arr = np.asarray(im.convert("L"), dtype=np.float64)
    except (OSError, SyntaxError) as exc:
        raise UnreadableFile(f"{path}: {exc}") from None
    return arr / 255.0


def load_image(path: PathLike) -> np.ndarray:
    """
    Read a grayscale PGM (P2 or P5, 8 or 16 bit) or 8-bit grayscale PNG.

    Intensities are divided by the file's maximum value so the result lies
    in ``[0, 1]``.

    Raises
    ------
    UnreadableFile
        Missing, truncated or corrupt file.
    UnsupportedFormat
        Colour image or unknown magic number.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc.strerror or exc}") from None
    if data[:2] in (b"P2", b"P5"):
        return _read_pgm(data)
    if data[:2] in (b"P1", b"P3", b"P4", b"P6", b"P7"):
        raise UnsupportedFormat(f"{path}: only grayscale PGM (P2/P5) is supported")
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _read_png(path)
    raise UnsupportedFormat(f"{path}: unrecognised image format")


# ---------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------
def atomic_write_bytes(path: PathLike, payload: bytes) -> None:
    """Write *payload* to a temp file beside *path* and rename it into place."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise WriteFailure(f"{path}: {exc.strerror or exc}") from None
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise WriteFailure(f"{path}: {exc.strerror or exc}") from None


def encode_pgm(img) -> bytes:
    img = as_gray(img)
    # round half up, not numpy's half-to-even
    raster = np.floor(img * 255.0 + 0.5).astype(np.uint8)
    height, width = raster.shape
    return b"P5\n%d %d\n255\n" % (width, height) + raster.tobytes()


def save_image(img, path: PathLike) -> None:
    """Write *img* as an 8-bit binary PGM (maxval 255)."""
    atomic_write_bytes(path, encode_pgm(img))


# ---------------------------------------------------------------------
# Synthetic faces
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class _FaceLayout:
    axes: tuple
    base: float
    blobs: np.ndarray  # rows: cx, cy, sigma, amplitude
    segments: np.ndarray  # rows: x0, y0, x1, y1, width, amplitude


def _face_layout(subject_seed: int) -> _FaceLayout:
    rng = np.random.default_rng(subject_seed)
    a = rng.uniform(0.55, 0.68)
    b = rng.uniform(0.68, 0.82)
    base = rng.uniform(0.30, 0.40)

    def inside(count, reach):
        rad = reach * np.sqrt(rng.uniform(0.0, 1.0, count))
        ang = rng.uniform(0.0, 2.0 * np.pi, count)
        return a * rad * np.cos(ang), b * rad * np.sin(ang)

    bx, by = inside(7, 0.75)
    blobs = np.column_stack([
        bx,
        by,
        rng.uniform(0.06, 0.16, bx.size),
        rng.uniform(0.12, 0.30, bx.size) * rng.choice([-1.0, 1.0], bx.size, p=[0.3, 0.7]),
    ])

    sx, sy = inside(9, 0.7)
    length = rng.uniform(0.15, 0.45, sx.size)
    heading = rng.uniform(0.0, np.pi, sx.size)
    segments = np.column_stack([
        sx,
        sy,
        sx + length * np.cos(heading),
        sy + length * np.sin(heading),
        rng.uniform(0.012, 0.02, sx.size),
        rng.uniform(0.18, 0.32, sx.size),
    ])
    return _FaceLayout((a, b), base, blobs, segments)


def _segment_distance(u, v, seg):
    x0, y0, x1, y1 = seg[:4]
    dx, dy = x1 - x0, y1 - y0
    t = ((u - x0) * dx + (v - y0) * dy) / (dx * dx + dy * dy)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(u - (x0 + t * dx), v - (y0 + t * dy))


def synth_face(
    subject_seed: int,
    rotation_deg: float = 0.0,
    scale: float = 1.0,
    size: int = 128,
    variation_seed: Optional[int] = None,
) -> np.ndarray:
    """
    Render a synthetic thermal face.

    The subject's layout (head ellipse, warm/cool Gaussian blobs and thin
    vessel-like line segments) is drawn from ``subject_seed``. The layout is
    expressed in units of half the frame size, rotated by ``rotation_deg``
    and scaled by ``scale`` about pixel ``(size // 2, size // 2)``, which is
    also the centre used by the log-polar registration. Rendering is
    analytic, so rotation introduces no resampling error.

    ``variation_seed`` optionally perturbs blob and vessel amplitudes and
    adds mild sensor noise, giving distinct captures of the same subject.
    ``None`` means no variation.
    """
    if int(size) != size or size < 64:
        raise InvalidParameter(f"size must be an integer >= 64, got {size!r}")
    if not 0.5 <= scale <= 2.0:
        raise InvalidParameter(f"scale must lie in [0.5, 2.0], got {scale!r}")
    if not math.isfinite(rotation_deg):
        raise InvalidParameter("rotation_deg must be finite")
    size = int(size)
    layout = _face_layout(subject_seed)
    blobs = layout.blobs.copy()
    segments = layout.segments.copy()
    noise = None
    if variation_seed is not None:
        vrng = np.random.default_rng([subject_seed, variation_seed])
        blobs[:, 3] *= vrng.normal(1.0, 0.08, len(blobs))
        segments[:, 5] *= vrng.normal(1.0, 0.08, len(segments))
        noise = vrng.normal(0.0, 0.01, (size, size))

    half = size / 2.0
    centre = size // 2
    coords = (np.arange(size, dtype=np.float64) - centre) / half
    x, y = np.meshgrid(coords, coords)
    # inverse-map each pixel into the unrotated, unscaled layout frame
    phi = math.radians(rotation_deg)
    c, s = math.cos(phi), math.sin(phi)
    u = (c * x + s * y) / scale
    v = (-s * x + c * y) / scale

    a, b = layout.axes
    ell = np.sqrt((u / a) ** 2 + (v / b) ** 2)
    head = 1.0 / (1.0 + np.exp((ell - 1.0) / 0.03))

    heat = np.full_like(u, layout.base)
    for cx, cy, sigma, amp in blobs:
        heat += amp * np.exp(-((u - cx) ** 2 + (v - cy) ** 2) / (2.0 * sigma * sigma))
    for seg in segments:
        d = _segment_distance(u, v, seg)
        heat += seg[5] * np.exp(-(d * d) / (2.0 * seg[4] * seg[4]))

    img = 0.05 + head * heat
    if noise is not None:
        img = img + noise
    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class ManifestEntry:
    path: str
    subject: int
    fold: Optional[int] = None


@dataclass
class DatasetManifest:
    """Labelled image list. ``fold`` is ``None`` for entries with no fold column."""

    entries: list
    num_subjects: int
    base_dir: Optional[Path] = field(default=None, compare=False)

    def __post_init__(self):
        if self.num_subjects < 1:
            raise InvalidLabel("num_subjects must be positive")
        for e in self.entries:
            if not 0 <= e.subject < self.num_subjects:
                raise InvalidLabel(f"subject {e.subject} outside 0..{self.num_subjects - 1}")
            if e.fold is not None and e.fold not in (0, 1, 2):
                raise InvalidLabel(f"fold {e.fold} not in {{0, 1, 2}}")

    def __len__(self):
        return len(self.entries)

    @property
    def has_folds(self) -> bool:
        return bool(self.entries) and all(e.fold is not None for e in self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def subjects(self) -> np.ndarray:
        return np.array([e.subject for e in self.entries], dtype=np.int64)


def _parse_int(text, what, lineno):
    try:
        return int(text.strip())
    except ValueError:
        raise ParseError(f"{what} {text.strip()!r} is not an integer", lineno) from None


def parse_manifest(lines: Iterable[str], num_subjects: Optional[int] = None, base_dir=None) -> DatasetManifest:
    entries = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        if len(fields) not in (2, 3) or not fields[0].strip():
            raise ParseError("expected 'path,subject_id[,fold]'", lineno)
        subject = _parse_int(fields[1], "subject_id", lineno)
        fold = _parse_int(fields[2], "fold", lineno) if len(fields) == 3 else None
        if subject < 0 or (num_subjects is not None and subject >= num_subjects):
            raise InvalidLabel(f"line {lineno}: subject_id {subject} out of range")
        if fold is not None and fold not in (0, 1, 2):
            raise InvalidLabel(f"line {lineno}: fold {fold} not in {{0, 1, 2}}")
        entries.append(ManifestEntry(fields[0].strip(), subject, fold))
    if not entries:
        raise ParseError("manifest contains no entries")
    if num_subjects is None:
        num_subjects = max(e.subject for e in entries) + 1
    return DatasetManifest(entries, num_subjects, base_dir)


def load_manifest(path: PathLike, num_subjects: Optional[int] = None) -> DatasetManifest:
    """
    Parse a ``path,subject_id[,fold]`` CSV (no header, ``#`` comments allowed).

    Relative image paths resolve against the manifest's directory. When
    ``num_subjects`` is omitted it is taken as the largest subject id + 1.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"{path}: {exc}") from None
    return parse_manifest(text.splitlines(), num_subjects, base_dir=path.parent)


def manifest_to_text(manifest: DatasetManifest) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for e in manifest.entries:
        row = [e.path, e.subject] if e.fold is None else [e.path, e.subject, e.fold]
        writer.writerow(row)
    return buf.getvalue()


def save_manifest(manifest: DatasetManifest, path: PathLike) -> None:
    atomic_write_bytes(path, manifest_to_text(manifest).encode("utf-8"))


def subject_seed(corpus_seed: int, subject: int) -> int:
    return int(np.random.SeedSequence([corpus_seed, subject]).generate_state(1)[0])


def corpus_filename(subject: int, index: int, rotation: float, scale: float) -> str:
    return f"s{subject:02d}_i{index:03d}_rot{rotation:+g}_sc{scale:.2f}.pgm"


def generate_corpus(
    out_dir: PathLike,
    num_subjects: int,
    per_subject: int,
    rotations: Sequence[float] = (0.0,),
    scales: Sequence[float] = (1.0,),
    size: int = 128,
    seed: int = 0,
) -> DatasetManifest:
    """
    Write a synthetic corpus and its manifest (``manifest.csv``, no folds).

    Image ``j`` of a subject uses rotation ``rotations[j % R]`` and scale
    ``scales[(j // R) % S]``, and its own capture variation.
    """
    if num_subjects < 1 or per_subject < 1:
        raise InvalidParameter("num_subjects and per_subject must be >= 1")
    if not rotations or not scales:
        raise InvalidParameter("need at least one rotation and one scale")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WriteFailure(f"{out}: {exc.strerror or exc}") from None
    entries = []
    for s in range(num_subjects):
        sseed = subject_seed(seed, s)
        for j in range(per_subject):
            rot = float(rotations[j % len(rotations)])
            sc = float(scales[(j // len(rotations)) % len(scales)])
            name = corpus_filename(s, j, rot, sc)
            save_image(synth_face(sseed, rot, sc, size, variation_seed=j), out / name)
            entries.append(ManifestEntry(name, s))
    manifest = DatasetManifest(entries, num_subjects, out)
    save_manifest(manifest, out / "manifest.csv")
    return manifest
