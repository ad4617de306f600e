"""File formats: point CSV, grayscale stain images, SFT feature tensors, label maps."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

SFT_MAGIC = b"SFT1"
_U32_MAX = 2**32 - 1

# fixed palette for label-map PNG renderings; label i uses color (i-1) % 12
LABEL_PALETTE = [
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 190),
    (0, 128, 128),
    (170, 110, 40),
]


class ParseError(ValueError):
    """Malformed text input (CSV)."""


class FormatError(ValueError):
    """Malformed binary input (SFT, PGM, PNG)."""


@dataclass
class PointCloud:
    """Spatial detections: coordinates in stain-image pixels plus a gene panel.

    ``gene_index`` holds, per point, the index of its token in ``gene_panel``;
    the panel is unique and sorted lexicographically.
    """

    x: np.ndarray
    y: np.ndarray
    gene_index: np.ndarray
    gene_panel: list[str]

    @property
    def n_points(self) -> int:
        return len(self.x)

    @property
    def n_genes(self) -> int:
        return len(self.gene_panel)

    def gene_tokens(self):
        panel = np.asarray(self.gene_panel, dtype=object)
        return panel[self.gene_index]

    def subset_genes(self, keep_indices) -> "PointCloud":
        """Restrict to a subset of panel indices (points of other genes drop out)."""
        keep = np.asarray(sorted(int(i) for i in keep_indices), dtype=np.int64)
        if len(keep) == 0:
            raise ValueError("gene subset is empty")
        if keep[0] < 0 or keep[-1] >= self.n_genes:
            raise ValueError("gene subset index out of range")
        remap = -np.ones(self.n_genes, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        sel = remap[self.gene_index] >= 0
        return PointCloud(
            x=self.x[sel].copy(),
            y=self.y[sel].copy(),
            gene_index=remap[self.gene_index[sel]].astype(np.int64),
            gene_panel=[self.gene_panel[i] for i in keep],
        )


@dataclass
class GrayImage:
    """Single-channel stain image with intensities normalized to [0, 1]."""

    height: int
    width: int
    pixels: np.ndarray  # (H, W) float32 in [0, 1]


@dataclass
class FeatureTensor:
    """Named-channel H x W x C float32 feature grid."""

    height: int
    width: int
    channels: int
    channel_names: list[str]
    data: np.ndarray  # (H, W, C) float32

    @classmethod
    def from_array(cls, data, channel_names=None) -> "FeatureTensor":
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"feature data must be H x W x C, got shape {data.shape}")
        h, w, c = data.shape
        if h < 1 or w < 1 or c < 1:
            raise ValueError(f"feature dims must be >= 1, got {data.shape}")
        if channel_names is None:
            channel_names = [""] * c
        channel_names = [str(n) for n in channel_names]
        if len(channel_names) != c:
            raise ValueError(
                f"{len(channel_names)} channel names for {c} channels"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("feature data contains non-finite values")
        return cls(h, w, c, channel_names, data)

    def pixels(self) -> np.ndarray:
        """Row-major (H*W, C) view of the data."""
        return self.data.reshape(-1, self.channels)


@dataclass
class LabelMap:
    """Cluster labels on the analysis grid; 0 marks background."""

    labels: np.ndarray  # (H, W) int32
    n_clusters: int
    provenance: dict = field(default_factory=dict)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def foreground(self) -> np.ndarray:
        return self.labels > 0

    def to_pairs(self):
        """Return (assignment, pixel_index) of the foreground pixels, row-major."""
        ys, xs = np.nonzero(self.labels > 0)
        idx = np.stack([ys, xs], axis=1).astype(np.int64)
        return self.labels[ys, xs].astype(np.int64), idx


# ---------------------------------------------------------------------------
# points CSV

def parse_points(text: str) -> PointCloud:
    """Parse `x,y,gene` CSV text into a canonical PointCloud.

    Raises ParseError (with the 1-based line number) on a missing header,
    wrong field count, non-numeric or negative coordinates, or empty input.
    """
    lines = text.splitlines()
    if not lines or all(not ln.strip() for ln in lines):
        raise ParseError("line 1: empty points file")
    header = lines[0].strip()
    if header != "x,y,gene":
        raise ParseError(f"line 1: expected header 'x,y,gene', got {header!r}")

    xs: list[float] = []
    ys: list[float] = []
    tokens: list[str] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            if lineno == len(lines) and raw == "":
                continue  # tolerate a dangling final newline only
            raise ParseError(f"line {lineno}: blank record")
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"line {lineno}: expected 3 fields, got {len(parts)}")
        try:
            px = float(parts[0])
            py = float(parts[1])
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric coordinate") from None
        if not (np.isfinite(px) and np.isfinite(py)):
            raise ParseError(f"line {lineno}: non-finite coordinate")
        if px < 0 or py < 0:
            raise ParseError(f"line {lineno}: negative coordinate")
        gene = parts[2].strip()
        if not gene:
            raise ParseError(f"line {lineno}: empty gene token")
        xs.append(px)
        ys.append(py)
        tokens.append(gene)

    panel = sorted(set(tokens))
    index = {g: i for i, g in enumerate(panel)}
    return PointCloud(
        x=np.asarray(xs, dtype=np.float64),
        y=np.asarray(ys, dtype=np.float64),
        gene_index=np.asarray([index[t] for t in tokens], dtype=np.int64),
        gene_panel=panel,
    )


def points_to_csv(pc: PointCloud) -> str:
    """Serialize a PointCloud; parse_points on the result reproduces it."""
    lines = ["x,y,gene"]
    tokens = pc.gene_tokens()
    for i in range(pc.n_points):
        lines.append(f"{float(pc.x[i])!r},{float(pc.y[i])!r},{tokens[i]}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# SFT feature-tensor format
#
# bytes 0-3   magic "SFT1"
# bytes 4-19  four little-endian u32: height, width, channels, name_table_len
# then        name_table_len bytes of UTF-8 channel names joined by LF
# then        H*W*C little-endian float32, row-major, channel-last

def write_feature_tensor(t: FeatureTensor) -> bytes:
    for dim, name in ((t.height, "height"), (t.width, "width"), (t.channels, "channels")):
        if not (1 <= dim <= _U32_MAX):
            raise FormatError(f"{name}={dim} outside u32 range")
    for cname in t.channel_names:
        if "\n" in cname:
            raise FormatError(f"channel name {cname!r} contains LF")
    table = "\n".join(t.channel_names).encode("utf-8")
    if len(table) > _U32_MAX:
        raise FormatError("channel name table overflows u32 length")
    data = np.ascontiguousarray(t.data, dtype="<f4")
    if data.shape != (t.height, t.width, t.channels):
        raise FormatError(
            f"data shape {data.shape} does not match header "
            f"({t.height}, {t.width}, {t.channels})"
        )
    if not np.all(np.isfinite(data)):
        raise FormatError("tensor contains non-finite values")
    header = struct.pack("<4I", t.height, t.width, t.channels, len(table))
    return SFT_MAGIC + header + table + data.tobytes(order="C")


def read_feature_tensor(buf: bytes) -> FeatureTensor:
    if len(buf) < 20:
        raise FormatError("truncated SFT header")
    if buf[:4] != SFT_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {SFT_MAGIC!r}")
    h, w, c, table_len = struct.unpack("<4I", buf[4:20])
    if h < 1 or w < 1 or c < 1:
        raise FormatError(f"zero dimension in header ({h}, {w}, {c})")
    offset = 20
    if len(buf) < offset + table_len:
        raise FormatError("truncated channel name table")
    table = buf[offset : offset + table_len]
    offset += table_len
    if table_len == 0:
        names = [""] * c
    else:
        names = table.decode("utf-8").split("\n")
        if len(names) != c:
            raise FormatError(f"{len(names)} channel names for {c} channels")
    payload = h * w * c * 4
    if len(buf) < offset + payload:
        raise FormatError(
            f"truncated payload: need {payload} bytes, have {len(buf) - offset}"
        )
    if len(buf) > offset + payload:
        raise FormatError(f"{len(buf) - offset - payload} trailing bytes after payload")
    data = np.frombuffer(buf[offset : offset + payload], dtype="<f4")
    data = data.reshape(h, w, c).copy()
    if not np.all(np.isfinite(data)):
        raise FormatError("tensor contains non-finite values")
    return FeatureTensor(h, w, c, names, data)


def save_sft(path, t: FeatureTensor) -> None:
    with open(path, "wb") as f:
        f.write(write_feature_tensor(t))


def load_sft(path) -> FeatureTensor:
    with open(path, "rb") as f:
        return read_feature_tensor(f.read())


# ---------------------------------------------------------------------------
# grayscale images (8/16-bit PNG or binary PGM), normalized to [0, 1]

def load_gray_image(path) -> GrayImage:
    path = str(path)
    if path.lower().endswith(".pgm"):
        arr, maxval = _read_pgm(path)
        pixels = arr.astype(np.float32) / float(maxval)
    else:
        with Image.open(path) as im:
            if im.mode == "L":
                pixels = np.asarray(im, dtype=np.float32) / 255.0
            elif im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=np.float64)
                if arr.max(initial=0) > 65535:
                    raise FormatError(f"{path}: intensity range exceeds 16 bits")
                pixels = (arr / 65535.0).astype(np.float32)
            else:
                raise FormatError(
                    f"{path}: expected 8/16-bit grayscale image, got mode {im.mode!r}"
                )
    h, w = pixels.shape
    return GrayImage(height=h, width=w, pixels=np.clip(pixels, 0.0, 1.0))


def write_gray_png(path, pixels) -> None:
    """Write a [0, 1] float image as 8-bit grayscale PNG."""
    arr = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(path, format="PNG")


def _read_pgm(path):
    with open(path, "rb") as f:
        data = f.read()
    # header tokens: magic, width, height, maxval; '#' comments allowed
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise FormatError(f"{path}: truncated PGM header")
        ch = data[i : i + 1]
        if ch == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    i += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: expected binary PGM magic P5, got {tokens[0]!r}")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if width < 1 or height < 1 or not (0 < maxval < 65536):
        raise FormatError(f"{path}: bad PGM dimensions or maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    raw = data[i : i + need]
    if len(raw) < need:
        raise FormatError(f"{path}: truncated PGM payload")
    arr = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return arr.astype(np.uint16), maxval


# ---------------------------------------------------------------------------
# label maps: 16-bit PGM (values = labels) and a PNG rendering

def write_label_pgm(path, lm: LabelMap) -> None:
    labels = np.asarray(lm.labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 65535:
        raise FormatError("labels outside 16-bit PGM range")
    h, w = labels.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(labels.astype(">u2").tobytes(order="C"))


def read_label_pgm(path) -> LabelMap:
    """Read a label map written by write_label_pgm.

    Labels are taken verbatim; contiguity of the label range is not enforced
    for files produced elsewhere.
    """
    arr, _maxval = _read_pgm(path)
    labels = arr.astype(np.int32)
    return LabelMap(labels=labels, n_clusters=int(labels.max(initial=0)))


def render_label_png(path, lm: LabelMap) -> None:
    """Render labels with the fixed 12-color palette; background stays black."""
    labels = np.asarray(lm.labels)
    h, w = labels.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    palette = np.asarray(LABEL_PALETTE, dtype=np.uint8)
    fg = labels > 0
    rgb[fg] = palette[(labels[fg] - 1) % len(palette)]
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
