"""Dense float32 tensors, FT32 files and 8-bit PNG images.

A tensor here is simply a C-contiguous ``numpy.ndarray`` of dtype float32 and
rank 2 (H x W), 3 (C x H x W) or 4 (N x C x H x W). The helpers below enforce
that contract at the package boundary.

FT32 layout (all little-endian)::

    b"FT32" | u8 version (=1) | u8 rank | rank x u32 extents | f32 payload
"""

import io
import os
import struct
import tempfile

import numpy as np
from PIL import Image

from .errors import FormatError, ShapeError, UnsupportedVersionError

MAGIC = b"FT32"
VERSION = 1
DTYPE = np.float32
_LE_F32 = np.dtype("<f4")

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def _check_shape(shape):
    shape = tuple(int(s) for s in shape)
    if len(shape) not in (2, 3, 4):
        raise ShapeError(f"rank must be 2, 3 or 4, got shape {shape}")
    if any(s < 1 for s in shape):
        raise ShapeError(f"all extents must be >= 1, got shape {shape}")
    return shape


def as_tensor(x, ranks=(2, 3, 4)):
    """Convert ``x`` to a contiguous float32 array and validate its rank."""
    t = np.ascontiguousarray(x, dtype=DTYPE)
    if t.ndim not in ranks:
        raise ShapeError(f"expected rank in {ranks}, got shape {t.shape}")
    if t.size == 0:
        raise ShapeError(f"empty tensor of shape {t.shape}")
    return t


def check_finite(t, what="tensor"):
    if not np.all(np.isfinite(t)):
        raise FloatingPointError(f"{what} contains NaN or Inf")
    return t


def tensor_new(shape, fill=0.0):
    """Tensor of ``shape`` with every element equal to ``fill``."""
    return np.full(_check_shape(shape), fill, dtype=DTYPE)


def add(a, b):
    return np.add(a, b, dtype=DTYPE)


def sub(a, b):
    return np.subtract(a, b, dtype=DTYPE)


def scale(a, k):
    return np.multiply(a, DTYPE(k), dtype=DTYPE)


def hadamard(a, b):
    return np.multiply(a, b, dtype=DTYPE)


# ---------------------------------------------------------------------------
# FT32


def _atomic_write(path, payload):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}", path) from exc


def encode_ft32(t):
    t = np.asarray(t, dtype=DTYPE)
    shape = _check_shape(t.shape)
    header = MAGIC + struct.pack("<BB", VERSION, len(shape))
    header += struct.pack(f"<{len(shape)}I", *shape)
    return header + np.ascontiguousarray(t, dtype=_LE_F32).tobytes()


def decode_ft32(buf, path="<bytes>"):
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic, not an FT32 file")
    version, rank = buf[4], buf[5]
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported FT32 version {version}")
    if rank not in (2, 3, 4):
        raise FormatError(f"{path}: invalid rank {rank}")
    end = 6 + 4 * rank
    if len(buf) < end:
        raise FormatError(f"{path}: truncated header")
    shape = struct.unpack(f"<{rank}I", buf[6:end])
    if any(s == 0 for s in shape):
        raise FormatError(f"{path}: zero extent in shape {shape}")
    n = int(np.prod(shape, dtype=np.int64))
    payload = buf[end:]
    if len(payload) != 4 * n:
        raise FormatError(
            f"{path}: payload has {len(payload)} bytes, header implies {4 * n}"
        )
    data = np.frombuffer(payload, dtype=_LE_F32).astype(DTYPE)
    return data.reshape(shape)


def tensor_write_ft32(t, path):
    """Write ``t`` to ``path`` in FT32 layout (atomically)."""
    _atomic_write(path, encode_ft32(t))


def tensor_read_ft32(path):
    """Read an FT32 file; exact inverse of :func:`tensor_write_ft32`."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read {path}: {exc.strerror}", os.fspath(path)) from exc
    return decode_ft32(buf, path=os.fspath(path))


# ---------------------------------------------------------------------------
# PNG


def image_read_png(path):
    """Read an 8-bit grayscale or RGB PNG as a C x H x W tensor in [0, 1].

    Returns an array with ``C == 1`` for grayscale and ``C == 3`` for RGB.
    Palette, alpha and 16-bit images are rejected with :class:`FormatError`.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode, fmt = im.mode, im.format
            arr = np.asarray(im)
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise FormatError(f"{path}: cannot decode image: {exc}") from exc
    if fmt != "PNG":
        raise FormatError(f"{path}: not a PNG file")
    if mode == "L":
        arr = arr[None]
    elif mode == "RGB":
        arr = np.transpose(arr, (2, 0, 1))
    else:
        raise FormatError(f"{path}: unsupported PNG mode {mode!r} (need 8-bit L or RGB)")
    if arr.dtype != np.uint8:
        raise FormatError(f"{path}: unsupported bit depth")
    return np.ascontiguousarray(arr.astype(DTYPE) / DTYPE(255.0))


def to_bytes(img):
    """Quantize samples in [0, 1] to uint8 with round-half-up."""
    img = np.asarray(img, dtype=np.float64)
    return np.clip(np.floor(img * 255.0 + 0.5), 0, 255).astype(np.uint8)


def image_write_png(img, path):
    """Write a H x W or C x H x W (C in {1, 3}) tensor as an 8-bit PNG."""
    img = np.asarray(img)
    if img.ndim == 3:
        if img.shape[0] == 1:
            img = img[0]
        elif img.shape[0] == 3:
            img = np.transpose(img, (1, 2, 0))
        else:
            raise ShapeError(f"PNG needs 1 or 3 channels, got {img.shape[0]}")
    elif img.ndim != 2:
        raise ShapeError(f"PNG needs rank 2 or 3, got shape {img.shape}")
    pil = Image.fromarray(to_bytes(img))
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    _atomic_write(path, buf.getvalue())


def to_gray(img):
    """BT.601 luma of a 3 x H x W image; a 1-channel image passes through."""
    img = as_tensor(img, ranks=(3,))
    if img.shape[0] == 1:
        return img[0].copy()
    if img.shape[0] != 3:
        raise ShapeError(f"to_gray needs 1 or 3 channels, got {img.shape[0]}")
    r, g, b = (img[i].astype(np.float64) for i in range(3))
    wr, wg, wb = GRAY_WEIGHTS
    return (wr * r + wg * g + wb * b).astype(DTYPE)
