import gzip
import logging
from pathlib import Path
from typing import Final

import numpy as np
from PIL import Image, ImageDraw, ImageFilter

from ..exceptions import ContainerError, SpriteLoadError
from .container import BinaryReader

logger = logging.getLogger(__name__)

GLYPH_SIZE: Final = 28
_IDX_UBYTE_IMAGES: Final = 0x00000803

# Seven-segment layout on the 28x28 glyph canvas: (x0, y0, x1, y1).
_SEGMENTS: Final[dict[str, tuple[int, int, int, int]]] = {
    "a": (9, 5, 18, 5),
    "b": (19, 6, 19, 13),
    "c": (19, 15, 19, 22),
    "d": (9, 23, 18, 23),
    "e": (8, 15, 8, 22),
    "f": (8, 6, 8, 13),
    "g": (9, 14, 18, 14),
}
_DIGIT_SEGMENTS: Final = ("abcdef", "bc", "abged", "abgcd", "fgbc", "afgcd", "afgedc", "abc", "abcdefg", "abcdfg")


def builtin_glyphs(size: int = GLYPH_SIZE) -> np.ndarray:
    """Ten procedurally drawn digits 0-9, (10, size, size) float32 in [0, 1]."""
    glyphs = []
    for segments in _DIGIT_SEGMENTS:
        image = Image.new("L", (GLYPH_SIZE, GLYPH_SIZE), 0)
        draw = ImageDraw.Draw(image)
        for name in segments:
            draw.line(_SEGMENTS[name], fill=255, width=3)
        image = image.filter(ImageFilter.GaussianBlur(0.8))
        glyphs.append(np.asarray(image, dtype=np.float32))

    stacked = np.stack(glyphs)
    stacked /= stacked.max(axis=(1, 2), keepdims=True)
    return resize_sprites(stacked, size)


def resize_sprites(sprites: np.ndarray, size: int) -> np.ndarray:
    """Resize (N, h, w) sprites to (N, size, size) with bilinear filtering."""
    if sprites.shape[1:] == (size, size):
        return sprites.astype(np.float32)
    resized = [
        np.asarray(Image.fromarray(sprite.astype(np.float32)).resize((size, size), Image.Resampling.BILINEAR))
        for sprite in sprites
    ]
    return np.clip(np.stack(resized), 0.0, 1.0).astype(np.float32)


def read_idx_images(payload: bytes) -> np.ndarray:
    """Decode an IDX3 unsigned-byte image file (MNIST layout) to (N, rows, cols) uint8."""
    reader = BinaryReader(payload, byteorder=">")
    magic = reader.read_uint32()
    if magic != _IDX_UBYTE_IMAGES:
        raise ContainerError(f"Not an IDX3 ubyte image file (magic {magic:#010x})")

    count, rows, cols = reader.read_uint32(), reader.read_uint32(), reader.read_uint32()
    data = reader.read_bytes(count * rows * cols)
    return np.frombuffer(data, dtype=np.uint8).reshape(count, rows, cols)


def _read_sprite_file(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        array = np.load(path, allow_pickle=False)
    else:
        payload = path.read_bytes()
        if path.suffix == ".gz":
            payload = gzip.decompress(payload)
        array = read_idx_images(payload)

    if array.ndim != 3 or array.shape[1] != array.shape[2]:
        raise SpriteLoadError(f"Sprites in {path} must be an (N, s, s) array, got shape {array.shape}")
    if len(array) < 10:
        raise SpriteLoadError(f"{path} holds {len(array)} sprites, at least 10 are required")

    if array.dtype == np.uint8:
        return array.astype(np.float32) / 255.0
    array = array.astype(np.float32)
    if array.min() < 0 or array.max() > 1:
        raise SpriteLoadError(f"Sprite values in {path} must lie in [0, 1]")
    return array


def load_digit_sprites(
    source: Path | None = None,
    *,
    fallback: bool = True,
    size: int = GLYPH_SIZE,
    limit: int | None = None,
) -> np.ndarray:
    """
    Load the digit sprite set.

    Args:
        source (Path | None): An `.npy` array (N, s, s) or an MNIST IDX image file (optionally `.gz`).
            None selects the built-in glyphs.
        fallback (bool): Use the built-in glyphs when `source` does not exist.
        size (int): Output sprite side.
        limit (int | None): Keep only the first `limit` sprites of an external file.

    Returns:
        np.ndarray: (N, size, size) float32 sprites in [0, 1], N >= 10.

    Raises:
        SpriteLoadError: If the file is missing (and fallback is disabled) or corrupt.
    """
    if source is None:
        return builtin_glyphs(size)

    if not source.exists():
        if not fallback:
            raise SpriteLoadError(f"Sprite file not found: {source}")
        logger.warning("Sprite file %s not found, using built-in glyphs", source)
        return builtin_glyphs(size)

    try:
        sprites = _read_sprite_file(source)
    except (ContainerError, ValueError, OSError, EOFError) as e:
        raise SpriteLoadError(f"Corrupt sprite file {source}: {e}") from e

    if limit is not None:
        sprites = sprites[: max(limit, 10)]
    logger.debug("Loaded %d sprites from %s", len(sprites), source)
    return resize_sprites(sprites, size)
