from .container import import_moving_mnist, load_video_batch, read_container, write_container
from .download import KNOWN_SOURCES, Downloader, fetch
from .generators import (
    MovingDigitsDataset,
    generate_bouncing,
    generate_moving_digits,
    generate_translating_bump,
    reflect_step,
    sample_bounce_spec,
)
from .sprites import builtin_glyphs, load_digit_sprites, resize_sprites

__all__ = (
    "KNOWN_SOURCES",
    "Downloader",
    "MovingDigitsDataset",
    "builtin_glyphs",
    "fetch",
    "generate_bouncing",
    "generate_moving_digits",
    "generate_translating_bump",
    "import_moving_mnist",
    "load_digit_sprites",
    "load_video_batch",
    "read_container",
    "reflect_step",
    "resize_sprites",
    "sample_bounce_spec",
    "write_container",
)
