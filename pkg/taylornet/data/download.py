import asyncio
import logging
import os
import tempfile
from collections.abc import AsyncGenerator, AsyncIterator
from contextlib import asynccontextmanager
from dataclasses import dataclass
from http import HTTPStatus
from pathlib import Path
from typing import Final

from aiohttp import ClientError, ClientResponse, ClientSession, ClientTimeout

from ..exceptions import DownloadError

logger = logging.getLogger(__name__)

CHUNK_SIZE: Final = 262_144


@dataclass(slots=True, frozen=True)
class RemoteSource:
    url: str
    filename: str
    description: str


KNOWN_SOURCES: Final[dict[str, RemoteSource]] = {
    "moving-mnist-test": RemoteSource(
        "http://www.cs.toronto.edu/~nitish/unsupervised_video/mnist_test_seq.npy",
        "mnist_test_seq.npy",
        "10,000 Moving-MNIST test sequences, uint8 (20, N, 64, 64)",
    ),
    "mnist-train-images": RemoteSource(
        "https://storage.googleapis.com/cvdf-datasets/mnist/train-images-idx3-ubyte.gz",
        "train-images-idx3-ubyte.gz",
        "MNIST training digits in IDX format, used as sprites",
    ),
}


class Downloader:
    """Streams remote archives to disk over a shared aiohttp session."""

    def __init__(self, session: ClientSession):
        self._session = session

    @asynccontextmanager
    async def stream(self, url: str) -> AsyncGenerator[tuple[int | None, AsyncIterator[bytes]], None]:
        async with self._session.get(url) as response:
            await _check_response(response, url)

            async def _chunks() -> AsyncIterator[bytes]:
                async for chunk in response.content.iter_chunked(CHUNK_SIZE):
                    yield chunk

            yield response.content_length, _chunks()

    async def download(self, url: str, dest: Path) -> Path:
        """Download `url` to `dest` through a temporary file; `dest` only appears when complete.

        Raises:
            DownloadError: On HTTP errors, connection failures or truncated bodies.
        """
        dest.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=dest.parent, prefix=f".{dest.name}.", suffix=".part")
        received = 0
        try:
            with os.fdopen(fd, "wb") as f:
                async with self.stream(url) as (expected, chunks):
                    async for chunk in chunks:
                        f.write(chunk)
                        received += len(chunk)
            if expected is not None and received < expected:
                raise DownloadError(f"Truncated download from {url}: {received} of {expected} bytes")
            os.replace(tmp_name, dest)
        except (ClientError, TimeoutError) as e:
            raise DownloadError(f"Cannot fetch {url}: {e}") from e
        finally:
            Path(tmp_name).unlink(missing_ok=True)

        logger.info("Downloaded %s (%d bytes) to %s", url, received, dest)
        return dest

    async def close(self):
        await self._session.close()


async def _check_response(response: ClientResponse, url: str):
    if response.status != HTTPStatus.OK:
        raise DownloadError(f"GET {url} returned HTTP {response.status}")


async def fetch_sources(names: list[str], out_dir: Path, *, overwrite: bool = False, timeout: float = 600.0) -> list[Path]:
    """Download the named public archives concurrently into `out_dir`."""
    unknown = [name for name in names if name not in KNOWN_SOURCES]
    if unknown:
        raise DownloadError(f"Unknown source(s) {', '.join(unknown)}; known: {', '.join(KNOWN_SOURCES)}")

    downloader = Downloader(ClientSession(timeout=ClientTimeout(total=timeout)))
    try:
        tasks = []
        for name in names:
            source = KNOWN_SOURCES[name]
            dest = out_dir / source.filename
            if dest.exists() and not overwrite:
                logger.info("%s already present at %s", name, dest)
                tasks.append(asyncio.sleep(0, result=dest))
            else:
                tasks.append(downloader.download(source.url, dest))
        return list(await asyncio.gather(*tasks))
    finally:
        await downloader.close()


def fetch(names: list[str], out_dir: Path, *, overwrite: bool = False) -> list[Path]:
    return asyncio.run(fetch_sources(names, out_dir, overwrite=overwrite))
