from __future__ import annotations

import contextlib
import math
import os
import tempfile
from pathlib import Path
from typing import IO, Iterator, NoReturn, Union


def assert_never(x: NoReturn) -> NoReturn:
    assert False, "Unhandled type: {}".format(type(x).__name__)


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


@contextlib.contextmanager
def atomic_path(path: Union[str, Path]) -> Iterator[Path]:
    """Yield a temporary path next to ``path`` and move it into place on success.

    The target is either fully written or left untouched.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    tmp = Path(tmp_name)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


@contextlib.contextmanager
def atomic_open(path: Union[str, Path], mode: str = "w") -> Iterator[IO[str]]:
    with atomic_path(path) as tmp:
        with open(tmp, mode, newline="" if "b" not in mode else None) as f:
            yield f
