import csv
import json
import os
import typing as t
from functools import partial, wraps

import anyio
import numpy as np
import typing_extensions as te
from anyio._core._eventloop import threadlocals

T = t.TypeVar("T")
R = t.TypeVar("R")
P = te.ParamSpec("P")


def syncify(
    async_function: t.Callable[P, t.Coroutine[t.Any, t.Any, T]],
) -> t.Callable[P, T]:
    """
    Take an async function and create a regular one that receives the same keyword and
    positional arguments, and that when called, runs the original async function in a
    fresh event loop, or in the running one when called from a worker thread.
    """

    @wraps(async_function)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> T:
        partial_f = partial(async_function, *args, **kwargs)

        if not getattr(threadlocals, "current_async_backend", None):
            return anyio.run(partial_f)
        return anyio.from_thread.run(partial_f)

    return wrapper


async def amap_threads(
    func: t.Callable[[T], R],
    items: t.Sequence[T],
    jobs: int = 1,
) -> list[R]:
    """
    Run `func` over `items` in worker threads, at most `jobs` at a time.
    Results come back in input order regardless of completion order. If any call
    fails, the error of the earliest failing item is raised as is.
    """
    results: list[t.Optional[R]] = [None] * len(items)
    errors: list[t.Optional[Exception]] = [None] * len(items)
    limiter = anyio.CapacityLimiter(max(1, jobs))

    async def run(index: int, item: T) -> None:
        try:
            results[index] = await anyio.to_thread.run_sync(
                func, item, limiter=limiter
            )
        except Exception as e:
            errors[index] = e

    async with anyio.create_task_group() as tg:
        for index, item in enumerate(items):
            tg.start_soon(run, index, item)
    for error in errors:
        if error is not None:
            raise error
    return t.cast(list[R], results)


def runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """[start, stop) bounds of every maximal run of True in a boolean vector."""
    padded = np.concatenate([[False], np.asarray(mask, dtype=bool), [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]


def write_json(path: t.Union[str, os.PathLike], payload: t.Any) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def write_csv(
    path: t.Union[str, os.PathLike],
    header: t.Sequence[str],
    rows: t.Iterable[t.Sequence],
) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
