"""Worker-count resolution and the ordered work pool."""

import logging
import os
import sys
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

from ..config import InternalConfig
from ..exceptions import ConfigurationError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def threads_from_environment() -> Optional[int]:
    """Read the thread override from the environment.

    Returns:
        The requested count, or None when the variable is unset or empty

    Raises:
        ConfigurationError: If the variable is set to something other than a positive integer
    """
    raw = os.environ.get(InternalConfig.threads_env_var, "").strip()
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError as e:
        raise ConfigurationError(f"{InternalConfig.threads_env_var} must be an integer, got {raw!r}") from e
    if value < 1:
        raise ConfigurationError(f"{InternalConfig.threads_env_var} must be at least 1, got {value}")
    return value


def resolve_workers(flag: Optional[int] = None, configured: Optional[int] = None) -> int:
    """Pick the worker count: command-line flag, then environment, then config, then 1."""
    if flag is not None:
        if flag < 1:
            raise ConfigurationError(f"--threads must be at least 1, got {flag}")
        return flag
    from_env = threads_from_environment()
    if from_env is not None:
        logger.info(f"Using {from_env} workers from {InternalConfig.threads_env_var}")
        return from_env
    if configured is not None and configured >= 1:
        return configured
    return 1


def show_progress_default() -> bool:
    """Progress bars only when stderr is a terminal."""
    return sys.stderr.isatty()


def ordered_map(
    func: Callable[[T], R],
    items: Iterable[T],
    workers: int = 1,
    processes: bool = False,
    desc: str = "",
    show_progress: Optional[bool] = None,
) -> List[R]:
    """Apply func to every item and return results in input order.

    With workers == 1 the items run in the calling thread, which keeps
    results bit-reproducible. Otherwise a thread pool (or a process pool
    when ``processes`` is set; func and items must then be picklable) runs
    them; the order of the returned list never depends on completion order.
    """
    items = list(items)
    if show_progress is None:
        show_progress = show_progress_default()
    progress = tqdm(total=len(items), desc=desc, disable=not show_progress, leave=False)
    try:
        if workers <= 1 or len(items) <= 1:
            results = []
            for item in items:
                results.append(func(item))
                progress.update(1)
            return results

        pool_cls = ProcessPoolExecutor if processes else ThreadPoolExecutor
        pool: Executor
        with pool_cls(max_workers=workers) as pool:
            futures = [pool.submit(func, item) for item in items]
            results = []
            for future in futures:
                results.append(future.result())
                progress.update(1)
        return results
    finally:
        progress.close()
