import asyncio
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, TypeVar

from ..utils.log_utils import get_logger

logger = get_logger(__name__)

T = TypeVar("T")

ProgressCallback = Callable[[int, int], None]


class WorkerPool:
    """
    Runs independent, indexed work units and hands results back in index order.

    Tasks are dispatched from an asyncio loop onto a thread pool, with a semaphore
    bounding how many are in flight. Callers reduce the returned list themselves, so the
    reduction order never depends on completion order. With a single thread the tasks run
    inline.
    """

    def __init__(self, threads: int = 1) -> None:
        if threads < 1:
            raise ValueError(f"threads must be >= 1, got {threads}")
        self.threads = threads
        self.completed_count = 0
        self.total_count = 0

    def run(
        self,
        tasks: Sequence[Callable[[], T]],
        on_progress: Optional[ProgressCallback] = None,
    ) -> List[T]:
        """
        Execute every task and return their results ordered like ``tasks``.

        Args:
            tasks: zero-argument callables.
            on_progress: called with (completed, total) after each task finishes.

        Returns:
            List of results; the first exception raised by a task is re-raised.
        """
        self.completed_count = 0
        self.total_count = len(tasks)
        if self.threads == 1 or len(tasks) <= 1:
            results = []
            for task in tasks:
                results.append(task())
                self._tick(on_progress)
            return results
        return asyncio.run(self._run_all(tasks, on_progress))

    async def _run_all(
        self, tasks: Sequence[Callable[[], T]], on_progress: Optional[ProgressCallback]
    ) -> List[T]:
        logger.debug(f"Dispatching {len(tasks)} tasks on {self.threads} threads")
        semaphore = asyncio.Semaphore(self.threads)
        results: Dict[int, T] = {}
        loop = asyncio.get_running_loop()

        with ThreadPoolExecutor(max_workers=self.threads) as executor:

            async def run_one(index: int, task: Callable[[], T]) -> None:
                async with semaphore:
                    results[index] = await loop.run_in_executor(executor, task)
                    self._tick(on_progress)

            await asyncio.gather(*(run_one(i, t) for i, t in enumerate(tasks)))

        return [results[i] for i in range(len(tasks))]

    def _tick(self, on_progress: Optional[ProgressCallback]) -> None:
        self.completed_count += 1
        if on_progress is not None:
            on_progress(self.completed_count, self.total_count)

    def get_progress(self):
        """Get current progress (completed, total)."""
        return self.completed_count, self.total_count
