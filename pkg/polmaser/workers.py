"""Worker helpers for background tasks."""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class WorkerOutcome:
    result: Any = None
    error: BaseException | None = None

    def unwrap(self) -> Any:
        if self.error is not None:
            raise self.error
        return self.result


class Worker:
    def __init__(self, fn: Callable[..., Any], *args: Any, **kwargs: Any) -> None:
        self.fn = fn
        self.args = args
        self.kwargs = kwargs

    def run(self) -> WorkerOutcome:
        try:
            result = self.fn(*self.args, **self.kwargs)
        except Exception as exc:  # noqa: BLE001
            return WorkerOutcome(error=exc)
        else:
            return WorkerOutcome(result=result)


def _run(worker: Worker) -> WorkerOutcome:
    return worker.run()


def run_workers(workers: Sequence[Worker], max_workers: int = 1) -> list[WorkerOutcome]:
    """Outcomes in submission order; inline when a single worker process is asked for."""
    if max_workers <= 1 or len(workers) <= 1:
        return [worker.run() for worker in workers]
    processes = min(max_workers, len(workers))
    logger.debug("running %d tasks on %d processes", len(workers), processes)
    with ProcessPoolExecutor(max_workers=processes) as pool:
        return list(pool.map(_run, workers))


def gather(workers: Sequence[Worker], max_workers: int = 1) -> list[Any]:
    """Results in submission order; the first failure (by order) is re-raised."""
    return [outcome.unwrap() for outcome in run_workers(workers, max_workers)]
