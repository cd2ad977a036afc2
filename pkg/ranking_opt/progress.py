from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from rich.progress import BarColumn, MofNCompleteColumn, Progress, TimeElapsedColumn


@dataclass
class QuietTask:
    description: str
    total: Optional[float] = None
    completed: float = 0.0
    fields: Dict[str, Any] = field(default_factory=dict)


class QuietProgress:
    """
    Stands in for a rich ``Progress`` when ``--quiet`` is given: it keeps the task state the
    optimizer reports but draws nothing.
    """

    def __init__(self) -> None:
        self.tasks: List[QuietTask] = []

    def __enter__(self) -> "QuietProgress":
        return self

    def __exit__(self, *exc_info) -> bool:
        return False

    def add_task(self, description: str, total: Optional[float] = None, **fields) -> int:
        self.tasks.append(QuietTask(description, total, fields=dict(fields)))
        return len(self.tasks) - 1

    def update(self, task_id: int, advance: Optional[float] = None, **fields) -> None:
        task = self.tasks[task_id]
        if advance:
            task.completed += advance
        task.fields.update(fields)


def get_optimization_progress(quiet: bool = False) -> Progress:
    """
    A progress display for optimizer runs: one step per outer iteration, with the current
    objective value and precision level in the task fields ``value`` and ``level``.
    """
    if quiet:
        return QuietProgress()  # type: ignore
    return Progress(
        "[progress.description]{task.description}",
        BarColumn(),
        MofNCompleteColumn(),
        "J={task.fields[value]:.10g}",
        "level {task.fields[level]}",
        TimeElapsedColumn(),
    )
