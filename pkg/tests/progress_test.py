import numpy as np
from rich.progress import Progress

from ranking_opt.optimizer import MasterParams, master_optimize
from ranking_opt.progress import QuietProgress, get_optimization_progress
from ranking_opt.testing import QuadraticProblem


def test_quiet_progress_keeps_state():
    with get_optimization_progress(quiet=True) as progress:
        assert isinstance(progress, QuietProgress)
        task = progress.add_task("optimizing", total=10, value=1.0, level=4)
        progress.update(task, advance=1, value=2.0, level=5)
        progress.update(task, value=3.0)
    assert progress.tasks[task].completed == 1
    assert progress.tasks[task].total == 10
    assert progress.tasks[task].fields == {"value": 3.0, "level": 5}


def test_quiet_progress_follows_master_loop():
    progress = QuietProgress()
    trajectory = master_optimize(
        np.full(3, 0.5), QuadraticProblem(), MasterParams(tol=1e-6), progress=progress
    )
    (task,) = progress.tasks
    assert task.description == "optimizing"
    assert task.completed == len(trajectory.records) - 2
    assert task.fields["level"] == trajectory.level


def test_progress_fields():
    progress = get_optimization_progress()
    assert isinstance(progress, Progress)
    task = progress.add_task("optimizing", total=3, value=0.5, level=4)
    progress.update(task, advance=1, value=0.25)
    assert progress.tasks[0].completed == 1
    assert progress.tasks[0].fields == {"value": 0.25, "level": 4}
