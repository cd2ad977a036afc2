import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .common import get_dense_oracle_cap, set_dense_oracle_cap
from .graph import LinkGraph
from .hits import ThresholdReport, classify
from .problems import Evaluation, ProblemAdapter


class BaseTestClass:
    """
    A custom testing class that sets up logging, a seeded random generator and a temp
    directory as test fixtures, and restores the dense oracle cap afterwards.
    """

    PROJECT_ROOT = (Path(__file__).parent / "..").resolve()
    MODULE_ROOT = PROJECT_ROOT / "ranking_opt"
    TESTS_ROOT = PROJECT_ROOT / "tests"
    FIXTURES_ROOT = MODULE_ROOT / "data"

    SEED = 20240611

    def setup_method(self):
        logging.basicConfig(
            format="%(asctime)s - %(levelname)s - %(name)s - %(message)s", level=logging.DEBUG
        )
        # Disabling some of the more verbose logging statements that typically aren't very helpful
        # in tests.
        logging.getLogger("filelock").disabled = True

        self.TEST_DIR = Path(tempfile.mkdtemp(prefix="ranking_opt_tests"))
        os.makedirs(self.TEST_DIR, exist_ok=True)

        self.rng = np.random.default_rng(self.SEED)
        self._initial_dense_cap = get_dense_oracle_cap()

    def teardown_method(self):
        set_dense_oracle_cap(self._initial_dense_cap)
        shutil.rmtree(self.TEST_DIR)


class QuadraticProblem(ProblemAdapter):
    """
    A concave quadratic on three facultative arcs with a known maximizer ``(1, 0, 0.5)``.

    Evaluations at precision ``delta`` are off by exactly ``delta / 2`` in the value and in every
    gradient coordinate, so the approximation constant of a refinement is ``1/4``.
    """

    name = "quadratic"

    CENTER = np.array([2.0, -1.0, 0.5])
    # Squared distances of the maximizer to CENTER, subtracted per coordinate so that the value
    # keeps full relative precision near the optimum.
    OFFSET = np.array([1.0, 1.0, 0.0])
    OPTIMUM = np.array([1.0, 0.0, 0.5])

    GRAPH = LinkGraph(
        n=3,
        obligatory={(0, 1), (1, 2), (2, 0)},
        facultative=((0, 2), (1, 0), (2, 1)),
        target_set={0},
    )

    def __init__(self, mislead: bool = False) -> None:
        super().__init__(self.GRAPH)
        self.mislead = mislead

    def _at(self, x: np.ndarray, delta: float, steps: int) -> Evaluation:
        gradient = self.CENTER - x + 0.5 * delta
        return Evaluation(
            x=x,
            value=-0.5 * float(np.sum((x - self.CENTER) ** 2 - self.OFFSET)) + 0.5 * delta,
            gradient=-gradient if self.mislead else gradient,
            inner_steps=steps,
            delta=delta or None,
        )

    def _evaluate(self, x: np.ndarray, delta: float, hot_start: Any) -> Evaluation:
        return self._at(x, delta, 1)

    def evaluate_exact(self, x: np.ndarray) -> Evaluation:
        self.counters.evaluations += 1
        return self._at(np.asarray(x, dtype=float), 0.0, 0)

    def scores(self, evaluation: Evaluation) -> np.ndarray:
        return evaluation.x

    def threshold_report(self, evaluation: Evaluation, tol: float = 1e-8) -> ThresholdReport:
        return ThresholdReport(
            cutoffs={},
            scores=evaluation.x,
            gradient=evaluation.gradient,
            classes=classify(evaluation.gradient, tol),
            order=(0, 1, 2),
        )
