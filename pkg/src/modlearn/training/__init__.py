from .base import Objective, TrainingAlgorithm, TrainingError
from .bgd import BGD
from .default import DefaultTrainingAlgorithm
from .harness import MonitorExport, Train, TrainExtension
from .linesearch import (LineSearchResult, armijo_holds, backtracking_armijo,
                         bracketing)
from .sgd import SGD, Momentum, PolyakAveraging

__all__ = ["TrainingAlgorithm", "TrainingError", "Objective", "SGD",
           "Momentum", "PolyakAveraging", "BGD", "DefaultTrainingAlgorithm",
           "Train", "TrainExtension", "MonitorExport", "LineSearchResult",
           "armijo_holds", "backtracking_armijo", "bracketing"]
