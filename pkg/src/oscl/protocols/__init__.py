"""Protocol simulators, one per compression task."""

from .br import BRConfig, run_task1_br
from .common import ProtocolReport, find_bin_split
from .lossy import LossyConfig, run_task7
from .one_sender import OneSenderConfig, run_task4, run_task5
from .slepian_wolf import SlepianWolfConfig, run_task2_identity, run_task8
from .task1 import Task1Config, run_task1_convex_split
from .two_sender import TwoSenderConfig, helper_sufficient_condition, run_task2, run_task3, run_task9

__all__ = [
    "BRConfig", "LossyConfig", "OneSenderConfig", "ProtocolReport", "SlepianWolfConfig", "Task1Config",
    "TwoSenderConfig", "find_bin_split", "helper_sufficient_condition", "run_task1_br",
    "run_task1_convex_split", "run_task2", "run_task2_identity", "run_task3", "run_task4", "run_task5",
    "run_task7", "run_task8", "run_task9",
]
