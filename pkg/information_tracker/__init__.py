from information_tracker.consts import Consts, get_output_folder, set_output_folder

from information_tracker.geometry import *
from information_tracker.tracker import *
from information_tracker.lidar_bench import *
from information_tracker.tick_filter import *
from information_tracker.tomography import *

__version__ = "0.1.0"
