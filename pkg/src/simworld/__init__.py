from .types import (AcousticSource, AgentClass, DynamicAgent, GasPlume, KinematicLimits, OccupancyGrid,
                    OdometryNoise, OilPatch, Pose2D, ScheduleEvent, Species, Twist, Waveform, WaveformKind,
                    WorldParams, WorldState)
from .geometry import OutOfGridError, raycast, raycast_many, traverse_cells
from .plume import DispersionParams, plume_concentration, total_concentration
from .acoustics import SPEED_OF_SOUND, acoustic_field, render_waveform
from .world import apply_drive, step_world
from .scenario import Scenario, load_scenario, scenario_from_dict
