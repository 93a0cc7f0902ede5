from .scan_projection import pointcloud_to_scan
from .mcl import LikelihoodField, MclParams, MclResult, ParticleSet, mcl_update
from .mapping import MappingParams, update_map
from .global_planner import NoPath, PlanPath, StartInCollision, inflate, plan_global
from .bev import BevObstacle, BevParams, TrackState, project_bev
from .local_planner import LocalPlannerParams, LocalTrajectory, band_cost, plan_local
from .channels import detect_channels, hazard_points
