"""Terrain-aware multi-target flight planning for side-looking radar missions."""

from .terrain import GeoPoint, TerrainGrid, load_terrain, save_terrain, generate_synthetic_terrain
from .visibility import AltitudeSet, VisibilityMap, compute_visibility_map, visibility_stack
from .segment import FlightSegment, SegmentConfig, segment_from_angle, sweep_best_segment
from .tsp import Target, TargetSet, Tour
from .dubins import Pose, VehicleLimits
from .planner import MissionPlan, PipelineConfig, plan_pipeline

__version__ = "0.1.0"
