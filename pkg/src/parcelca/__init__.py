"""Parcel-level constrained vector cellular automata for multi-city urban expansion."""

__version__ = "0.1.0"

from .calibration import Coefficients, FeatureVector, fit_logistic, local_potential
from .engine import CaParams, SimulationResult, prepare_parcels, simulate
from .geometry import ExclusionSet, Polygon, PointM
from .neighbors import NeighborGraph, compute_neighbors, load_graph, save_graph
from .parcels import ParcelRecord
from .scenarios import CityRecord, ScenarioKind, ScenarioSpec

__all__ = [
    "CaParams",
    "CityRecord",
    "Coefficients",
    "ExclusionSet",
    "FeatureVector",
    "NeighborGraph",
    "ParcelRecord",
    "PointM",
    "Polygon",
    "ScenarioKind",
    "ScenarioSpec",
    "SimulationResult",
    "compute_neighbors",
    "fit_logistic",
    "load_graph",
    "local_potential",
    "prepare_parcels",
    "save_graph",
    "simulate",
]
