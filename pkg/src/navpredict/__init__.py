"""Navigation-map road graphs and map-aware trajectory prediction.

The package covers the full pipeline: OSM ingestion into a directed
road graph with an HD-map-style query API, coordinate transforms into
local city frames, synthetic paired HD/nav worlds with lane-following
scenes, a small multi-modal predictor with analytic gradients,
teacher-student knowledge distillation, and displacement-error metrics.
"""

__version__ = "0.1.0"
