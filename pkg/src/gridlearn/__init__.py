"""Learning sparse resistor networks from voltage/current measurements."""

from .graph import (
    LaplacianView,
    PrecisionParams,
    WeightedGraph,
    build_laplacian,
    density,
    effective_resistance,
    effective_resistances,
    objective_value,
    quadratic_form,
    smoothness_trace,
)

__version__ = "0.1.0"
