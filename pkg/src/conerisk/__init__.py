"""conerisk: exact verification and pricing for dynamic multi-currency
coherent risk measures on finite scenario trees."""

__version__ = "0.1.0"

from .tree import (  # noqa: F401
    AdaptedVector,
    FilteredTree,
    TerminalClaim,
    build_tree,
    cond_expect,
    cond_expect_unnormalized,
    embed_adapted,
    tree_from_json,
)
from .cones import (  # noqa: F401
    Certificate,
    DimensionMismatch,
    PolyCone,
    cone_equal,
    cone_from_facets,
    cone_from_generators,
    cone_intersect,
    cone_sum,
    dual_cone,
    enumerate_polyhedron,
    member,
)
from .simplex import LinearProgram, LPOutcome, lp_optimize  # noqa: F401
