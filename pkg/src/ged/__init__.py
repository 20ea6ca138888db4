"""A grammar of experimental designs: declare units, treatments and records,
allot treatments to units, assign them under the nesting structure, and serve
the design table.
"""

from .dsl import ParseError, format_spec, lower, nested_in, parse
from .engine import (
    ConstraintGroup,
    allot_trts,
    assign_random,
    assign_systematic,
    assign_trts,
    build,
    constraint_groups,
    cross_levels,
    replay,
    set_rcrds,
    set_trts,
    set_units,
)
from .model import (
    Design,
    DesignError,
    Factor,
    ImplicitRole,
    Level,
    Order,
    Role,
    implicit_role,
    new_design,
    validate,
)
from .rng import Rng
from .serve import (
    DesignTable,
    UnservableError,
    factor_graph_dot,
    level_graph_dot,
    serve_table,
    to_csv,
)

__version__ = "0.1.0"
