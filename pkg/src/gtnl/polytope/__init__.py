"""Exact polytope tools: H/V representations, vertex enumeration, orbit census."""
from .dd import (DEFAULT_MAX_RAYS, ResourceLimitError, UnboundedPolytopeError,
                 enumerate_vertices, extend_vertices)
from .hrep import (AffineChart, EmptyPolytopeError, HRep, build_ns_hrep, intersect_halfspace,
                   intersect_hyperplane, simplex_hrep)
from .vrep import CacheFormatError, VRep
