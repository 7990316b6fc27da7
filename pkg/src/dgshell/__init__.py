"""Mixed discontinuous Galerkin solver for the Naghdi shell model.

The package is organized along the solve pipeline: ``geometry`` (charts and
surface coefficients), ``mesh`` (labeled triangulations and refinement),
``spaces`` (discrete spaces with free-edge enrichment), ``material``
(strains and constitutive tensors), ``assembly`` (bilinear forms, loads and
norm Gram matrices), ``solver`` (saddle-point solve and stability
diagnostics), ``analysis`` (interpolation, error norms, Korn diagnostics)
and ``harness`` (manufactured-solution studies and the CLI).
"""

from .geometry import (
    Chart,
    Cylinder,
    FlatPlate,
    GeomFrame,
    GeometryError,
    HyperbolicParaboloid,
    PolynomialGraph,
    edge_weights,
    frame,
    make_chart,
)
from .material import ElasticModuli, StrainSet, compliance_apply, elastic_apply, strains
from .mesh import (
    Mesh,
    MeshError,
    build_structured,
    dump_mesh,
    load_mesh,
    refine,
    refine_bisect,
    refine_uniform,
    shape_regularity,
)
from .quadrature import EdgeRule, TriangleRule, edge_rule, triangle_rule
from .spaces import (
    EnrichmentBasis,
    SpacePair,
    UnsupportedConfigurationError,
    build_spaces,
    enrichment,
)

__version__ = "0.1.0"
