"""srgeom: numerical sub-Riemannian frame geometry.

Frames, brackets and growth vectors; the intrinsic nonholonomic
connection; normals, characteristic points and horizontal curvature of
implicit hypersurfaces; steering of piecewise horizontal curves.
"""

from . import errors
from .curves import CurveDiagnostics, HorizontalCurve, Segment
from .expr import (Dual, Expr, directional_derivative, differentiate,
                   evaluate, gradient, parse, to_source)
from .manifold import (GrowthVector, Manifold, VectorField,
                       contact_curvature_form, contact_nondegeneracy,
                       frame_components, growth_vector,
                       horizontal_projection, lie_bracket, make_carnot,
                       make_heisenberg, rotate_horizontal_frame)
from .connection import (AxiomReport, GammaTensor, HorizontalSection,
                         covariant_derivative,
                         covariant_derivative_components, gamma,
                         geodesic_integrate, horizontal_divergence,
                         levi_civita, levi_civita_table,
                         riemannian_divergence, torsion_residual,
                         verify_axioms, verify_projection)
from .hypersurface import (CharacteristicCluster, CurvatureReport,
                           HorizontalTangentFrame, Hypersurface,
                           characteristic_ratio, coordinate_hyperplane,
                           find_characteristic_points, frame_gradient,
                           gauge_sphere, horizontal_normal,
                           horizontal_tangent_frame, is_characteristic,
                           mean_curvature_divergence_form,
                           project_to_surface, second_fundamental_form,
                           surface_divergence, tangent_divergence)
from .steering import (Failure, HorizontalityReport, SteerParams,
                       check_horizontality, commutator_maneuver,
                       h1_trap_invariant, integrate_control, steer)

__version__ = "0.1.0"
