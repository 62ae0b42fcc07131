"""Exact Lax-Hopf traffic simulation on road networks.

Links are solved through the Lax-Hopf formula on piecewise-affine value
conditions; nodes use a first-order demand/supply model.  Cell and link
transmission models are included as baselines.
"""

from .baselines import CtmLink, LhLink, LtmLink, ctm_step, ltm_boundary_step, ltm_interior_probe
from .components import (ComponentValue, domains_of_influence, downstream_component, initial_component,
                         solve_point_lh, upstream_component)
from .errors import (CFLViolation, ConstraintViolation, ContractError, DomainError, LaxHopfError,
                     ProbeRefused, SequencingError, ValidationError)
from .flh import FlhLink, PointPruneState, boundary_value_step, cfl_boundary_step, solve_point_flh
from .fundamental_diagram import (FundamentalDiagram, GreenshieldsFD, PiecewiseLinearFD, TriangularFD,
                                  diagram_from_dict)
from .junction import NodeResolution, NodeSpec, SignalGroup, resolve_node, signal_phase
from .network import (EdgeSpec, InitialProfile, LinkSpec, Network, Profile, Scenario, SimulationResult,
                      five_link_network, five_link_scenario, global_balance, grid_network, probe,
                      random_scenario, rmse_compare, simulate, validate_scenario)
from .value_conditions import (BoundaryBlock, InitialBlock, LinkValueCondition, append_boundary_flow,
                               from_blocks, from_density_profile, validate)

__version__ = "0.1.0"
