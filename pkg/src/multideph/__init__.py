"""Exact dephasing dynamics of multipartite open quantum systems with non-diagonal couplings."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model import (  # noqa: F401
    GeneralizedModelSpec,
    ModelSpec,
    RingCouplingParams,
    bipartite_gamma,
    embed_pairwise,
    make_model,
    qubit_model,
    ring_gamma,
    ring_model,
)
from .exact import PhiTensor, evolve, generalized_evolve, phi, phi_tensor  # noqa: F401
from .split import (  # noqa: F401
    EnvPopulations,
    ReducedDynamics,
    SplitSpec,
    coherence_factor,
    environment_state,
    memory_necessary_condition,
    system_state,
)
