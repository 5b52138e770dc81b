"""Random-embedding Bayesian optimization with back-projection onto the hypercube.

The package is organized in layers:

* :mod:`rembo.embedding` draws and stores the random linear embeddings,
* :mod:`rembo.geometry` tests membership in the low-dimensional sets,
* :mod:`rembo.mappings` maps low-dimensional points into the hypercube,
* :mod:`rembo.gp` fits the Gaussian-process surrogate,
* :mod:`rembo.bo` runs the optimization loop,
* :mod:`rembo.benchmarks`, :mod:`rembo.experiments` and :mod:`rembo.cli`
  provide test functions, experiment suites and the command line.
"""

from .benchmarks import REGISTRY, BenchmarkSpec, Objective, make_objective
from .bo import (AcquisitionResult, Incumbent, RunConfig, RunRecord, ei_ext,
                 expected_improvement, initial_design, maximize_acquisition,
                 random_search_run, rembo_run)
from .embedding import (Embedding, convex_project, equal_norm_tight_frame, load_embedding,
                        orth_project, sample_embedding, save_embedding)
from .errors import (ConditioningError, ConfigError, DomainError, InvalidDataError,
                     InvalidDimensionError, NoPreimageError, RegistryError, RemboError)
from .experiments import CellSpec, ExperimentSuite, load_suite, parse_suite, run_suite
from .geometry import (Parallelotope, Strip, VolumeEstimate, ZonotopeDomain, clamp_preimage,
                       enclosing_box, in_intersection, in_union, in_zonotope, mc_volume)
from .gp import GPModel, KernelSpec, fit, kernel_eval, predict, update
from .mappings import MAPPING_KINDS, Mapping, gamma, phi, psi_prime_warp, psi_warp

# short names matching the usual notation
in_U = in_union
in_Z = in_zonotope
phi_preimage = clamp_preimage

__all__ = [name for name in dir() if not name.startswith("_")]
