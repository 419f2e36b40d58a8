"""One-step spatial+ decorrelation inside multivariate (M-model) areal count regressions."""

from .errors import MSpatPlusError, NumericalError, ValidationError
from .graph import ArealGraph, bym2_scaled_structure, from_edge_list, grid_graph, icar_structure
from .mcmc import McmcConfig, fit_mcmc
from .mmodel import BartlettFactor, CountData, LatentState, MModelSpec, log_posterior
from .posterior import PosteriorSamples, correlation_summary, dic, summarize, waic
from .priors import SpatialPriorSpec, precision_matrix
from .spectral import eigendecompose, model_name, split_covariate

__version__ = "0.1.0"
