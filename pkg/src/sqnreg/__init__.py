"""Sequence image registration with a Schatten-q similarity on normalized
gradient fields, plus sequential pairwise baselines and a CLI."""

from .grid_image import Grid, Image, ImageStack, PyramidLevel, build_pyramid, load_pgm, restrict, save_pgm
from .interp_transform import DisplacementField, TranslationParams, interp, prolong, translation_to_field, warp
from .measures import MeasureConfig, MeasureResult, mi_pair, ngf_pair, sqn, ssd_pair
from .ngf_field import EdgeParameter, VectorField, gradient, gradient_matrix, normalize
from .optimizer import OptimizerConfig, RegistrationResult, armijo, minimize, register_global, register_sequential
from .regularizer import RegularizerConfig, curvature
from .schatten import SchattenConfig, SingularSpectrum, schatten_grad, schatten_value, spectrum

__version__ = "0.1.0"
