"""Unsupervised lesion segmentation by Cahn-Hilliard phase separation."""

from .chsolver import SolverConfig, SolverTrace, evolve, total_energy
from .histseg import detect_peaks, histogram, separate_modes, segment
from .metrics import evaluate
from .phantom import PhantomSpec, generate, reference_spec
from .pipeline import run_segmentation
from .preprocess import PreprocessConfig, make_initial_pff
from .volume import BinaryMask, ScalarVolume, read_nifti, read_rvol, read_volume, write_rvol

__version__ = "0.1.0"
