"""Order-n Winfree model: kernels, integration, asymptotic-state analysis and sweeps."""
from .kernel import KernelOrder, KernelNorms, make_kernel, influence, sensitivity, coupling_product
from .dynamics import ModelConfig, EnsembleState, SimOptions, Trace, simulate, rhs, step
from .analysis import rotation_numbers, classify, thresholds

__version__ = "0.1.0"
