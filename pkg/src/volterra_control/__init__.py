"""Optimal control of scalar stochastic Volterra equations with completely monotone kernels."""
from .kernels import (
    BernsteinMeasure,
    FiniteSpectrumKernel,
    Kernel,
    KernelError,
    LogarithmicKernel,
    RiemannLiouvilleKernel,
    SampledKernel,
    ShiftedKernel,
    cm_diagnostic,
    eta_star,
    eval_kernel,
    primitive_and_ratio,
    resolvent_kernel,
)

__version__ = "0.1.0"

__all__ = [
    "BernsteinMeasure",
    "FiniteSpectrumKernel",
    "Kernel",
    "KernelError",
    "LogarithmicKernel",
    "RiemannLiouvilleKernel",
    "SampledKernel",
    "ShiftedKernel",
    "cm_diagnostic",
    "eta_star",
    "eval_kernel",
    "primitive_and_ratio",
    "resolvent_kernel",
]
