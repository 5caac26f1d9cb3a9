"""Particle-wave mean-field laboratory: N-body dynamics of smeared relativistic
particles coupled to a scalar wave field, its Vlasov limit, and fluctuations."""
from .kernel import RegularizationKernel

__version__ = "0.1.0"
__all__ = ["RegularizationKernel", "__version__"]
