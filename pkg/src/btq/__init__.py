"""Berezin-Toeplitz quantization on the flat quantized torus, by lattice magnetic Laplacians."""

__version__ = "0.1.0"

from .geometry import BundleSpec, FourierSymbol, Jet, TorusGeometry, jet_at, make_torus, poisson_bracket  # noqa: E402
from .lattice import GridSpec, MagneticOperator, assemble, auto_grid  # noqa: E402
from .spectral import SpectralCluster, cluster_for, load_basis, save_basis, solve_cluster  # noqa: E402
from .toeplitz import ToeplitzMatrix, toeplitz  # noqa: E402
from .star import Poly, extract_c, kappa, q_coeff, q_pair, star_product  # noqa: E402

__all__ = [
    "__version__",
    "BundleSpec",
    "FourierSymbol",
    "Jet",
    "TorusGeometry",
    "jet_at",
    "make_torus",
    "poisson_bracket",
    "GridSpec",
    "MagneticOperator",
    "assemble",
    "auto_grid",
    "SpectralCluster",
    "cluster_for",
    "load_basis",
    "save_basis",
    "solve_cluster",
    "ToeplitzMatrix",
    "toeplitz",
    "Poly",
    "extract_c",
    "kappa",
    "q_coeff",
    "q_pair",
    "star_product",
]
