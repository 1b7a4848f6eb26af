"""CPU-only volumetric mapping with bitmask-encoded truncated signed
distance fields: scan fusion, mesh extraction, and reconstruction metrics."""

from .grid import VoxelGrid, decode_distance, memory_bytes, new_grid, signed_distance
from .integrator import FrameStats, IntegrationParams, ScanFrame, integrate_frame
from .kernels import KernelBank, build_kernel_bank
from .mesher import TriangleMesh, extract_mesh, vertex_normals
from .metrics import MetricsReport, evaluate, nn_distances, sample_mesh

__version__ = "0.1.0"

__all__ = [
    "VoxelGrid",
    "new_grid",
    "decode_distance",
    "signed_distance",
    "memory_bytes",
    "KernelBank",
    "build_kernel_bank",
    "ScanFrame",
    "IntegrationParams",
    "FrameStats",
    "integrate_frame",
    "TriangleMesh",
    "extract_mesh",
    "vertex_normals",
    "MetricsReport",
    "evaluate",
    "nn_distances",
    "sample_mesh",
    "__version__",
]
