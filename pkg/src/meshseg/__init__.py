"""Prompt-driven semantic segmentation of triangle meshes from rendered views."""

from .mesh import Mesh, MeshError, UNLABELED, load_mesh, normalize_mesh, save_mesh

__all__ = [
    "Mesh",
    "MeshError",
    "UNLABELED",
    "load_mesh",
    "normalize_mesh",
    "save_mesh",
]

__version__ = "0.1.0"
