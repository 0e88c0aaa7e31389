"""Geometric multigrid preconditioned GMRES for Darcy/Brinkman porous-media flow."""

from porousmg.mesh import Box, MeshHierarchy, build_hierarchy, parent_child_map, vertex_patches

__all__ = [
    "Box",
    "MeshHierarchy",
    "build_hierarchy",
    "parent_child_map",
    "vertex_patches",
]
