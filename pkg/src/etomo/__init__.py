"""Numerical and exact tools for the elastic X-ray transform of tensor fields."""
from .tensor_core import (ElasticTensor, Polarization, TensorShape, canonical_index, contract_vq,
                          inner_product, isotropic_tensors, symmetrize)
from .field_ops import ElasticField, Grid, VectorField, apply_H, apply_H_adjoint, apply_K, apply_K_adjoint
from .ray_transform import elastic_xray_single, make_ray, sinogram, slice_check, xray_scalar
from .helmholtz import decompose_field, project_pointwise

__version__ = "0.1.0"

__all__ = [
    "ElasticTensor", "Polarization", "TensorShape", "canonical_index", "contract_vq",
    "inner_product", "isotropic_tensors", "symmetrize",
    "ElasticField", "Grid", "VectorField", "apply_H", "apply_H_adjoint", "apply_K", "apply_K_adjoint",
    "elastic_xray_single", "make_ray", "sinogram", "slice_check", "xray_scalar",
    "decompose_field", "project_pointwise",
]
