# -*- coding: utf-8 -*-
# =============================================================================
#     cfc
#     Copyright (C) 2026 The cfc developers
#
#     This program is free software: you can redistribute it and/or modify
#     it under the terms of the GNU General Public License as published by
#     the Free Software Foundation, either version 3 of the License, or
#     (at your option) any later version.
#
#     This program is distributed in the hope that it will be useful,
#     but WITHOUT ANY WARRANTY; without even the implied warranty of
#     MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
#     GNU General Public License for more details.
#
#     You should have received a copy of the GNU General Public License
#     along with this program. If not, see <http://www.gnu.org/licenses/>.
# =============================================================================
"""Consistency checks of automatic derivatives.

Scalar functions of torch tensors are differentiated by autograd and by
finite differences. The comparison serves to verify every differentiable
building block: the warp, the wavelet transform, the losses and the
networks.

Functions
---------
:func:`numeric_gradient`
    Finite difference gradient.

:func:`analytic_gradient`
    Autograd gradient.

:func:`compare_numeric_to_analytic_gradient`
    Norm and relative norm of their difference.

"""

from typing import Callable, List, Optional, Sequence

import numpy as np
import torch


def _coordinates(tensor: torch.Tensor, indices: Optional[Sequence[int]]):
    if indices is None:
        return range(tensor.numel())
    return indices


def numeric_gradient(function: Callable[[], torch.Tensor],
                     inputs: Sequence[torch.Tensor],
                     delta_eps: float = 1e-4,
                     symmetric: bool = True,
                     indices: Optional[Sequence[Sequence[int]]] = None) \
        -> List[np.ndarray]:
    """Finite difference gradient of a scalar function.

    The inputs are perturbed in place and restored afterwards, so they may
    be module parameters that the function reads.

    Parameters
    ----------
    function: Callable
        Evaluates the scalar without arguments.

    inputs: list of torch.Tensor
        Leaf tensors the function depends on.

    delta_eps: float
        The finite difference.

    symmetric: bool
        If True, central differences are used. Otherwise forward
        differences.

    indices: list of list of int, optional
        Flat indices of the coordinates to differentiate per input. All
        coordinates by default.

    Returns
    -------
    gradients: list of np.ndarray
        One flat array per input, holding the derivative of every selected
        coordinate.

    """
    gradients = []
    with torch.no_grad():
        central = float(function())
        for n, tensor in enumerate(inputs):
            flat = tensor.view(-1)
            selected = _coordinates(tensor,
                                    None if indices is None else indices[n])
            gradient = np.zeros(len(selected))
            for k, index in enumerate(selected):
                original = flat[index].item()
                flat[index] = original + delta_eps
                forward = float(function())
                if symmetric:
                    flat[index] = original - delta_eps
                    backward = float(function())
                    gradient[k] = (forward - backward) / (2 * delta_eps)
                else:
                    gradient[k] = (forward - central) / delta_eps
                flat[index] = original
            gradients.append(gradient)
    return gradients


def analytic_gradient(function: Callable[[], torch.Tensor],
                      inputs: Sequence[torch.Tensor],
                      indices: Optional[Sequence[Sequence[int]]] = None) \
        -> List[np.ndarray]:
    """Autograd gradient with the layout of :func:`numeric_gradient`. """
    flags = [tensor.requires_grad for tensor in inputs]
    for tensor in inputs:
        tensor.requires_grad_(True)
    try:
        grads = torch.autograd.grad(function(), list(inputs),
                                    allow_unused=True)
    finally:
        for tensor, flag in zip(inputs, flags):
            tensor.requires_grad_(flag)
    gradients = []
    for n, (tensor, grad) in enumerate(zip(inputs, grads)):
        grad = torch.zeros_like(tensor) if grad is None else grad
        flat = grad.detach().reshape(-1).cpu().numpy()
        selected = _coordinates(tensor,
                                None if indices is None else indices[n])
        gradients.append(flat[np.asarray(list(selected), dtype=np.int64)])
    return gradients


def compare_numeric_to_analytic_gradient(
        function: Callable[[], torch.Tensor],
        inputs: Sequence[torch.Tensor],
        delta_eps: float = 1e-4,
        symmetric: bool = True,
        indices: Optional[Sequence[Sequence[int]]] = None):
    """
    This function compares the numerical to the analytical gradient in order
    to serve as a consistency check.

    Parameters
    ----------
    function: Callable
        Evaluates a scalar tensor without arguments.

    inputs: list of torch.Tensor
        Leaf tensors the function depends on, preferably float64.

    delta_eps: float
        The finite difference.

    symmetric: bool
        If True, then the finite differences are evaluated symmetrically
        around the inputs. Otherwise by forward finite differences.

    indices: list of list of int, optional
        Flat indices of the coordinates to compare per input.

    Returns
    -------
    gradient_difference_norm: float
        The norm of the difference between the numeric and analytic
        gradient.

    gradient_difference_relative: float
        The relation of the aforementioned norm and the average norm of the
        numeric and analytic gradient. 0 if both gradients vanish.

    """
    numeric = np.concatenate(numeric_gradient(
        function, inputs, delta_eps=delta_eps, symmetric=symmetric,
        indices=indices))
    analytic = np.concatenate(analytic_gradient(function, inputs,
                                                indices=indices))

    diff_norm = np.linalg.norm(numeric - analytic)
    scale = np.linalg.norm(numeric) + np.linalg.norm(analytic)
    relative_difference = 0. if scale == 0 else 2 * diff_norm / scale
    return diff_norm, relative_difference
