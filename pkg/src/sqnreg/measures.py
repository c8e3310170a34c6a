"""Sequence and pairwise similarity measures.

All measures return their value as a cell-volume-weighted sum over the
grid nodes.  Gradients are taken with respect to displacement-field
parameters laid out like the fields themselves: per frame an (n, d) block
flattened in row-major node order, frames concatenated in temporal order.

The gradient chain treats the finite-difference stencil as a sparse
linear operator and applies its transpose (discretize-then-optimize).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid_image import Image, ImageStack
from .interp_transform import DisplacementField, warp
from .ngf_field import gradient_array, gradient_ops

__all__ = [
    "MeasureResult",
    "MeasureConfig",
    "sqn",
    "ngf_pair",
    "ssd_pair",
    "mi_pair",
    "measure_value",
]

KINDS = ("sqn", "ngf", "ssd", "mi")


@dataclass(frozen=True)
class MeasureResult:
    """Scalar value, gradient in unknown layout (None for MI), cell volume."""

    value: float
    gradient: np.ndarray | None
    cell_volume: float


@dataclass(frozen=True)
class MeasureConfig:
    """Measure selection plus per-kind parameters."""

    kind: str = "sqn"
    q: float = 0.5
    eta: float = 1e-5
    eps: float = 1e-6
    bins: int = 16

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind == "sqn":
            if not (0.0 < self.q <= 2.0):
                raise ValueError("sqn needs q in (0, 2]")
            if self.q < 2.0 and not (self.eps > 0):
                raise ValueError("sqn needs eps > 0 for q < 2")
        if self.kind in ("sqn", "ngf") and not (self.eta > 0):
            raise ValueError("eta must be positive")
        if self.kind == "mi" and self.bins < 2:
            raise ValueError("mi needs at least 2 bins")


def _check_pair(ref: Image, tpl: Image, field: DisplacementField) -> None:
    if ref.grid != tpl.grid:
        raise ValueError("reference and template must share one grid")
    if field.grid != ref.grid:
        raise ValueError("displacement field must live on the image grid")


def _stencil_transpose(ops, vec_nd: np.ndarray) -> np.ndarray:
    """Apply the transposed per-axis difference operators: (n, d) -> (n,)."""
    out = ops[0].T @ vec_nd[:, 0]
    for ax in range(1, len(ops)):
        out = out + ops[ax].T @ vec_nd[:, ax]
    return out


def sqn(stack: ImageStack, fields: list[DisplacementField], cfg: MeasureConfig) -> MeasureResult:
    """Schatten-q measure of the warped sequence: vol * sum_nodes ||A(x)||_{S,q}^q.

    A(x) stacks the edge-normalized gradients of the warped frames; the
    gradient is assembled through the Schatten derivative, the
    normalization Jacobian, the difference stencil transpose, and the
    interpolation jacobians.
    """
    if cfg.kind != "sqn":
        raise ValueError("config kind must be 'sqn'")
    grid = stack.grid
    if len(fields) != stack.T:
        raise ValueError("need one displacement field per frame")
    for f in fields:
        if f.grid != grid:
            raise ValueError("all fields must live on the stack grid")

    ops = gradient_ops(grid)
    vol = grid.cell_volume
    eta2 = cfg.eta * cfg.eta
    n, d, T = grid.n, grid.d, stack.T

    jacs = []
    raw_grads = np.empty((n, d, T))
    for t, (frame, field) in enumerate(zip(stack.frames, fields)):
        v, J = warp(frame, field)
        jacs.append(J)
        for ax in range(d):
            raw_grads[:, ax, t] = ops[ax] @ v

    norms = np.sqrt(np.sum(raw_grads * raw_grads, axis=1) + eta2)  # (n, T)
    A = raw_grads / norms[:, None, :]

    values, G = kernels.schatten_batch(A, cfg.q, cfg.eps, want_grad=True)
    value = vol * float(np.sum(values))

    gradient = np.empty(T * n * d)
    for t in range(T):
        s = vol * G[:, :, t]
        g = raw_grads[:, :, t]
        r = norms[:, t]
        gs = np.sum(g * s, axis=1)
        ghat = s / r[:, None] - g * (gs / r**3)[:, None]
        wbar = _stencil_transpose(ops, ghat)
        gradient[t * n * d : (t + 1) * n * d] = (wbar[:, None] * jacs[t]).ravel()
    return MeasureResult(value, gradient, vol)


def _ngf_state(ref: Image, tpl: Image, field: DisplacementField, eta: float) -> dict:
    """Everything the NGF value, gradient and Gauss-Newton matvec need."""
    _check_pair(ref, tpl, field)
    grid = ref.grid
    ops = gradient_ops(grid)
    vol = grid.cell_volume
    eta2 = eta * eta

    gr = gradient_array(ref.values, grid)
    lr = np.sqrt(np.sum(gr * gr, axis=1) + eta2)
    v, J = warp(tpl, field)
    gt = np.empty_like(gr)
    for ax in range(grid.d):
        gt[:, ax] = ops[ax] @ v
    lt = np.sqrt(np.sum(gt * gt, axis=1) + eta2)

    num = np.sum(gr * gt, axis=1) + eta2
    r = num / (lr * lt)
    value = vol * float(np.sum(1.0 - r * r))

    drdg = gr / (lr * lt)[:, None] - gt * (r / (lt * lt))[:, None]
    dval_dgt = (-2.0 * vol) * r[:, None] * drdg
    wbar = _stencil_transpose(ops, dval_dgt)
    grad = (wbar[:, None] * J).ravel()
    return {
        "value": value,
        "grad": grad,
        "J": J,
        "drdg": drdg,
        "r": r,
        "ops": ops,
        "vol": vol,
        "grid": grid,
    }


def _ngf_gn_matvec(state: dict):
    """PSD Gauss-Newton operator 2*vol*Jr^T Jr for the NGF residual r."""
    J, drdg, ops, vol, grid = state["J"], state["drdg"], state["ops"], state["vol"], state["grid"]
    n, d = grid.n, grid.d

    def matvec(vec: np.ndarray) -> np.ndarray:
        vmat = vec.reshape(n, d)
        w = np.sum(J * vmat, axis=1)
        z = np.zeros(n)
        for ax in range(d):
            z += drdg[:, ax] * (ops[ax] @ w)
        back = np.empty((n, d))
        for ax in range(d):
            back[:, ax] = drdg[:, ax] * z
        y = _stencil_transpose(ops, back)
        return (2.0 * vol) * (J * y[:, None]).ravel()

    return matvec


def ngf_pair(ref: Image, tpl: Image, field: DisplacementField, eta: float) -> MeasureResult:
    """Pairwise NGF distance vol * sum (1 - r^2) with the dot-product r."""
    state = _ngf_state(ref, tpl, field, float(eta))
    return MeasureResult(state["value"], state["grad"], state["vol"])


def _ssd_state(ref: Image, tpl: Image, field: DisplacementField) -> dict:
    _check_pair(ref, tpl, field)
    grid = ref.grid
    vol = grid.cell_volume
    v, J = warp(tpl, field)
    res = v - ref.values
    value = 0.5 * vol * float(np.dot(res, res))
    grad = vol * (res[:, None] * J).ravel()
    return {"value": value, "grad": grad, "J": J, "res": res, "vol": vol, "grid": grid}


def _ssd_gn_matvec(state: dict):
    """Gauss-Newton operator vol * J^T J for the SSD residual."""
    J, vol, grid = state["J"], state["vol"], state["grid"]
    n, d = grid.n, grid.d

    def matvec(vec: np.ndarray) -> np.ndarray:
        vmat = vec.reshape(n, d)
        w = np.sum(J * vmat, axis=1)
        return vol * (J * w[:, None]).ravel()

    return matvec


def ssd_pair(ref: Image, tpl: Image, field: DisplacementField) -> MeasureResult:
    """Sum of squared differences: 1/2 * vol * sum (tpl_warped - ref)^2."""
    state = _ssd_state(ref, tpl, field)
    return MeasureResult(state["value"], state["grad"], state["vol"])


def mi_pair(ref: Image, tpl: Image, field: DisplacementField, bins: int) -> float:
    """Negated mutual information (nats) from the joint histogram of
    (ref, tpl_warped); equal-width bins over [0, 255], smaller = more similar."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    _check_pair(ref, tpl, field)
    v, _ = warp(tpl, field)
    a = np.clip(ref.values, 0.0, 255.0)
    b = np.clip(v, 0.0, 255.0)
    joint, _, _ = np.histogram2d(a, b, bins=bins, range=[[0.0, 255.0], [0.0, 255.0]])
    p = joint / joint.sum()
    pj = p.sum(axis=1, keepdims=True)
    pk = p.sum(axis=0, keepdims=True)
    mask = p > 0
    mi = float(np.sum(p[mask] * np.log(p[mask] / (pj @ pk)[mask])))
    return -mi


def measure_value(ref: Image, tpl: Image, field: DisplacementField, cfg: MeasureConfig) -> float:
    """Evaluate any configured measure on a (reference, warped template) pair."""
    if cfg.kind == "sqn":
        stack = ImageStack((ref, tpl))
        zero = DisplacementField.zero(ref.grid)
        return sqn(stack, [zero, field], cfg).value
    if cfg.kind == "ngf":
        return ngf_pair(ref, tpl, field, cfg.eta).value
    if cfg.kind == "ssd":
        return ssd_pair(ref, tpl, field).value
    if cfg.kind == "mi":
        return mi_pair(ref, tpl, field, cfg.bins)
    raise ValueError(f"unknown measure kind {cfg.kind!r}")
