"""Minimization drivers for the registration objectives.

`minimize` picks its search direction per objective: Gauss-Newton normal
equations (solved by conjugate gradients) when the objective exposes a
residual-structure matvec, otherwise a limited-memory quasi-Newton
two-loop recursion.  Both are safeguarded by Armijo backtracking, and the
accepted-step inequality is asserted in-loop.

Two drivers build on it: `register_global` minimizes the sequence measure
over all frames at once (frame 1 frozen to zero as gauge fixing), and
`register_sequential` performs alternating pairwise sweeps.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .determinism import block_dot, is_deterministic
from .grid_image import Image, ImageStack, build_pyramid
from .interp_transform import DisplacementField, prolong, warp
from .measures import (
    MeasureConfig,
    _ngf_gn_matvec,
    _ngf_state,
    _ssd_gn_matvec,
    _ssd_state,
    sqn,
)
from .regularizer import curvature, laplacian_op, smoothing_solver

__all__ = [
    "OptimizerConfig",
    "RegistrationResult",
    "armijo",
    "minimize",
    "register_global",
    "register_sequential",
    "GlobalSqNObjective",
    "PairwiseObjective",
]


@dataclass(frozen=True)
class OptimizerConfig:
    """Iteration caps, tolerances and line-search constants."""

    max_iter: int = 50
    grad_tol: float = 1e-3  # relative to the initial gradient norm
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 20
    history: int = 5
    levels: int = 3
    min_level_dim: int = 8
    cg_max_iter: int = 60
    cg_tol: float = 0.1

    def __post_init__(self):
        if self.max_iter < 1 or self.max_backtracks < 1 or self.history < 1:
            raise ValueError("iteration counts must be positive")
        if not (0.0 < self.armijo_c < 1.0):
            raise ValueError("armijo constant must lie in (0, 1)")
        if not (0.0 < self.backtrack < 1.0):
            raise ValueError("backtracking factor must lie in (0, 1)")
        if self.grad_tol <= 0 or self.levels < 1:
            raise ValueError("grad_tol and levels must be positive")


@dataclass
class RegistrationResult:
    """Final fields plus per-iteration trace, timings and convergence flag."""

    fields: list[DisplacementField]
    trace: list[dict]
    timings: dict
    converged: bool
    final_value: float


def _dot(a: np.ndarray, b: np.ndarray, n_blocks: int) -> float:
    if is_deterministic():
        return block_dot(a, b, n_blocks)
    return float(np.dot(a, b))


def armijo(objective, x, descent_dir, value, grad, cfg: OptimizerConfig = OptimizerConfig(), t_init: float = 1.0):
    """Backtracking line search.

    Returns (step, new_value, stalled).  `objective` may return either a
    value or a (value, gradient) pair; the direction must satisfy
    grad . d < 0.
    """
    n_blocks = getattr(objective, "n_blocks", 1)
    gd = _dot(grad, descent_dir, n_blocks)
    if not (gd < 0):
        raise ValueError("armijo requires a descent direction (grad . d < 0)")

    def fval(z):
        out = objective(z)
        return out[0] if isinstance(out, tuple) else float(out)

    t = t_init
    for _ in range(cfg.max_backtracks):
        f_new = fval(x + t * descent_dir)
        if np.isfinite(f_new) and f_new <= value + cfg.armijo_c * t * gd:
            return t, f_new, False
        t *= cfg.backtrack
    return 0.0, value, True


def _cg(matvec, rhs, max_iter, tol):
    """Plain conjugate gradients for the (regularized) normal equations."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rs = float(np.dot(r, r))
    target = tol * tol * rs
    for _ in range(max_iter):
        if rs <= target:
            break
        hp = matvec(p)
        ph = float(np.dot(p, hp))
        if ph <= 0:
            break
        a = rs / ph
        x += a * p
        r -= a * hp
        rs_new = float(np.dot(r, r))
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def minimize(objective, x0, cfg: OptimizerConfig = OptimizerConfig()):
    """Iterate x_{k+1} = x_k + t d_k to a gradient-tolerance stop.

    Directions: Gauss-Newton via CG if the objective exposes `gn_matvec`
    (valid for the most recent evaluation point), else L-BFGS two-loop.
    Returns (x, info) where info carries the trace (value, gradient norm
    and step per iteration), the convergence flag and the final value.
    """
    n_blocks = getattr(objective, "n_blocks", 1)
    use_gn = hasattr(objective, "gn_matvec")
    x = np.asarray(x0, dtype=np.float64).copy()
    t_start = time.perf_counter()

    f, g = objective(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is not finite at the starting point")
    gnorm0 = math.sqrt(max(_dot(g, g, n_blocks), 0.0))
    tol = cfg.grad_tol * max(gnorm0, 1e-300)

    trace = [{"iteration": 0, "value": f, "grad_norm": gnorm0, "step": 0.0,
              "seconds": time.perf_counter() - t_start}]
    memory: list[tuple[np.ndarray, np.ndarray, float]] = []
    converged = gnorm0 <= tol

    for k in range(cfg.max_iter):
        gnorm = trace[-1]["grad_norm"]
        if gnorm <= tol:
            converged = True
            break

        t_init = 1.0
        if use_gn:
            d = _cg(objective.gn_matvec(), -g, cfg.cg_max_iter, cfg.cg_tol)
            if not (_dot(g, d, n_blocks) < 0):
                d = -g
        else:
            precond = getattr(objective, "precond", None)
            d = _two_loop(g, memory, n_blocks, precond)
            if not (_dot(g, d, n_blocks) < 0):
                d = -g
            max_step = getattr(objective, "max_step", None)
            if max_step is not None:
                # cap the trial move at one grid cell of displacement
                dmax = float(np.max(np.abs(d)))
                if dmax > max_step:
                    d = d * (max_step / dmax)
            if not memory and precond is None and max_step is None:
                # first plain quasi-Newton step: unit-length trial to avoid overshoot
                t_init = min(1.0, 1.0 / max(gnorm, 1e-300))

        t, f_new, stalled = armijo(objective, x, d, f, g, cfg, t_init=t_init)
        if stalled:
            break
        gd = _dot(g, d, n_blocks)
        # accepted steps must satisfy the Armijo inequality and decrease f
        assert f_new <= f + cfg.armijo_c * t * gd + 1e-12 * max(1.0, abs(f))
        assert f_new <= f + 1e-12 * max(1.0, abs(f))

        x_new = x + t * d
        f_prev, g_prev = f, g
        f, g = objective(x_new)
        if not use_gn:
            s = x_new - x
            y = g - g_prev
            sy = _dot(s, y, n_blocks)
            if sy > 1e-10 * math.sqrt(max(_dot(s, s, n_blocks), 0.0)) * math.sqrt(max(_dot(y, y, n_blocks), 0.0)):
                memory.append((s, y, sy))
                if len(memory) > cfg.history:
                    memory.pop(0)
        x = x_new
        gnorm = math.sqrt(max(_dot(g, g, n_blocks), 0.0))
        trace.append({"iteration": k + 1, "value": f, "grad_norm": gnorm, "step": t,
                      "seconds": time.perf_counter() - t_start})
        if gnorm <= tol:
            converged = True
            break

    return x, {"trace": trace, "converged": converged, "value": f, "x": x}


def _two_loop(g, memory, n_blocks, precond=None):
    """L-BFGS two-loop recursion over the stored (s, y) pairs.

    The initial matrix is the standard gamma scaling, or, when the
    objective supplies one, a fixed smoothing preconditioner solve.
    """
    q = g.copy()
    alphas = []
    for s, y, sy in reversed(memory):
        a = _dot(s, q, n_blocks) / sy
        alphas.append(a)
        q = q - a * y
    if precond is not None:
        q = precond(q)
    elif memory:
        s, y, sy = memory[-1]
        gamma = sy / max(_dot(y, y, n_blocks), 1e-300)
        q = gamma * q
    for (s, y, sy), a in zip(memory, reversed(alphas)):
        b = _dot(y, q, n_blocks) / sy
        q = q + (a - b) * s
    return -q


class GlobalSqNObjective:
    """Sequence objective: SqN of all warped frames plus alpha * curvature.

    Unknowns are the displacement fields of frames 2..T (frame 1 is the
    gauge and stays exactly zero), concatenated per frame.
    """

    def __init__(self, stack: ImageStack, mcfg: MeasureConfig, alpha: float):
        if mcfg.kind != "sqn":
            raise ValueError("global registration uses the sqn measure")
        self.stack = stack
        self.mcfg = mcfg
        self.alpha = float(alpha)
        self.grid = stack.grid
        self.block = self.grid.n * self.grid.d
        self.n_blocks = stack.T - 1
        self._solver = smoothing_solver(self.grid, 1.0, 1e-2)
        self.max_step = min(self.grid.spacing)

    def precond(self, v: np.ndarray) -> np.ndarray:
        """Blockwise inverse of the screened curvature Hessian; smooths
        quasi-Newton directions so coarse modes are not drowned out."""
        grid = self.grid
        out = np.empty_like(v)
        for b in range(self.n_blocks):
            blk = v[b * self.block : (b + 1) * self.block].reshape(grid.n, grid.d)
            res = np.empty_like(blk)
            for c in range(grid.d):
                res[:, c] = self._solver.solve(blk[:, c])
            out[b * self.block : (b + 1) * self.block] = res.ravel()
        return out

    def unpack(self, x: np.ndarray) -> list[DisplacementField]:
        grid = self.grid
        fields = [DisplacementField.zero(grid)]
        for t in range(1, self.stack.T):
            blk = x[(t - 1) * self.block : t * self.block]
            fields.append(DisplacementField(grid, blk.reshape(grid.n, grid.d)))
        return fields

    def __call__(self, x: np.ndarray):
        fields = self.unpack(x)
        res = sqn(self.stack, fields, self.mcfg)
        grad = res.gradient[self.block :].copy()
        penalties = []
        for t in range(1, self.stack.T):
            val, cg = curvature(fields[t])
            penalties.append(self.alpha * val)
            grad[(t - 1) * self.block : t * self.block] += self.alpha * cg.ravel()
        penalty = math.fsum(penalties) if is_deterministic() else sum(penalties)
        return res.value + penalty, grad


class PairwiseObjective:
    """Pairwise distance terms against fixed reference images plus
    alpha * curvature, all over a single frame's displacement field."""

    def __init__(self, refs: list[Image], tpl: Image, kind: str, eta: float, alpha: float):
        if kind not in ("ngf", "ssd"):
            raise ValueError("pairwise optimization supports kinds 'ngf' and 'ssd'")
        self.refs = refs
        self.tpl = tpl
        self.kind = kind
        self.eta = float(eta)
        self.alpha = float(alpha)
        self.grid = tpl.grid
        self.n_blocks = 1
        self._states = None

    def __call__(self, x: np.ndarray):
        grid = self.grid
        fld = DisplacementField(grid, x.reshape(grid.n, grid.d))
        states = []
        f = 0.0
        g = np.zeros(grid.n * grid.d)
        for ref in self.refs:
            if self.kind == "ssd":
                st = _ssd_state(ref, self.tpl, fld)
            else:
                st = _ngf_state(ref, self.tpl, fld, self.eta)
            states.append(st)
            f += st["value"]
            g += st["grad"]
        val, cg = curvature(fld)
        f += self.alpha * val
        g += self.alpha * cg.ravel()
        self._states = states
        return f, g

    def gn_matvec(self):
        """PSD normal operator at the most recently evaluated point."""
        if self._states is None:
            raise RuntimeError("evaluate the objective before requesting the matvec")
        mvs = [
            _ssd_gn_matvec(st) if self.kind == "ssd" else _ngf_gn_matvec(st)
            for st in self._states
        ]
        grid = self.grid
        L = laplacian_op(grid)
        vol = grid.cell_volume
        alpha = self.alpha
        n, d = grid.n, grid.d

        def matvec(vec: np.ndarray) -> np.ndarray:
            out = np.zeros_like(vec)
            for mv in mvs:
                out += mv(vec)
            vmat = vec.reshape(n, d)
            reg = np.empty_like(vmat)
            for c in range(d):
                reg[:, c] = vol * (L.T @ (L @ vmat[:, c]))
            return out + alpha * reg.ravel()

        return matvec


def _levels_for(stack: ImageStack, cfg: OptimizerConfig):
    pyramid = build_pyramid(stack, cfg.min_level_dim)
    return pyramid[: cfg.levels]


def register_global(
    stack: ImageStack,
    mcfg: MeasureConfig,
    alpha: float,
    ocfg: OptimizerConfig = OptimizerConfig(),
) -> RegistrationResult:
    """One-pass multi-level minimization of SqN + alpha * curvature over
    all frames; frame 1's field stays exactly zero."""
    levels = _levels_for(stack, ocfg)
    fields = None
    all_trace: list[dict] = []
    timings: dict = {}
    converged = True
    final_value = math.nan

    for lev in reversed(levels):
        t0 = time.perf_counter()
        obj = GlobalSqNObjective(lev.stack, mcfg, alpha)
        if fields is None:
            x0 = np.zeros((stack.T - 1) * obj.block)
        else:
            fine = [prolong(f, lev.grid) for f in fields[1:]]
            x0 = np.concatenate([f.u.ravel() for f in fine])
        x, info = minimize(obj, x0, ocfg)
        for row in info["trace"]:
            all_trace.append({"level": lev.level, **row})
        fields = obj.unpack(x)
        converged = converged and info["converged"]
        final_value = info["value"]
        timings[lev.level] = time.perf_counter() - t0

    return RegistrationResult(fields, all_trace, timings, converged, final_value)


def register_sequential(
    stack: ImageStack,
    kind: str,
    alpha: float,
    ocfg: OptimizerConfig = OptimizerConfig(),
    sweeps: int = 1,
    freeze_endpoints: bool = False,
    eta: float = 1e-5,
) -> RegistrationResult:
    """Alternating pairwise registration, forward then backward per sweep.

    Frame 1 anchors the chain and is never moved (the same gauge as
    register_global).  On the cold start the forward pass is progressive:
    each frame registers against its already-registered predecessor only,
    as in classic serial-section chain registration; every later pass
    minimizes the full coordinate objective against both warped
    neighbours.  With `freeze_endpoints` the final frame is pinned too,
    the textbook remedy against accumulated drift along the chain.
    """
    levels = _levels_for(stack, ocfg)
    T = stack.T
    fields = None
    all_trace: list[dict] = []
    timings: dict = {}
    converged = True
    final_value = math.nan
    cold_start = True

    movable = [t for t in range(1, T) if not (freeze_endpoints and t == T - 1)]

    for lev in reversed(levels):
        t0 = time.perf_counter()
        grid = lev.grid
        if fields is None:
            fields = [DisplacementField.zero(grid) for _ in range(T)]
        else:
            fields = [prolong(f, grid) for f in fields]
            cold_start = False

        for sweep in range(sweeps):
            passes = [("fwd", movable), ("bwd", list(reversed(movable)))]
            for direction, frames_in_pass in passes:
                progressive = cold_start and sweep == 0 and direction == "fwd"
                for t in frames_in_pass:
                    neighbours = (t - 1,) if progressive else (t - 1, t + 1)
                    refs = []
                    for nb in neighbours:
                        if 0 <= nb < T:
                            warped, _ = warp(lev.stack.frames[nb], fields[nb])
                            refs.append(Image(grid, warped))
                    obj = PairwiseObjective(refs, lev.stack.frames[t], kind, eta, alpha)
                    x, info = minimize(obj, fields[t].u.ravel(), ocfg)
                    fields[t] = DisplacementField(grid, x.reshape(grid.n, grid.d))
                    for row in info["trace"]:
                        all_trace.append({"level": lev.level, "frame": t, "sweep": sweep, **row})
                    converged = converged and info["converged"]
                    final_value = info["value"]
        cold_start = False
        timings[lev.level] = time.perf_counter() - t0

    return RegistrationResult(fields, all_trace, timings, converged, final_value)
