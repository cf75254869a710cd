"""The stochastic projected approximate-Newton optimizer.

Each iteration sketches the batch Hessian into an orthonormal basis U (see
:mod:`spanopt.rangefinder`), forms the captured block Z^T U with one more
extended Hessian product, and applies the perturbed inverse

    U (Z^T U)^{-1} U^T  +  (1/lambda) (I - U U^T)

to the full gradient.  lambda is the safeguard min( sigma_{m+1}(Z^T U),
0.5 * sigma_min(Z^T U) ): large enough that the complement term does not
dominate the inverse, small enough that it does not inflate the
approximation error.  The true batch spectrum is unobservable, so both
quantities are read off the captured block; the value actually used is
recorded in every trace row.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import IndefiniteBlock
from .hvp import CENTRAL_FD, HvpMode, extended_hvp, hvp
from .linalg import derive_seed, solve_small, spectral_norm_sym, sym_eig_small
from .objectives import (
    Dataset,
    ObjectiveConfig,
    batch_gradient,
    batch_loss,
    sample_batch,
)
from .rangefinder import RangeConfig, power_range

# Stream tags so each stochastic sub-step of an iteration draws from its own
# child of the run seed.
_STREAM_BATCH = 0
_STREAM_SKETCH = 1
_STREAM_PROBE = 2


@dataclass(frozen=True)
class Subspace:
    """Per-iteration sketch state from which the approximate inverse is applied.

    ``u`` is the orthonormal (d, l) basis, ``z = H_B u`` its image,
    ``small_block`` the symmetrized captured block Z^T U, and ``lam`` the
    perturbation actually used.  ``lambda_min`` is half the block's smallest
    eigenvalue; ``sigma_proxy_m1`` its (m+1)-th eigenvalue, the observable
    stand-in for the batch Hessian's (m+1)-th eigenvalue.
    """

    u: np.ndarray
    z: np.ndarray
    small_block: np.ndarray
    lam: float
    lambda_min: float
    sigma_proxy_m1: float


@dataclass(frozen=True)
class SpanConfig:
    """Driver hyperparameters: iteration budget, sketch shape, batch size, steps."""

    t_max: int
    m: int
    l: int
    q: int
    b: int
    eta: Union[float, Sequence[float], str] = 1.0
    seed: int = 0
    grad_tol: float = 0.0
    hvp_mode: HvpMode = CENTRAL_FD
    reorthonormalize: Optional[bool] = None
    probe_hessian_error: bool = False

    def __post_init__(self):
        if self.t_max < 0:
            raise ValueError("t_max must be non-negative")
        if self.b < 1:
            raise ValueError("batch size must be positive")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be non-negative")
        if isinstance(self.eta, str):
            if self.eta != "auto":
                raise ValueError(f"unknown step schedule {self.eta!r}")
        elif not np.isscalar(self.eta):
            steps = np.asarray(self.eta, dtype=float)
            if steps.ndim != 1 or np.any(steps <= 0):
                raise ValueError("step schedule entries must be positive")
        elif self.eta <= 0:
            raise ValueError("eta must be positive")
        # Sketch-shape consistency (including d) is checked by RangeConfig at run time.

    def range_config(self) -> RangeConfig:
        return RangeConfig(l=self.l, q=self.q, m=self.m, reorthonormalize=self.reorthonormalize)


@dataclass(frozen=True)
class TraceRecord:
    """One benchmark row; wall clock is cumulative and excludes trace bookkeeping."""

    iteration: int
    wall_clock_s: float
    loss: float
    grad_norm: float
    hessian_err: Optional[float] = None
    lambda_used: Optional[float] = None


@dataclass(frozen=True)
class SpanState:
    """Immutable driver state between steps."""

    x: np.ndarray
    t: int = 0
    elapsed_s: float = 0.0
    subspace: Optional[Subspace] = None


def assemble_subspace(u: np.ndarray, z: np.ndarray, m: int) -> Subspace:
    """Finish subspace construction from a basis and its Hessian image.

    Symmetrizes the captured block (finite differences break symmetry at
    O(h)), reads off the safeguard quantities, and raises
    :class:`IndefiniteBlock` when the block has a non-positive eigenvalue;
    for the in-scope convex objectives that means the regularization is zero
    or the model is mis-specified.
    """
    block = z.T @ u
    block = 0.5 * (block + block.T)
    eig = sym_eig_small(block)
    smallest = float(eig.values[-1])
    if smallest <= 0.0:
        raise IndefiniteBlock(
            f"captured block has eigenvalue {smallest:.3e} <= 0; "
            "batch Hessian is not positive definite on the sketch"
        )
    lambda_min = 0.5 * smallest
    sigma_proxy = float(eig.values[m]) if m < eig.values.size else float(eig.values[-1])
    return Subspace(
        u=u,
        z=z,
        small_block=block,
        lam=min(lambda_min, sigma_proxy),
        lambda_min=lambda_min,
        sigma_proxy_m1=sigma_proxy,
    )


def build_subspace(
    cfg: ObjectiveConfig,
    data: Dataset | None,
    batch: np.ndarray | None,
    x: np.ndarray,
    rc: RangeConfig,
    seed: int,
    mode: HvpMode = CENTRAL_FD,
) -> Subspace:
    """Sketch the batch Hessian at ``x`` and pick the safeguard perturbation."""
    u = power_range(cfg, data, batch, x, rc, seed, mode)
    z = extended_hvp(cfg, data, batch, x, u, mode)
    return assemble_subspace(u, z, rc.m)


def apply_inverse(s: Subspace, g: np.ndarray) -> np.ndarray:
    """Apply the perturbed approximate inverse to ``g`` without forming a d x d matrix.

    Cost is O(d l + l^3): one small solve on the captured block plus the
    complement scaled by 1/lambda.
    """
    g = np.asarray(g, dtype=float)
    ug = s.u.T @ g
    captured = s.u @ solve_small(s.small_block, ug)
    return captured + (g - s.u @ ug) / s.lam


def hessian_error_probe(
    s: Subspace,
    cfg: ObjectiveConfig,
    data: Dataset | None,
    batch: np.ndarray | None,
    x: np.ndarray,
    mode: HvpMode = CENTRAL_FD,
    tol: float = 1e-6,
    seed: int = 0,
) -> float:
    """Operator-norm distance between the constructed and the true batch Hessian.

    Runs the power-iteration probe on the matrix-free difference operator
    v -> (U U^T H_B (U U^T v) + lambda (v - U U^T v)) - H_B v, so nothing
    dense is ever formed.
    """
    x = np.asarray(x, dtype=float)

    def difference(v: np.ndarray) -> np.ndarray:
        uv = s.u @ (s.u.T @ v)
        approx = s.u @ (s.u.T @ hvp(cfg, data, batch, x, uv, mode)) + s.lam * (v - uv)
        return approx - hvp(cfg, data, batch, x, v, mode)

    # At full capture the difference is roundoff-level and slightly
    # nonsymmetric; an absolute floor keyed to the captured block's scale
    # lets the probe settle there instead of chasing noise.
    floor = 1e-11 * float(np.linalg.norm(s.small_block))
    return spectral_norm_sym(difference, x.size, tol=tol, seed=seed, abs_tol=floor)


def _eta_at(cfg: SpanConfig, t: int, subspace: Subspace) -> float:
    if isinstance(cfg.eta, str):
        # Heuristic from the step-size bound with sigma_min(Z^T U) standing in
        # for the unobservable smallest batch eigenvalue; not a guarantee.
        sigma_proxy = 2.0 * subspace.lambda_min
        return sigma_proxy / (96.0 * subspace.lambda_min - 16.0 * sigma_proxy)
    if np.isscalar(cfg.eta):
        return float(cfg.eta)
    schedule = np.asarray(cfg.eta, dtype=float)
    if t >= schedule.size:
        raise ValueError(f"step schedule has {schedule.size} entries, needed index {t}")
    return float(schedule[t])


def span_step(
    state: SpanState,
    objective: ObjectiveConfig,
    data: Dataset | None,
    cfg: SpanConfig,
    eta_t: Optional[float] = None,
) -> tuple[SpanState, TraceRecord]:
    """One iteration: sample, sketch, invert, step with the full gradient.

    The update direction uses the full-dataset gradient; only the Hessian
    sketch is batched.  The trace row records the post-step loss and gradient
    norm, measured outside the step's wall clock.
    """
    t = state.t
    start = time.perf_counter()

    batch = None
    if data is not None:
        rng = np.random.default_rng(derive_seed(cfg.seed, _STREAM_BATCH, t))
        batch = sample_batch(data.n_samples, min(cfg.b, data.n_samples), rng)
    subspace = build_subspace(
        objective, data, batch, state.x, cfg.range_config(),
        seed=derive_seed(cfg.seed, _STREAM_SKETCH, t), mode=cfg.hvp_mode,
    )
    grad = batch_gradient(objective, data, None, state.x)
    eta = eta_t if eta_t is not None else _eta_at(cfg, t, subspace)
    x_next = state.x - eta * apply_inverse(subspace, grad)

    elapsed = state.elapsed_s + (time.perf_counter() - start)

    hessian_err = None
    if cfg.probe_hessian_error:
        hessian_err = hessian_error_probe(
            subspace, objective, data, batch, state.x,
            mode=cfg.hvp_mode, seed=derive_seed(cfg.seed, _STREAM_PROBE, t),
        )
    record = TraceRecord(
        iteration=t + 1,
        wall_clock_s=elapsed,
        loss=batch_loss(objective, data, None, x_next),
        grad_norm=float(np.linalg.norm(batch_gradient(objective, data, None, x_next))),
        hessian_err=hessian_err,
        lambda_used=subspace.lam,
    )
    return SpanState(x=x_next, t=t + 1, elapsed_s=elapsed, subspace=subspace), record


def run_span(
    cfg: SpanConfig,
    objective: ObjectiveConfig,
    data: Dataset | None,
    x0: np.ndarray,
) -> tuple[np.ndarray, list[TraceRecord]]:
    """Run the full driver: ``t_max`` steps or until the gradient norm drops below tolerance."""
    state = SpanState(x=np.asarray(x0, dtype=float).copy())
    trace: list[TraceRecord] = []
    for _ in range(cfg.t_max):
        state, record = span_step(state, objective, data, cfg)
        trace.append(record)
        if cfg.grad_tol > 0.0 and record.grad_norm <= cfg.grad_tol:
            break
    return state.x, trace


def recommended_batch_size(
    k_bound: float, eps: float, l: int, m: int, d: int, n: int
) -> int:
    """Batch size sufficient for the sampled Hessian to be eps-close in norm.

    Evaluates min( 16 K^2 / eps^2 * (l - m + log(2d)), N ), rounded up and
    kept at least 1.
    """
    if k_bound <= 0 or eps <= 0 or n < 1 or d < 1 or m >= l:
        raise ValueError("need positive inputs with m < l")
    raw = 16.0 * k_bound**2 / eps**2 * (l - m + np.log(2.0 * d))
    return max(1, int(np.ceil(min(raw, float(n)))))


def subspace_with_lambda(s: Subspace, lam: float) -> Subspace:
    """Copy of a subspace with the perturbation overridden (diagnostics only)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return replace(s, lam=lam)
