"""Finite-difference oracle for the autodiff engine.

An op's analytic gradient is compared against 64-bit central differences of
the same forward function. The oracle never touches backward(): it perturbs
inputs one element at a time and differences a scalar projection of the
output, so agreement is evidence rather than tautology.

``REGISTERED_OP_CASES`` enumerates every differentiable op with at least two
shape configurations; the acceptance suite sweeps the whole table over
multiple seeds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .rng import make_rng

DEFAULT_STEP = 1e-3
DEFAULT_TOLERANCE = 1e-4


@dataclass
class GradCheckReport:
    op_name: str
    max_rel_error: float
    per_input_errors: tuple
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return (f"grad_check[{self.op_name}]: max_rel_error={self.max_rel_error:.3e} "
                f"tol={self.tolerance:.1e} {verdict}")


def _projection_loss(fn: Callable, inputs: Sequence[Tensor], weights: np.ndarray) -> Tensor:
    out = fn(*inputs)
    return ad.mean(ad.mul(out, Tensor(weights)))


def grad_check_fn(fn: Callable, inputs: Sequence[Tensor], *, op_name: str = "fn",
                  tolerance: float = DEFAULT_TOLERANCE, step: float = DEFAULT_STEP,
                  seed: int = 0) -> GradCheckReport:
    """Check analytic gradients of ``fn`` w.r.t. each float64 input tensor.

    ``fn`` maps the given tensors to one output tensor; the output is
    contracted with fixed random weights so every output element influences
    the scalar under test.
    """
    for x in inputs:
        if x.data.dtype != np.float64:
            raise TypeError(f"grad_check requires float64 inputs, got {x.data.dtype}")
        x.requires_grad = True
        x._tracked = True
        x.zero_grad()

    probe = fn(*inputs)
    weights = make_rng("gradcheck-weights", op_name, seed).standard_normal(
        probe.shape).astype(np.float64)

    with Tape():
        loss = _projection_loss(fn, inputs, weights)
        loss.backward()
    analytic = [x.grad.copy() for x in inputs]

    def forward_scalar() -> float:
        return float(_projection_loss(fn, inputs, weights).data)

    errors = []
    for x, a in zip(inputs, analytic):
        numeric = np.zeros_like(x.data)
        flat = x.data.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = forward_scalar()
            flat[i] = orig - step
            lo = forward_scalar()
            flat[i] = orig
            num_flat[i] = (hi - lo) / (2.0 * step)
        denom = max(float(np.abs(numeric).max()), 1e-8)
        errors.append(float(np.abs(a - numeric).max()) / denom)

    return GradCheckReport(
        op_name=op_name,
        max_rel_error=max(errors) if errors else 0.0,
        per_input_errors=tuple(errors),
        tolerance=tolerance,
    )


@dataclass(frozen=True)
class OpCase:
    """One registered op under one shape configuration."""

    name: str
    fn: Callable
    shapes: tuple
    sampler: Optional[Callable] = None  # (rng, shape) -> float64 array

    def make_inputs(self, seed: int) -> list:
        rng = make_rng("gradcheck-inputs", self.name, seed)
        draw = self.sampler if self.sampler is not None else _standard_normal
        return [Tensor(draw(rng, s)) for s in self.shapes]


def _standard_normal(rng, shape) -> np.ndarray:
    return rng.standard_normal(shape).astype(np.float64)


def _away_from_kink(margin: float) -> Callable:
    # resample until no coordinate sits within ``margin`` of the kink at 0
    def draw(rng, shape):
        x = rng.standard_normal(shape)
        for _ in range(64):
            close = np.abs(x) < margin
            if not close.any():
                break
            x[close] = rng.standard_normal(int(close.sum()))
        return x.astype(np.float64)

    return draw


def grad_check(case: OpCase, tolerance: float = DEFAULT_TOLERANCE,
               step: float = DEFAULT_STEP, seed: int = 0) -> GradCheckReport:
    inputs = case.make_inputs(seed)
    return grad_check_fn(case.fn, inputs, op_name=case.name,
                         tolerance=tolerance, step=step, seed=seed)


def _build_registry() -> list:
    kink = _away_from_kink(1e-2)
    idx_a = np.array([0, 3, 1, 3, 7, 2])
    idx_b = np.array([[1, 0], [2, 4]])
    cases = [
        OpCase("matmul", ad.matmul, ((4, 3), (3, 5))),
        OpCase("matmul", ad.matmul, ((2, 3, 4), (4, 2))),
        OpCase("matmul", ad.matmul, ((2, 4, 3), (2, 3, 4))),
        OpCase("add", ad.add, ((4, 5), (4, 5))),
        OpCase("add", ad.add, ((3, 1, 5), (5,))),
        OpCase("sub", ad.sub, ((4, 5), (4, 5))),
        OpCase("sub", ad.sub, ((2, 4), (4,))),
        OpCase("mul", ad.mul, ((4, 5), (4, 5))),
        OpCase("mul", ad.mul, ((3, 1, 5), (2, 5))),
        OpCase("scale", lambda x: ad.scale(x, 1.7), ((4, 5),)),
        OpCase("scale", lambda x: ad.scale(x, -0.3), ((7,),)),
        OpCase("leaky_relu", lambda x: ad.leaky_relu(x, 0.2), ((6, 6),), sampler=kink),
        OpCase("leaky_relu", lambda x: ad.leaky_relu(x, 0.2), ((11,),), sampler=kink),
        OpCase("tanh", ad.tanh, ((5, 4),)),
        OpCase("tanh", ad.tanh, ((9,),)),
        OpCase("softmax", lambda x: ad.softmax(x, axis=-1), ((5, 7),)),
        OpCase("softmax", lambda x: ad.softmax(x, axis=0), ((3, 4),)),
        OpCase("layer_norm", lambda x, g, b: ad.layer_norm(x, g, b), ((6, 8), (8,), (8,))),
        OpCase("layer_norm", lambda x, g, b: ad.layer_norm(x, g, b), ((2, 3, 8), (8,), (8,))),
        OpCase("mse", ad.mse, ((5, 4), (5, 4))),
        OpCase("mse", ad.mse, ((12,), (12,))),
        OpCase("mean", ad.mean, ((6, 7),)),
        OpCase("mean", ad.mean, ((13,),)),
        OpCase("concat", lambda a, b: ad.concat([a, b], axis=0), ((3, 4), (2, 4))),
        OpCase("concat", lambda a, b: ad.concat([a, b], axis=1), ((3, 2), (3, 5))),
        OpCase("slice", lambda x: ad.take_slice(x, (slice(1, 4), slice(None, None, 2))), ((5, 6),)),
        OpCase("slice", lambda x: ad.take_slice(x, slice(2, 5)), ((7,),)),
        OpCase("embedding_lookup", lambda t: ad.embedding_lookup(t, idx_a), ((10, 4),)),
        OpCase("embedding_lookup", lambda t: ad.embedding_lookup(t, idx_b), ((5, 3),)),
        OpCase("reshape", lambda x: ad.reshape(x, (2, 12)), ((4, 6),)),
        OpCase("reshape", lambda x: ad.reshape(x, (2, 2, 2)), ((8,),)),
        OpCase("transpose", lambda x: ad.transpose(x, (2, 0, 1)), ((3, 4, 5),)),
        OpCase("transpose", lambda x: ad.transpose(x), ((4, 5),)),
    ]
    return cases


REGISTERED_OP_CASES: list = _build_registry()


def run_gradcheck_suite(n_seeds: int = 5, tolerance: float = DEFAULT_TOLERANCE,
                        step: float = DEFAULT_STEP) -> list:
    """Every registered case under ``n_seeds`` input draws; one report each."""
    return [grad_check(case, tolerance=tolerance, step=step, seed=seed)
            for case in REGISTERED_OP_CASES for seed in range(n_seeds)]
