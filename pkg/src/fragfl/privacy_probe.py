"""Desk-scale privacy attacks on original versus mixed gradients.

Two input-reconstruction attacks a curious server could run on a single
example's gradient, plus fragment-survival statistics for masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import crypto
from .errors import DomainError, ReconstructionError
from .exchange import AcceptorSession, InitiatorSession, run_exchange, server_decrypt
from .params import ParamWords, as_float64
from .training import ModelSpec

BIAS_THRESHOLD = 1e-9
MAX_MATCHING_DIM = 16


@dataclass(frozen=True)
class ReconstructionResult:
    x_hat: np.ndarray
    rel_error: float | None  # None when no ground truth was supplied
    method: str  # analytic | gradient_matching
    label: int | None = None
    objective: float | None = None
    converged: bool = True


def _rel_error(x_hat: np.ndarray, x_true) -> float | None:
    if x_true is None:
        return None
    x = np.asarray(x_true, dtype=np.float64)
    norm = np.linalg.norm(x)
    if norm == 0:
        raise DomainError("relative error is undefined for a zero input")
    return float(np.linalg.norm(x_hat - x) / norm)


def extract_gradient(W_global, W_k, eta: float) -> np.ndarray:
    """Summed gradient implied by one update: (W - W_k) / eta."""
    if eta <= 0:
        raise DomainError("learning rate must be positive")
    return (as_float64(W_global) - as_float64(W_k)) / eta


def single_example_update(W: ParamWords, x, y: int, spec: ModelSpec, eta: float) -> ParamWords:
    """One full-batch SGD step on a single example."""
    _, g = spec.loss_and_grad(W.floats64(), np.asarray(x, dtype=np.float64)[None, :], np.array([y]))
    return ParamWords.from_floats(W.floats64() - eta * g, W.layout)


def reconstruct_analytic(grad_W1, grad_b1, x_true=None) -> ReconstructionResult:
    """Invert a dense first layer: row r of dW1 is g_r * x and db1_r is g_r.

    Uses the row with the largest bias gradient for numerical stability.
    """
    gW = np.asarray(grad_W1, dtype=np.float64)
    gb = np.asarray(grad_b1, dtype=np.float64).reshape(-1)
    if gW.ndim != 2 or gW.shape[0] != gb.size:
        raise DomainError("grad_W1 must be (rows, d) with one bias entry per row")
    r = int(np.argmax(np.abs(gb)))
    if abs(gb[r]) <= BIAS_THRESHOLD:
        raise ReconstructionError("every bias-gradient row is below threshold; nothing to invert")
    x_hat = gW[r] / gb[r]
    return ReconstructionResult(x_hat, _rel_error(x_hat, x_true), "analytic")


def analytic_from_flat(grad: np.ndarray, spec: ModelSpec, x_true=None) -> ReconstructionResult:
    parts = spec.unpack(as_float64(grad))
    return reconstruct_analytic(parts[0], parts[1], x_true)


def _cos_distance(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    return 1.0 - float(np.dot(a, b) / (na * nb))


def reconstruct_gradient_matching(
    grad_target,
    spec: ModelSpec,
    W_global: ParamWords | np.ndarray,
    steps: int = 500,
    *,
    x_init=None,
    x_true=None,
    seed: int = 0,
    lr: float = 0.5,
    fd_eps: float = 1e-5,
    tol: float = 1e-10,
    restarts: int = 4,
) -> ReconstructionResult:
    """Search a dummy example whose gradient has maximal cosine with the target.

    x* follows central finite-difference gradients of ``1 - cos`` with a
    backtracking step; y* is enumerated over the classes.  Each of
    ``restarts`` random starts gets ``steps`` updates per label.  If nothing
    reaches ``tol`` the best point found is returned with ``converged=False``.
    """
    if spec.d > MAX_MATCHING_DIM:
        raise DomainError(f"gradient matching is limited to d <= {MAX_MATCHING_DIM}")
    if steps < 0:
        raise DomainError("steps must be non-negative")
    target = as_float64(grad_target)
    theta = W_global.floats64() if isinstance(W_global, ParamWords) else np.asarray(W_global, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if x_init is not None:
        starts = [np.asarray(x_init, dtype=np.float64).copy()]
    else:
        starts = [rng.normal(size=spec.d) for _ in range(max(restarts, 1))]

    def objective(x: np.ndarray, y: int) -> float:
        _, g = spec.loss_and_grad(theta, x[None, :], np.array([y]))
        return _cos_distance(g, target)

    def descend(x: np.ndarray, y: int) -> tuple[float, np.ndarray]:
        f = objective(x, y)
        step = lr
        for _ in range(steps):
            if f <= tol:
                break
            grad = np.empty(spec.d)
            for i in range(spec.d):
                e = np.zeros(spec.d)
                e[i] = fd_eps
                grad[i] = (objective(x + e, y) - objective(x - e, y)) / (2 * fd_eps)
            if not np.any(grad):
                break
            while step > 1e-12:
                cand = x - step * grad
                fc = objective(cand, y)
                if fc < f:
                    x, f = cand, fc
                    step *= 1.5
                    break
                step *= 0.5
            else:
                break
        return f, x

    best = (math.inf, starts[0], 0)
    for start in starts:
        for y in range(spec.z):
            f, x = descend(start.copy(), y)
            if f < best[0]:
                best = (f, x, y)
            if best[0] <= tol:
                break
        if best[0] <= tol:
            break
    f, x_hat, y = best
    return ReconstructionResult(
        x_hat, _rel_error(x_hat, x_true), "gradient_matching", label=y, objective=f, converged=f <= tol
    )


# ---------------------------------------------------------------------------
# Fragment survival
# ---------------------------------------------------------------------------


def survival_probability(u: int) -> float:
    if u < 0:
        raise DomainError("u must be non-negative")
    return 0.5**u


def survival_empirical(
    u: int, trials: int, seed: int = 0, n_params: int | None = None, group_name: str = "modp2048-256"
) -> float:
    """Share of fresh DH-derived masks leaving a fixed u-coordinate set in the originator's mix.

    The originator keeps its own words where m = 0, so the first ``u``
    coordinates survive when all of them are 0 in the mask.
    """
    if u < 0 or trials < 1:
        raise DomainError("need u >= 0 and trials >= 1")
    n = max(u, 1) if n_params is None else n_params
    if n < u:
        raise DomainError("n_params must cover the u coordinates")
    group = crypto.get_group(group_name, allow_test=True)
    rng = crypto.DeterministicRandom(f"survival/{seed}")
    hits = 0
    for _ in range(trials):
        shared = 2 + rng.randbelow(group.p - 3)
        mask = crypto.derive_mask(shared, n, group)
        if not mask.bits[:u].any():
            hits += 1
    return hits / trials


# ---------------------------------------------------------------------------
# End-to-end demo
# ---------------------------------------------------------------------------

DEMO_SOURCES = ("fl", "ffl")
DEMO_METHODS = ("analytic", "gradient_matching")


@dataclass(frozen=True)
class DemoRow:
    method: str
    source: str
    seed: int
    rel_error: float


def _demo_batch(spec: ModelSpec, seed: int):
    rng = np.random.default_rng([seed, 7])
    W = spec.init_params(int(rng.integers(2**31)))
    xs = rng.normal(size=(2, spec.d))
    ys = rng.integers(0, spec.z, size=2)
    return W, xs, ys


def victim_gradient(
    source: str,
    spec: ModelSpec,
    seed: int,
    eta: float = 1.0,
    keys: crypto.ServerKeyPair | None = None,
    group_name: str = "modp2048-256",
) -> tuple[ParamWords, np.ndarray, np.ndarray]:
    """Returns (W_global, gradient seen by the server, victim's true input).

    ``fl`` exposes the victim's own update; ``ffl`` runs a real fragment
    exchange with a second single-example participant and decrypts the
    victim's mixed submission.
    """
    if source not in DEMO_SOURCES:
        raise DomainError(f"unknown gradient source {source!r}")
    W, xs, ys = _demo_batch(spec, seed)
    W_k = single_example_update(W, xs[0], int(ys[0]), spec, eta)
    if source == "fl":
        return W, extract_gradient(W, W_k, eta), xs[0]
    W_j = single_example_update(W, xs[1], int(ys[1]), spec, eta)
    keys = keys or crypto.ServerKeyPair.generate()
    group = crypto.get_group(group_name, allow_test=True)
    init = InitiatorSession(f"demo{seed}", "k", W_k, keys.public_key, group, crypto.DeterministicRandom(f"demo/{seed}/k"))
    acc = AcceptorSession(f"demo{seed}", "j", W_j, keys.public_key, group, crypto.DeterministicRandom(f"demo/{seed}/j"))
    sub_k, _ = run_exchange(init, acc)
    mixed = server_decrypt(sub_k, keys)
    return W, extract_gradient(W, mixed, eta), xs[0]


def attack_demo(
    method: str,
    source: str,
    seeds: Sequence[int] = range(20),
    spec: ModelSpec | None = None,
    keys: crypto.ServerKeyPair | None = None,
    steps: int = 500,
) -> list[DemoRow]:
    if method not in DEMO_METHODS:
        raise DomainError(f"unknown reconstruction method {method!r}")
    spec = spec or ModelSpec("mlp1", 4, 2, 8)
    if source == "ffl" and keys is None:
        keys = crypto.ServerKeyPair.generate()
    rows = []
    for seed in seeds:
        W, grad, x = victim_gradient(source, spec, seed, keys=keys)
        if method == "analytic":
            try:
                res = analytic_from_flat(grad, spec, x)
                err = res.rel_error
            except ReconstructionError:
                err = math.inf
        else:
            err = reconstruct_gradient_matching(grad, spec, W, steps, x_true=x, seed=seed).rel_error
        rows.append(DemoRow(method, source, seed, float(err)))
    return rows
