"""Shared oracles for the test suite: finite differences, brute-force OT and
random gradient-check configurations."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from jwdm import autodiff as ad
from jwdm.autodiff import Graph
from jwdm.model import build_bundle, discriminator_objective, total_generator_loss
from jwdm.nn import ACTIVATIONS, init_mlp

FD_STEP = 1e-5
GRAD_RTOL = 1e-4

# results recorded by the acceptance tests, printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)


def numeric_grad(f, arr: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``arr`` (perturbed in place)."""
    out = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + h
        up = f()
        arr[idx] = old - h
        down = f()
        arr[idx] = old
        out[idx] = (up - down) / (2 * h)
    return out


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Max elementwise |a - n| / max(|a|, |n|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max(initial=0.0))


def brute_force_assignment(C: np.ndarray) -> float:
    n = C.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, math.fsum(C[i, perm[i]] for i in range(n)) / n)
    return best


# --------------------------------------------------------- gradient checks

@dataclass
class _Cfg:
    lambda_x: float
    lambda_y: float
    lambda_z: float
    lambda_mix: float
    gan_loss: str


LOSS_KINDS = ("l1", "square", "logsig", "clip", "generator", "discriminator")

# Central differences are meaningless across a kink, so configurations whose
# evaluation point lies this close to one are redrawn.
KINK_MARGIN = 1e-3


def kink_distance(graph: Graph) -> float:
    """Smallest distance from any relu/leaky_relu/abs/clip input to its kink."""
    best = np.inf
    for rec in graph.records:
        if rec.kind not in ("relu", "leaky_relu", "abs", "clip"):
            continue
        x = graph.tensors[rec.inputs[0]].data
        if rec.kind == "clip":
            lo, hi = rec.saved["low"], rec.saved["high"]
            d = np.minimum(np.abs(x - lo), np.abs(x - hi))
        else:
            d = np.abs(x)
        best = min(best, float(d.min()))
    return best


def gradcheck_config(seed: int) -> tuple[str, float]:
    """Build configuration ``seed``, compare every analytic gradient to central differences.

    Returns (description, max relative error) over parameters and inputs.
    """
    kind = LOSS_KINDS[seed % len(LOSS_KINDS)]
    for attempt in range(100):
        rng = np.random.default_rng([seed, attempt])
        if kind in ("generator", "discriminator"):
            result = _check_model(rng, kind)
        else:
            result = _check_mlp(rng, kind)
        if result is not None:
            return result
    raise RuntimeError(f"no kink-free draw for configuration {seed}")


def _check_mlp(rng: np.random.Generator, kind: str):
    depth = int(rng.integers(1, 4))
    dims = [int(rng.integers(1, 5)) for _ in range(depth + 1)]
    acts = [str(a) for a in rng.choice(ACTIVATIONS, size=depth)]
    if kind == "logsig":
        acts[-1] = "sigmoid"
    net = init_mlp(dims, acts, int(rng.integers(2**31)), "net", leaky_slope=float(rng.uniform(0.01, 0.3)))
    for layer in net.layers:
        layer.bias[:] = rng.normal(scale=0.3, size=layer.bias.shape)
    x = rng.normal(size=(int(rng.integers(1, 6)), dims[0]))
    target = rng.normal(size=(x.shape[0], dims[-1]))

    def build():
        g = Graph()
        xt = g.constant(x)
        out = net(xt)
        if kind == "l1":
            loss = ad.mean(ad.tabs(out - target))
        elif kind == "square":
            loss = ad.tsum(out * out) * 0.5 + ad.mean(out * target)
        elif kind == "logsig":
            loss = -ad.mean(ad.log(out))
        else:
            loss = ad.mean(ad.clip(out, -0.4, 0.4) * target) + ad.mean(ad.tanh(out))
        return g, xt, loss

    def value():
        return build()[2].item()

    g, xt, loss = build()
    if kink_distance(g) < KINK_MARGIN:
        return None
    g.backward(loss)
    grads = g.param_grads()
    worst = rel_error(xt.grad, numeric_grad(value, x))
    for name, arr in net.parameters().items():
        worst = max(worst, rel_error(grads[name], numeric_grad(value, arr)))
    return f"{kind} dims={dims} acts={acts}", worst


def _check_model(rng: np.random.Generator, kind: str):
    latent = int(rng.integers(1, 4))
    bundle = build_bundle(2, latent, (int(rng.integers(2, 5)),), seed=int(rng.integers(2**31)),
                          leaky_slope=float(rng.uniform(0.01, 0.3)))
    cfg = _Cfg(*rng.uniform(0.05, 2.0, size=3), float(rng.uniform(0.1, 0.9)),
               str(rng.choice(["non_saturating", "minimax"])))
    n = int(rng.integers(2, 5))
    bx, by = rng.normal(size=(n, 2)), rng.normal(size=(n, 2)) * 0.5
    prior = rng.normal(size=(n, latent))

    if kind == "generator":
        params = bundle.parameters("generators")

        def build():
            g = Graph()
            return g, total_generator_loss(bundle, (bx, by), cfg, graph=g)[0]
    else:
        params = bundle.parameters("discriminators")

        def build():
            g = Graph()
            return g, discriminator_objective(bundle, (bx, by), prior, cfg, graph=g)[0]

    g, loss = build()
    if kink_distance(g) < KINK_MARGIN:
        return None
    g.backward(loss)
    grads = g.param_grads()
    worst = 0.0
    for name, arr in params.items():
        worst = max(worst, rel_error(grads[name], numeric_grad(lambda: build()[1].item(), arr)))
    return kind, worst
