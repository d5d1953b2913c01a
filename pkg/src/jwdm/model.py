"""Model bundle (two auto-encoders sharing a latent space, three discriminators)
and every term of the training objective.

Paths through the bundle, for a source batch ``x`` and target batch ``y``::

    z1 = E1(x)   x_rec = G1(z1)   y_trans = G2(z1)   x_cyc = G1(E2(y_trans))
    z2 = E2(y)   y_rec = G2(z2)   x_trans = G1(z2)   y_cyc = G2(E1(x_trans))

Discriminator objectives are returned in the form that is *ascended*;
generator losses are *descended*.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, fields
from functools import cached_property
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Graph, Tensor
from .nn import Layer, Mlp, init_mlp

GENERATORS = ("E1", "E2", "G1", "G2")
DISCRIMINATORS = ("Dx", "Dy", "Dz")
GAN_LOSSES = ("non_saturating", "minimax")

# discriminator outputs are clamped into [PROB_EPS, 1 - PROB_EPS] before any log
PROB_EPS = 1e-6


@dataclass
class ModelBundle:
    E1: Mlp
    E2: Mlp
    G1: Mlp
    G2: Mlp
    Dx: Mlp
    Dy: Mlp
    Dz: Mlp

    def __post_init__(self):
        latent = self.E1.output_dim
        if not (self.E2.output_dim == self.G1.input_dim == self.G2.input_dim == self.Dz.input_dim == latent):
            raise ValueError("encoders, decoders and Dz must agree on the latent dimension")
        for name in DISCRIMINATORS:
            net = getattr(self, name)
            if net.output_dim != 1 or net.layers[-1].activation != "sigmoid":
                raise ValueError(f"{name} must end in a single sigmoid unit")

    @property
    def latent_dim(self) -> int:
        return self.E1.output_dim

    @property
    def data_dims(self) -> tuple[int, int]:
        return self.E1.input_dim, self.E2.input_dim

    def nets(self, group: str = "all") -> dict[str, Mlp]:
        names = {"all": GENERATORS + DISCRIMINATORS, "generators": GENERATORS, "discriminators": DISCRIMINATORS}[group]
        return {n: getattr(self, n) for n in names}

    def parameters(self, group: str = "all") -> dict[str, np.ndarray]:
        out = {}
        for net in self.nets(group).values():
            out.update(net.parameters())
        return out

    def snapshot(self) -> "ModelBundle":
        return copy.deepcopy(self)


def build_bundle(
    data_dim: int = 2,
    latent_dim: int = 8,
    hidden: tuple[int, ...] = (64, 64),
    seed: int = 0,
    leaky_slope: float = ad.DEFAULT_LEAKY_SLOPE,
    target_dim: int | None = None,
) -> ModelBundle:
    """Fresh bundle; each network is seeded from its own child of ``seed``."""
    ydim = data_dim if target_dim is None else target_dim
    hidden = list(hidden)
    acts = ["leaky_relu"] * len(hidden)
    seeds = dict(zip(GENERATORS + DISCRIMINATORS, np.random.SeedSequence(seed).spawn(7)))

    def net(name, din, dout, last):
        return init_mlp([din, *hidden, dout], acts + [last], seeds[name], name, leaky_slope)

    return ModelBundle(
        E1=net("E1", data_dim, latent_dim, "identity"),
        E2=net("E2", ydim, latent_dim, "identity"),
        G1=net("G1", latent_dim, data_dim, "identity"),
        G2=net("G2", latent_dim, ydim, "identity"),
        Dx=net("Dx", data_dim, 1, "sigmoid"),
        Dy=net("Dy", ydim, 1, "sigmoid"),
        Dz=net("Dz", latent_dim, 1, "sigmoid"),
    )


def oracle_bundle(matrix, offset, latent_dim: int = 8, seed: int = 0) -> ModelBundle:
    """Linear bundle whose translation G2∘E1 is exactly ``x @ matrix.T + offset``.

    The first ``d`` latent coordinates carry x; the rest stay zero.
    Discriminators are freshly initialised.
    """
    A = np.asarray(matrix, dtype=np.float64)
    b = np.asarray(offset, dtype=np.float64)
    d = A.shape[0]
    if latent_dim < d:
        raise ValueError(f"latent_dim must be >= data dim {d}")
    Ainv = np.linalg.inv(A)
    embed = np.zeros((d, latent_dim))
    embed[:, :d] = np.eye(d)

    def lin(name, w, bias):
        return Mlp(name, [Layer(np.array(w, dtype=np.float64), np.array(bias, dtype=np.float64), "identity")])

    E1 = lin("E1", embed, np.zeros(latent_dim))
    G1 = lin("G1", embed.T, np.zeros(d))
    G2 = lin("G2", embed.T @ A.T, b)
    e2_bias = np.zeros(latent_dim)
    e2_bias[:d] = -Ainv @ b
    E2 = lin("E2", Ainv.T @ embed, e2_bias)
    rand = build_bundle(d, latent_dim, seed=seed)
    return ModelBundle(E1, E2, G1, G2, rand.Dx, rand.Dy, rand.Dz)


@dataclass
class LossBreakdown:
    recon_x: float
    recon_y: float
    adv_x: float
    adv_y: float
    adv_z1: float
    adv_z2: float
    total: float
    disc_x: float = float("nan")
    disc_y: float = float("nan")
    disc_z: float = float("nan")

    @staticmethod
    def combine(recon_x, recon_y, adv_x, adv_y, adv_z1, adv_z2, lambda_x, lambda_y, lambda_z):
        """The weighted total; works on floats and on graph tensors alike."""
        return recon_x + recon_y + adv_x * lambda_x + adv_y * lambda_y + (adv_z1 + adv_z2) * lambda_z

    def satisfies_identity(self, lambda_x: float, lambda_y: float, lambda_z: float) -> bool:
        expected = self.combine(
            self.recon_x, self.recon_y, self.adv_x, self.adv_y, self.adv_z1, self.adv_z2, lambda_x, lambda_y, lambda_z
        )
        return expected == self.total

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


BREAKDOWN_FIELDS = tuple(f.name for f in fields(LossBreakdown))


def standard_normal_prior(rng: np.random.Generator, latent_dim: int) -> Callable[[int], np.ndarray]:
    return lambda n: rng.standard_normal((n, latent_dim))


# --------------------------------------------------------------- internals

class _Paths:
    """Lazily built forward paths for one (x, y) batch pair inside one graph."""

    def __init__(self, bundle: ModelBundle, graph: Graph, batch_x=None, batch_y=None):
        self.b = bundle
        self.g = graph
        self.x = None if batch_x is None else _as_batch(graph, batch_x, bundle.E1.input_dim, "batch_x")
        self.y = None if batch_y is None else _as_batch(graph, batch_y, bundle.E2.input_dim, "batch_y")

    @cached_property
    def z1(self):
        return self.b.E1(self.x)

    @cached_property
    def x_rec(self):
        return self.b.G1(self.z1)

    @cached_property
    def y_trans(self):
        return self.b.G2(self.z1)

    @cached_property
    def x_cyc(self):
        return self.b.G1(self.b.E2(self.y_trans))

    @cached_property
    def z2(self):
        return self.b.E2(self.y)

    @cached_property
    def y_rec(self):
        return self.b.G2(self.z2)

    @cached_property
    def x_trans(self):
        return self.b.G1(self.z2)

    @cached_property
    def y_cyc(self):
        return self.b.G2(self.b.E1(self.x_trans))


def _as_batch(graph: Graph, batch, dim: int, label: str) -> Tensor:
    if isinstance(batch, Tensor):
        t = batch
    else:
        t = graph.constant(batch)
    if t.data.ndim != 2 or t.shape[0] < 1:
        raise ad.ShapeError(f"{label} must be a non-empty (batch, dim) matrix, got shape {t.shape}")
    if t.shape[1] != dim:
        raise ad.ShapeError(f"{label} has dim {t.shape[1]}, network expects {dim}")
    return t


def _l1(a: Tensor, b: Tensor) -> Tensor:
    # batch mean of per-sample L1 norms
    return ad.tsum(ad.tabs(a - b)) * (1.0 / a.shape[0])


def _log_d(disc: Mlp, inp: Tensor) -> Tensor:
    return ad.mean(ad.log(ad.clip(disc(inp), PROB_EPS, 1.0 - PROB_EPS)))


def _log_1md(disc: Mlp, inp: Tensor) -> Tensor:
    return ad.mean(ad.log(1.0 - ad.clip(disc(inp), PROB_EPS, 1.0 - PROB_EPS)))


def _detach(t: Tensor) -> Tensor:
    return t.graph.constant(t.data)


def _check_mix(lambda_mix: float) -> None:
    if not 0.0 < lambda_mix < 1.0:
        raise ValueError(f"lambda_mix must lie in (0, 1), got {lambda_mix}")


def _check_gan_loss(gan_loss: str) -> None:
    if gan_loss not in GAN_LOSSES:
        raise ValueError(f"gan_loss must be one of {GAN_LOSSES}, got {gan_loss!r}")


def _gen_adv(disc: Mlp, fakes_and_weights, gan_loss: str) -> Tensor:
    terms = []
    for fake, w in fakes_and_weights:
        if gan_loss == "non_saturating":
            terms.append(-(_log_d(disc, fake) * w))
        else:
            terms.append(_log_1md(disc, fake) * w)
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


def _disc_obj(disc: Mlp, real: Tensor, fakes_and_weights) -> Tensor:
    out = _log_d(disc, real)
    for fake, w in fakes_and_weights:
        out = out + _log_1md(disc, fake) * w
    return out


def _x_side(p: _Paths, lam: float):
    return [(p.x_cyc, lam), (p.x_trans, 1.0 - lam)]


def _y_side(p: _Paths, lam: float):
    return [(p.y_cyc, lam), (p.y_trans, 1.0 - lam)]


# ------------------------------------------------------------ public losses

def recon_loss_x(bundle: ModelBundle, batch_x, graph: Graph | None = None) -> Tensor:
    """Auto-encoder plus cycle reconstruction error of the source domain."""
    p = _Paths(bundle, graph or Graph(), batch_x=batch_x)
    return _l1(p.x, p.x_rec) + _l1(p.x, p.x_cyc)


def recon_loss_y(bundle: ModelBundle, batch_y, graph: Graph | None = None) -> Tensor:
    p = _Paths(bundle, graph or Graph(), batch_y=batch_y)
    return _l1(p.y, p.y_rec) + _l1(p.y, p.y_cyc)


def adv_x_terms(
    bundle: ModelBundle, batch_x, batch_y, lambda_mix: float = 0.5,
    gan_loss: str = "non_saturating", graph: Graph | None = None,
) -> tuple[Tensor, Tensor]:
    """(generator loss, discriminator objective) for matching the source distribution.

    Fake samples are the cycle path G1(E2(G2(E1(x)))) with weight ``lambda_mix``
    and the translation G1(E2(y)) with weight ``1 - lambda_mix``.  The
    discriminator objective sees them detached.
    """
    _check_mix(lambda_mix)
    _check_gan_loss(gan_loss)
    p = _Paths(bundle, graph or Graph(), batch_x, batch_y)
    fakes = _x_side(p, lambda_mix)
    gen = _gen_adv(bundle.Dx, fakes, gan_loss)
    disc = _disc_obj(bundle.Dx, p.x, [(_detach(f), w) for f, w in fakes])
    return gen, disc


def adv_y_terms(
    bundle: ModelBundle, batch_x, batch_y, lambda_mix: float = 0.5,
    gan_loss: str = "non_saturating", graph: Graph | None = None,
) -> tuple[Tensor, Tensor]:
    _check_mix(lambda_mix)
    _check_gan_loss(gan_loss)
    p = _Paths(bundle, graph or Graph(), batch_x, batch_y)
    fakes = _y_side(p, lambda_mix)
    gen = _gen_adv(bundle.Dy, fakes, gan_loss)
    disc = _disc_obj(bundle.Dy, p.y, [(_detach(f), w) for f, w in fakes])
    return gen, disc


def adv_z_terms(
    bundle: ModelBundle, batch_x, batch_y, prior_sampler: Callable[[int], np.ndarray],
    gan_loss: str = "non_saturating", graph: Graph | None = None,
) -> tuple[Tensor, Tensor]:
    """Latent matching for both encoders against one shared Dz.

    Returns ``(adv_z1 + adv_z2, disc_z)``; each encoder branch carries weight 1/2.
    """
    _check_gan_loss(gan_loss)
    p = _Paths(bundle, graph or Graph(), batch_x, batch_y)
    z1, z2 = _z_branches(bundle, p, gan_loss)
    prior = _prior_batch(p.g, prior_sampler, len(p.x.data), bundle.latent_dim)
    disc = _disc_obj(bundle.Dz, prior, [(_detach(p.z1), 0.5), (_detach(p.z2), 0.5)])
    return z1 + z2, disc


def _z_branches(bundle: ModelBundle, p: _Paths, gan_loss: str) -> tuple[Tensor, Tensor]:
    return _gen_adv(bundle.Dz, [(p.z1, 0.5)], gan_loss), _gen_adv(bundle.Dz, [(p.z2, 0.5)], gan_loss)


def _prior_batch(graph: Graph, sampler, n: int, latent_dim: int) -> Tensor:
    z = np.asarray(sampler(n), dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != latent_dim:
        raise ad.ShapeError(f"prior samples must have shape (n, {latent_dim}), got {z.shape}")
    return graph.constant(z)


def total_generator_loss(bundle: ModelBundle, batches, config, graph: Graph | None = None) -> tuple[Tensor, LossBreakdown]:
    """Reconstruction losses plus weighted adversarial terms, sharing one forward pass.

    ``batches`` is ``(batch_x, batch_y)``; ``config`` supplies ``lambda_x``,
    ``lambda_y``, ``lambda_z``, ``lambda_mix`` and ``gan_loss``.
    """
    for name in ("lambda_x", "lambda_y", "lambda_z"):
        if getattr(config, name) < 0:
            raise ValueError(f"{name} must be >= 0")
    _check_mix(config.lambda_mix)
    _check_gan_loss(config.gan_loss)
    batch_x, batch_y = batches
    p = _Paths(bundle, graph or Graph(), batch_x, batch_y)
    rx = _l1(p.x, p.x_rec) + _l1(p.x, p.x_cyc)
    ry = _l1(p.y, p.y_rec) + _l1(p.y, p.y_cyc)
    ax = _gen_adv(bundle.Dx, _x_side(p, config.lambda_mix), config.gan_loss)
    ay = _gen_adv(bundle.Dy, _y_side(p, config.lambda_mix), config.gan_loss)
    az1, az2 = _z_branches(bundle, p, config.gan_loss)
    total = LossBreakdown.combine(rx, ry, ax, ay, az1, az2, config.lambda_x, config.lambda_y, config.lambda_z)
    breakdown = LossBreakdown(
        rx.item(), ry.item(), ax.item(), ay.item(), az1.item(), az2.item(), total.item()
    )
    return total, breakdown


def discriminator_objective(bundle: ModelBundle, batches, prior_z, config, graph: Graph | None = None):
    """Weighted sum of the three discriminator objectives (to be ascended).

    All fakes are produced by a detached numpy forward pass, so only Dx, Dy
    and Dz enter the graph.  Returns ``(objective, {"disc_x", "disc_y", "disc_z"})``.
    """
    g = graph or Graph()
    batch_x, batch_y = (np.asarray(b, dtype=np.float64) for b in batches)
    lam = config.lambda_mix
    _check_mix(lam)
    b = bundle
    z1 = b.E1.predict(batch_x)
    z2 = b.E2.predict(batch_y)
    x_trans = b.G1.predict(z2)
    y_trans = b.G2.predict(z1)
    x_cyc = b.G1.predict(b.E2.predict(y_trans))
    y_cyc = b.G2.predict(b.E1.predict(x_trans))
    c = g.constant
    dx = _disc_obj(b.Dx, c(batch_x), [(c(x_cyc), lam), (c(x_trans), 1.0 - lam)])
    dy = _disc_obj(b.Dy, c(batch_y), [(c(y_cyc), lam), (c(y_trans), 1.0 - lam)])
    dz = _disc_obj(b.Dz, _prior_batch(g, lambda n: prior_z, len(batch_x), b.latent_dim), [(c(z1), 0.5), (c(z2), 0.5)])
    objective = dx * config.lambda_x + dy * config.lambda_y + dz * config.lambda_z
    return objective, {"disc_x": dx.item(), "disc_y": dy.item(), "disc_z": dz.item()}
