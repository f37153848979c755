"""Posterior sampling: Gaussian likelihood, random-walk Metropolis, t-walk.

The t-walk follows the published construction of Christen & Fox: two coupled
points on the product space, four proposal kernels (walk, traverse, blow,
hop) with the published default move probabilities and parameters, and no
per-problem step-size tuning.  All samplers are driven by an explicitly
seeded generator, so identical seeds give bit-identical chains.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

# published t-walk defaults: move probabilities and kernel parameters
TWALK_MOVE_PROBS = (0.4918, 0.4918, 0.0082, 0.0082)  # walk, traverse, blow, hop
TWALK_AW = 1.5
TWALK_AT = 6.0
TWALK_N1 = 4.0


class InvalidStart(ValueError):
    """Chain starting point(s) with non-finite posterior or coinciding coordinates."""


class ChainTooShort(ValueError):
    """Not enough samples for the requested diagnostic."""


class DegenerateChain(ValueError):
    """Chain with zero variance; autocorrelation is undefined."""


@dataclass(frozen=True)
class Observation:
    """Measured data: values, their locations, and the noise level."""

    y: np.ndarray
    points: np.ndarray
    sigma: float

    def __post_init__(self):
        # sigma == 0 is allowed only as the noiseless-data edge case;
        # likelihood evaluation requires a positive noise level
        if self.sigma < 0.0:
            raise ValueError("noise standard deviation must be nonnegative")
        if len(self.y) < 1:
            raise ValueError("need at least one observation")


@dataclass(frozen=True)
class PosteriorSpec:
    """Unnormalized posterior: forward model, uniform prior support, data.

    ``forward(theta)`` returns the model prediction vector; ``prior`` is a
    domain object with a ``contains`` test (uniform density on its support).
    The evidence is never computed: sampling needs only ratios.
    """

    forward: Callable[[np.ndarray], np.ndarray]
    prior: object
    observation: Observation


@dataclass
class Chain:
    """MCMC output: per-iteration states of the tracked point.

    ``samples[0]`` is the starting state; row t is the state after iteration
    t.  ``iat`` is filled in by diagnostics, not by the sampler.
    """

    samples: np.ndarray  # (n_iter + 1, d)
    logpost: np.ndarray  # (n_iter + 1,)
    acceptance_rate: float
    rng_seed: int
    sampler: str
    iat: float | None = None
    meta: dict = field(default_factory=dict)


def log_likelihood(y: np.ndarray, prediction: np.ndarray, sigma: float) -> float:
    """Gaussian log likelihood with iid noise of standard deviation ``sigma``."""
    y = np.asarray(y, dtype=float)
    p = np.asarray(prediction, dtype=float)
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {p.shape}")
    if sigma <= 0.0:
        raise ValueError("likelihood needs a positive noise level")
    m = len(y)
    resid = y - p
    return float(-0.5 * m * np.log(2.0 * np.pi * sigma**2) - (resid @ resid) / (2.0 * sigma**2))


def log_posterior(theta, spec: PosteriorSpec) -> float:
    """Unnormalized log posterior; -inf outside the prior support.

    Forward-map failures are logged and treated as -inf rather than raised,
    so a sampler simply rejects such proposals.
    """
    t = np.asarray(theta, dtype=float).reshape(-1)
    if not spec.prior.contains(t):
        return -np.inf
    try:
        pred = spec.forward(t)
    except Exception as exc:  # noqa: BLE001 - degrade to rejection
        logger.warning("forward map failed at theta=%s: %s", t, exc)
        return -np.inf
    return log_likelihood(spec.observation.y, pred, spec.observation.sigma)


def _as_logpost(target) -> Callable[[np.ndarray], float]:
    if isinstance(target, PosteriorSpec):
        return lambda th: log_posterior(th, target)
    return target


def rwm_sample(target, theta0, n_iter: int, step_scale: float, seed: int) -> Chain:
    """Random-walk Metropolis with a spherical Gaussian proposal.

    ``target`` is a PosteriorSpec or any callable returning an unnormalized
    log density.  Reference sampler used to cross-check the t-walk.
    """
    lp = _as_logpost(target)
    rng = np.random.default_rng(seed)
    x = np.asarray(theta0, dtype=float).reshape(-1).copy()
    d = len(x)
    fx = float(lp(x))
    if not np.isfinite(fx):
        raise InvalidStart(f"log posterior not finite at start {x}")

    samples = np.empty((n_iter + 1, d))
    logpost = np.empty(n_iter + 1)
    samples[0] = x
    logpost[0] = fx
    accepted = 0
    for it in range(1, n_iter + 1):
        prop = x + step_scale * rng.standard_normal(d)
        fp = float(lp(prop))
        if np.log(rng.uniform()) < fp - fx:
            x, fx = prop, fp
            accepted += 1
        samples[it] = x
        logpost[it] = fx
    return Chain(samples, logpost, accepted / n_iter, seed, "rwm")


def _twalk_phi(rng: np.random.Generator, d: int) -> np.ndarray:
    p = min(d, TWALK_N1) / d
    return rng.uniform(size=d) < p


def _sim_walk(rng, x, pivot):
    phi = _twalk_phi(rng, len(x))
    u = rng.uniform(size=len(x))
    z = (TWALK_AW / (1.0 + TWALK_AW)) * (TWALK_AW * u**2 + 2.0 * u - 1.0)
    return np.where(phi, x + (x - pivot) * z, x), phi


def _sim_beta(rng) -> float:
    if rng.uniform() < (TWALK_AT - 1.0) / (2.0 * TWALK_AT):
        return float(np.exp(np.log(rng.uniform()) / (TWALK_AT + 1.0)))
    return float(np.exp(np.log(rng.uniform()) / (1.0 - TWALK_AT)))


def _sim_traverse(rng, x, pivot, beta):
    phi = _twalk_phi(rng, len(x))
    return np.where(phi, pivot + beta * (pivot - x), x), phi


def _sim_blow(rng, x, pivot):
    phi = _twalk_phi(rng, len(x))
    sigma = np.max(phi * np.abs(pivot - x))
    return np.where(phi, pivot + sigma * rng.standard_normal(len(x)), x), phi, sigma


def _blow_logdens(h, x, pivot, phi):
    # -log proposal density of h given the moved-from point x and pivot
    nphi = int(phi.sum())
    sigma = np.max(phi * np.abs(pivot - x))
    if nphi == 0 or sigma == 0.0:
        return None
    quad = float(np.sum(phi * (h - pivot) ** 2)) / (2.0 * sigma**2)
    return 0.5 * nphi * np.log(2.0 * np.pi) + nphi * np.log(sigma) + quad


def _sim_hop(rng, x, pivot):
    phi = _twalk_phi(rng, len(x))
    sigma = np.max(phi * np.abs(pivot - x)) / 3.0
    return np.where(phi, x + sigma * rng.standard_normal(len(x)), x), phi, sigma


def _hop_logdens(h, x, pivot, phi):
    nphi = int(phi.sum())
    sigma = np.max(phi * np.abs(pivot - x)) / 3.0
    if nphi == 0 or sigma == 0.0:
        return None
    quad = float(np.sum(phi * (h - x) ** 2)) / (2.0 * sigma**2)
    return 0.5 * nphi * np.log(2.0 * np.pi) + nphi * np.log(sigma) + quad


def twalk_sample(target, theta0, theta0_partner, n_iter: int, seed: int) -> Chain:
    """t-walk sampler; returns the trajectory of the primary point.

    The two starting points must differ in every coordinate and both carry a
    finite log posterior.  The algorithm is scale-invariant: there is no
    step-size input.
    """
    lp = _as_logpost(target)
    rng = np.random.default_rng(seed)
    x = np.asarray(theta0, dtype=float).reshape(-1).copy()
    xp = np.asarray(theta0_partner, dtype=float).reshape(-1).copy()
    d = len(x)
    if (x == xp).any():
        raise InvalidStart("t-walk starting points must differ in every coordinate")
    fx = float(lp(x))
    fxp = float(lp(xp))
    if not (np.isfinite(fx) and np.isfinite(fxp)):
        raise InvalidStart("log posterior not finite at a t-walk starting point")

    cum = np.cumsum(TWALK_MOVE_PROBS)
    samples = np.empty((n_iter + 1, d))
    logpost = np.empty(n_iter + 1)
    samples[0] = x
    logpost[0] = fx
    accepted = 0

    for it in range(1, n_iter + 1):
        ker = rng.uniform()
        move_primary = rng.uniform() < 0.5
        mov, piv = (x, xp) if move_primary else (xp, x)
        fmov = fx if move_primary else fxp
        log_a = -np.inf
        y = mov
        fy = fmov

        if ker < cum[0]:  # walk
            y, phi = _sim_walk(rng, mov, piv)
            if (np.abs(y - piv) > 0.0).all():
                fy = float(lp(y))
                log_a = fy - fmov
        elif ker < cum[1]:  # traverse
            beta = _sim_beta(rng)
            y, phi = _sim_traverse(rng, mov, piv, beta)
            fy = float(lp(y))
            nphi = int(phi.sum())
            log_a = 0.0 if nphi == 0 else (fy - fmov) + (nphi - 2) * np.log(beta)
        elif ker < cum[2]:  # blow
            y, phi, sigma = _sim_blow(rng, mov, piv)
            if sigma > 0.0 and (y != piv).all():
                w1 = _blow_logdens(y, mov, piv, phi)
                w2 = _blow_logdens(mov, y, piv, phi)
                if w1 is not None and w2 is not None:
                    fy = float(lp(y))
                    log_a = (fy - fmov) + (w1 - w2)
        else:  # hop
            y, phi, sigma = _sim_hop(rng, mov, piv)
            if sigma > 0.0 and (y != piv).all():
                w1 = _hop_logdens(y, mov, piv, phi)
                w2 = _hop_logdens(mov, y, piv, phi)
                if w1 is not None and w2 is not None:
                    fy = float(lp(y))
                    log_a = (fy - fmov) + (w1 - w2)

        if np.isfinite(fy) and np.log(rng.uniform()) < log_a:
            accepted += 1
            if move_primary:
                x, fx = y, fy
            else:
                xp, fxp = y, fy
        samples[it] = x
        logpost[it] = fx

    return Chain(samples, logpost, accepted / n_iter, seed, "twalk")


def iat(chain: Chain | np.ndarray, column: int = 0, burn_in: int = 0) -> float:
    """Integrated autocorrelation time by the initial-positive-sequence rule.

    Autocovariances are summed in adjacent pairs until a pair turns
    non-positive.  Requires at least 1000 retained samples and a
    non-constant series.
    """
    series = chain.samples[:, column] if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    series = series[burn_in:]
    n = len(series)
    if n < 1000:
        raise ChainTooShort(f"need at least 1000 samples, got {n}")
    x = series - series.mean()
    var = float(x @ x) / n
    if var == 0.0:
        raise DegenerateChain("constant chain has no autocorrelation time")

    nfft = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n

    tau = -acov[0]
    for k in range(0, n // 2 - 1):
        pair = acov[2 * k] + acov[2 * k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    return max(1.0, tau / var)


def histogram_tv(
    chain_a: Chain | np.ndarray,
    chain_b: Chain | np.ndarray,
    bins: int = 50,
    burn_in: int = 0,
    support: tuple | None = None,
) -> float:
    """Total-variation distance between two chains' common-binned histograms.

    For 1-parameter chains this is a 1D histogram on ``support`` (default:
    joint data range); multi-parameter chains use a per-axis grid of the
    same resolution.
    """
    a = chain_a.samples if isinstance(chain_a, Chain) else np.atleast_2d(np.asarray(chain_a, dtype=float).T).T
    b = chain_b.samples if isinstance(chain_b, Chain) else np.atleast_2d(np.asarray(chain_b, dtype=float).T).T
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    a = a[burn_in:]
    b = b[burn_in:]
    if bins < 10:
        raise ValueError("use at least 10 bins")
    d = a.shape[1]
    if support is None:
        lo = np.minimum(a.min(axis=0), b.min(axis=0))
        hi = np.maximum(a.max(axis=0), b.max(axis=0))
    else:
        lo = np.full(d, support[0], dtype=float)
        hi = np.full(d, support[1], dtype=float)
    edges = [np.linspace(lo[j], hi[j], bins + 1) for j in range(d)]
    pa, _ = np.histogramdd(a, bins=edges)
    pb, _ = np.histogramdd(b, bins=edges)
    pa = pa / pa.sum()
    pb = pb / pb.sum()
    return 0.5 * float(np.abs(pa - pb).sum())


def generate_synthetic_data(
    true_theta,
    forward_exact: Callable[[np.ndarray], np.ndarray],
    points: np.ndarray,
    sigma: float,
    seed: int,
) -> Observation:
    """Noisy observations of the exact forward map at the true parameter."""
    t = np.asarray(true_theta, dtype=float).reshape(-1)
    clean = np.asarray(forward_exact(t), dtype=float)
    rng = np.random.default_rng(seed)
    y = clean + sigma * rng.standard_normal(len(clean))
    return Observation(y=y, points=np.asarray(points, dtype=float), sigma=sigma)


# ---------------------------------------------------------------------------
# chain files: delimited text, deterministic formatting


def save_chain(chain: Chain, path: str | Path, burn_in: int | None = None) -> None:
    """One row per retained sample: iteration, parameter components, log posterior.

    The header row carries the sampler metadata; floats are written with
    full precision so reruns with identical seeds are byte-identical.
    """
    d = chain.samples.shape[1]
    meta = {
        "sampler": chain.sampler,
        "seed": chain.rng_seed,
        "n_iter": len(chain.samples) - 1,
        "burn_in": burn_in if burn_in is not None else chain.meta.get("burn_in", 0),
        "dim": d,
        "acceptance_rate": repr(float(chain.acceptance_rate)),
        "iat": repr(float(chain.iat)) if chain.iat is not None else "none",
    }
    head = " ".join(f"{k}={v}" for k, v in meta.items())
    cols = " ".join(["iter"] + [f"theta{j}" for j in range(d)] + ["logpost"])
    with open(path, "w") as fh:
        fh.write(f"# {head}\n# {cols}\n")
        for i in range(len(chain.samples)):
            vals = " ".join(repr(float(v)) for v in chain.samples[i])
            fh.write(f"{i} {vals} {float(chain.logpost[i])!r}\n")


def load_chain(path: str | Path) -> Chain:
    with open(path) as fh:
        meta_line = fh.readline().strip().lstrip("# ")
        fh.readline()
        meta = dict(kv.split("=", 1) for kv in meta_line.split())
        rows = np.loadtxt(fh, ndmin=2)
    d = int(meta["dim"])
    chain = Chain(
        samples=rows[:, 1 : 1 + d],
        logpost=rows[:, 1 + d],
        acceptance_rate=float(meta["acceptance_rate"]),
        rng_seed=int(meta["seed"]),
        sampler=meta["sampler"],
        iat=None if meta.get("iat", "none") == "none" else float(meta["iat"]),
        meta={"burn_in": int(meta.get("burn_in", 0))},
    )
    return chain
