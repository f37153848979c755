"""Configuration-driven pipelines for the three disk inverse problems.

Each experiment fixes the PDE setup (domain, flux, observation points), the
continuity structure (C, G, F) used by the surrogate, and sampler defaults.
A pipeline run has three stages: ``preprocess`` (exact solves on the design,
persisted as a surrogate store), ``sample`` (MCMC chains against surrogate
and/or exact forward maps), and ``analyze`` (histograms, quantiles, TV
tables, error-bound and timing summaries).
"""

from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import fem, mcmc, surrogate
from .fem import ConductivityField, FieldSolution, Inclusion
from .mesh import Mesh, generate_disk_mesh, refine_uniform
from .oracle import exact_boundary_cos4
from .surrogate import (
    Design,
    DiskDomain,
    Interval,
    ModelStructure,
    SurrogateStore,
    build_design_dyadic_1d,
    build_design_grid_2d,
    build_design_triangular_2d,
    error_bound,
    evaluate_surrogate,
    settings_hash,
    surrogate_forward,
    verify_design_approximation,
)

logger = logging.getLogger(__name__)

EXPERIMENTS = ("conductivity", "radius", "anomaly")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class MissingArtifact(FileNotFoundError):
    """A pipeline stage needs an artifact that has not been produced."""


_DEFAULTS: dict[str, dict] = {
    "conductivity": {
        "experiment": "conductivity",
        "output_dir": "runs/conductivity",
        "true_parameter": [3.2],
        "sigma": 0.01,
        "m": 10,
        "k": 2,
        "eta": 1e-8,
        "data_seed": 2301,
        "reference": "oracle",
        "fem_in_loop_max": 200,
        "design": {"kind": "dyadic", "level": 4},
        "mesh": {"target_h": 0.03, "refinements": 1},
        "sampler": {
            "type": "twalk",
            "iterations": 100_000,
            "burn_in": 10_000,
            "seeds": [7],
            "x0": [3.0],
            "x1": [4.0],
            "step_scale": 0.25,
        },
        "analysis": {"bins": 50, "quantiles": [0.05, 0.5, 0.95], "reconstruction_samples": 500},
        "physics": {"inclusion_radius": 0.85},
    },
    "radius": {
        "experiment": "radius",
        "output_dir": "runs/radius",
        "true_parameter": [0.725],
        "sigma": 0.01,
        "m": 10,
        "k": 2,
        "eta": 1e-8,
        "data_seed": 2302,
        "reference": "oracle",
        "fem_in_loop_max": 200,
        "design": {"kind": "dyadic", "level": 7},
        "mesh": {"target_h": 0.03, "refinements": 1},
        "sampler": {
            "type": "twalk",
            "iterations": 100_000,
            "burn_in": 10_000,
            "seeds": [7],
            "x0": [0.4],
            "x1": [0.6],
            "step_scale": 0.05,
        },
        "analysis": {"bins": 50, "quantiles": [0.05, 0.5, 0.95], "reconstruction_samples": 500},
        "physics": {"contrast": 6.0},
    },
    "anomaly": {
        "experiment": "anomaly",
        "output_dir": "runs/anomaly",
        # alternative truth center seen in some runs: [2.25, -3.1]
        "true_parameter": [2.5, -3.1],
        "sigma": 0.01,
        "m": 20,
        "k": 3,
        "eta": 1e-8,
        "data_seed": 2303,
        "reference": "none",
        "fem_in_loop_max": 200,
        "design": {"kind": "grid", "spacing": 0.6},
        "mesh": {"target_h": 0.2, "refinements": 0},
        "sampler": {
            "type": "twalk",
            "iterations": 100_000,
            "burn_in": 10_000,
            "seeds": [7],
            "x0": [1.0, -1.0],
            "x1": [-2.0, 2.0],
            "step_scale": 0.25,
        },
        "analysis": {"bins": 50, "quantiles": [0.05, 0.5, 0.95], "reconstruction_samples": 500},
        "physics": {"contrast": 6.0, "anomaly_radius": 0.25, "pde_radius": 5.0},
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    output_dir: Path
    true_parameter: np.ndarray
    sigma: float
    m: int
    k: int
    eta: float
    data_seed: int
    reference: str
    fem_in_loop_max: int
    design: dict
    mesh: dict
    sampler: dict
    analysis: dict
    physics: dict
    raw: dict


def default_config(experiment: str) -> dict:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    return copy.deepcopy(_DEFAULTS[experiment])


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(source, seed: int | None = None, output_dir=None) -> ExperimentConfig:
    """Build a validated config from an experiment name, a YAML path, or a dict.

    A YAML file needs at least an ``experiment`` key; everything else falls
    back to that experiment's defaults.  ``seed``/``output_dir`` override the
    corresponding config entries (command-line flags).
    """
    if isinstance(source, dict):
        user = copy.deepcopy(source)
    elif str(source) in EXPERIMENTS:
        user = {"experiment": str(source)}
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            user = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config {path} must be a mapping")

    experiment = user.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"config must set experiment to one of {EXPERIMENTS}, got {experiment!r}")
    merged = _deep_merge(_DEFAULTS[experiment], user)

    unknown = set(merged) - set(_DEFAULTS[experiment])
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if seed is not None:
        merged["sampler"]["seeds"] = [int(seed)]
    if output_dir is not None:
        merged["output_dir"] = str(output_dir)

    cfg = ExperimentConfig(
        experiment=experiment,
        output_dir=Path(merged["output_dir"]),
        true_parameter=np.asarray(merged["true_parameter"], dtype=float).reshape(-1),
        sigma=float(merged["sigma"]),
        m=int(merged["m"]),
        k=int(merged["k"]),
        eta=float(merged["eta"]),
        data_seed=int(merged["data_seed"]),
        reference=str(merged["reference"]),
        fem_in_loop_max=int(merged["fem_in_loop_max"]),
        design=merged["design"],
        mesh=merged["mesh"],
        sampler=merged["sampler"],
        analysis=merged["analysis"],
        physics=merged["physics"],
        raw=merged,
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.sigma <= 0:
        raise ConfigError("sigma must be positive")
    if cfg.m < 1:
        raise ConfigError("m must be at least 1")
    if cfg.k < 1:
        raise ConfigError("k must be at least 1")
    if cfg.mesh["target_h"] <= 0:
        raise ConfigError("mesh target_h must be positive")
    if cfg.mesh.get("refinements", 0) < 0:
        raise ConfigError("mesh refinements must be nonnegative")
    s = cfg.sampler
    if s["type"] not in ("twalk", "rwm"):
        raise ConfigError(f"unknown sampler type {s['type']!r}")
    if s["iterations"] < 1 or not 0 <= s["burn_in"] < s["iterations"]:
        raise ConfigError("need 0 <= burn_in < iterations")
    if not s["seeds"]:
        raise ConfigError("at least one sampler seed required")
    if cfg.reference not in ("oracle", "fem", "none"):
        raise ConfigError(f"reference must be oracle|fem|none, got {cfg.reference!r}")
    kind = cfg.design.get("kind")
    if kind == "dyadic":
        if int(cfg.design.get("level", 0)) < 1:
            raise ConfigError("dyadic design needs level >= 1")
    elif kind in ("grid", "triangular"):
        if float(cfg.design.get("spacing", 0.0)) <= 0:
            raise ConfigError("lattice design needs positive spacing")
    else:
        raise ConfigError(f"unknown design kind {kind!r}")
    model = build_model(cfg)
    if not model.structure.domain.contains(cfg.true_parameter):
        raise ConfigError(f"true parameter {cfg.true_parameter} outside the admissible domain")
    if cfg.reference == "oracle" and model.oracle_forward is None:
        raise ConfigError(f"experiment {cfg.experiment} has no exact closed-form forward map")
    dim = model.structure.domain.dim
    for key in ("x0", "x1"):
        if len(np.asarray(s[key], dtype=float).reshape(-1)) != dim:
            raise ConfigError(f"sampler {key} must have dimension {dim}")


# ---------------------------------------------------------------------------
# experiment models


@dataclass
class ExperimentModel:
    structure: ModelStructure
    observation_points: np.ndarray
    flux: Callable
    conductivity_for: Callable[[np.ndarray], ConductivityField]
    functional: Callable[[FieldSolution], float]
    functional_name: str
    oracle_forward: Callable | None
    pde_radius: float
    build_design: Callable[[dict], Design]


def _boundary_points(m: int, radius: float) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(m) / m
    return np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])


def _flux_cos4(x, y):
    return np.cos(4.0 * np.arctan2(y, x))


def _flux_quartic(x, y):
    return x**4 - 6.0 * x**2 * y**2 + y**4


def build_model(cfg: ExperimentConfig) -> ExperimentModel:
    if cfg.experiment == "conductivity":
        R = float(cfg.physics["inclusion_radius"])
        domain = Interval(0.0, 10.0)
        structure = ModelStructure(
            continuity_const=1.0,
            dissimilarity=lambda t, pts: np.abs(pts[:, 0] - t[0]),
            coercivity_lb=1.0,
            domain=domain,
            name="conductivity",
            meta={"inclusion_radius": R},
        )
        points = _boundary_points(cfg.m, 1.0)
        angles = np.arctan2(points[:, 1], points[:, 0])

        def oracle_fwd(theta):
            return exact_boundary_cos4(float(theta[0]), R, angles)

        return ExperimentModel(
            structure=structure,
            observation_points=points,
            flux=_flux_cos4,
            conductivity_for=lambda t: ConductivityField(
                1.0, (Inclusion((0.0, 0.0), R, float(t[0])),)
            ),
            functional=lambda sol: sol.grad_l2,
            functional_name="grad_l2",
            oracle_forward=oracle_fwd,
            pde_radius=1.0,
            build_design=lambda spec: build_design_dyadic_1d(0.0, 10.0, int(spec["level"])),
        )

    if cfg.experiment == "radius":
        rho = float(cfg.physics["contrast"])
        domain = Interval(0.0, 1.0)
        structure = ModelStructure(
            continuity_const=(2.0 * np.pi) ** 0.25 * rho,
            dissimilarity=lambda t, pts: np.abs(pts[:, 0] - t[0]) ** 0.25,
            coercivity_lb=1.0,
            domain=domain,
            name="radius",
            meta={"contrast": rho},
        )
        points = _boundary_points(cfg.m, 1.0)
        angles = np.arctan2(points[:, 1], points[:, 0])

        def oracle_fwd(theta):
            return exact_boundary_cos4(rho, float(theta[0]), angles)

        return ExperimentModel(
            structure=structure,
            observation_points=points,
            flux=_flux_cos4,
            conductivity_for=lambda t: ConductivityField(
                1.0, (Inclusion((0.0, 0.0), float(t[0]), rho),)
            ),
            functional=lambda sol: sol.grad_l4,
            functional_name="grad_l4",
            oracle_forward=oracle_fwd,
            pde_radius=1.0,
            build_design=lambda spec: build_design_dyadic_1d(0.0, 1.0, int(spec["level"])),
        )

    rho = float(cfg.physics["contrast"])
    r = float(cfg.physics["anomaly_radius"])
    pde_radius = float(cfg.physics["pde_radius"])
    domain = DiskDomain(pde_radius - r)

    def anomaly_g(t, pts):
        return rho * surrogate.symmetric_difference_area(t, pts, r) ** 0.25

    structure = ModelStructure(
        continuity_const=1.0,
        dissimilarity=anomaly_g,
        coercivity_lb=1.0,
        domain=domain,
        name="anomaly",
        meta={"contrast": rho, "anomaly_radius": r, "pde_radius": pde_radius},
    )

    def builder(spec: dict) -> Design:
        if spec["kind"] == "grid":
            return build_design_grid_2d(pde_radius, r, float(spec["spacing"]))
        return build_design_triangular_2d(pde_radius, r, float(spec["spacing"]))

    return ExperimentModel(
        structure=structure,
        observation_points=_boundary_points(cfg.m, pde_radius),
        flux=_flux_quartic,
        conductivity_for=lambda t: ConductivityField(
            1.0, (Inclusion((float(t[0]), float(t[1])), r, rho),)
        ),
        functional=lambda sol: sol.grad_l4,
        functional_name="grad_l4",
        oracle_forward=None,
        pde_radius=pde_radius,
        build_design=builder,
    )


def build_experiment_mesh(cfg: ExperimentConfig, model: ExperimentModel) -> Mesh:
    mesh = generate_disk_mesh(model.pde_radius, float(cfg.mesh["target_h"]))
    for _ in range(int(cfg.mesh.get("refinements", 0))):
        mesh = refine_uniform(mesh)
    return mesh


def fem_forward_solver(cfg: ExperimentConfig, model: ExperimentModel, mesh: Mesh) -> Callable:
    """theta -> FieldSolution by assembling and solving on the given mesh."""

    def solve(theta) -> FieldSolution:
        t = np.asarray(theta, dtype=float).reshape(-1)
        field = model.conductivity_for(t)
        K = fem.assemble_stiffness(mesh, field)
        load = fem.assemble_neumann_load(mesh, model.flux)
        return fem.solve_neumann(K, load, mesh)

    return solve


def attach_structure(store: SurrogateStore, cfg: ExperimentConfig) -> SurrogateStore:
    """Re-bind the experiment's dissimilarity function to a loaded store."""
    from dataclasses import replace

    model = build_model(cfg)
    return replace(store, structure=model.structure)


# ---------------------------------------------------------------------------
# artifact paths


def store_path(cfg: ExperimentConfig) -> Path:
    return cfg.output_dir / "store.bin"


def data_path(cfg: ExperimentConfig) -> Path:
    return cfg.output_dir / "data.txt"


def chain_path(cfg: ExperimentConfig, mode: str, seed: int) -> Path:
    return cfg.output_dir / f"chain_{mode}_seed{seed}.txt"


def _provenance(cfg: ExperimentConfig) -> str:
    return settings_hash(
        {
            "experiment": cfg.experiment,
            "mesh": cfg.mesh,
            "design": cfg.design,
            "m": cfg.m,
            "physics": cfg.physics,
        }
    )


# ---------------------------------------------------------------------------
# stages


def run_preprocess(cfg: ExperimentConfig, force: bool = False) -> dict:
    """Exact solves over the design; persists the surrogate store plus timings."""
    out = store_path(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if out.exists() and not force:
        logger.info("store %s exists; skipping preprocess", out)
        return {"store": str(out), "skipped": True}

    model = build_model(cfg)
    t0 = time.perf_counter()
    mesh = build_experiment_mesh(cfg, model)
    mesh_time = time.perf_counter() - t0

    solver = fem_forward_solver(cfg, model, mesh)
    design = model.build_design(cfg.design)

    def observe(sol: FieldSolution) -> np.ndarray:
        return fem.evaluate_at_points(sol, model.observation_points)

    t0 = time.perf_counter()
    try:
        store = surrogate.preprocess(
            design,
            solver,
            observe,
            model.functional,
            model.structure,
            k_default=cfg.k,
            eta=cfg.eta,
            provenance=_provenance(cfg),
        )
    except fem.SolverFailure as exc:
        raise fem.SolverFailure(f"design solve failed: {exc}") from exc
    solve_time = time.perf_counter() - t0

    surrogate.save_store(store, out)
    timing = {
        "mesh_seconds": mesh_time,
        "solve_seconds_total": solve_time,
        "solve_seconds_mean": solve_time / len(design),
        "n_design": len(design),
        "mesh_triangles": mesh.num_triangles,
    }
    (cfg.output_dir / "timing_preprocess.json").write_text(json.dumps(timing, indent=2, sort_keys=True))
    return {"store": str(out), "timing": timing, "skipped": False}


def _save_data(obs: mcmc.Observation, path: Path, meta: dict) -> None:
    with open(path, "w") as fh:
        head = " ".join(f"{k}={v}" for k, v in meta.items())
        fh.write(f"# {head}\n# x y value\n")
        for (x, y), v in zip(obs.points, obs.y):
            fh.write(f"{float(x)!r} {float(y)!r} {float(v)!r}\n")


def _load_data(path: Path) -> mcmc.Observation:
    with open(path) as fh:
        meta = dict(kv.split("=", 1) for kv in fh.readline().strip().lstrip("# ").split())
        fh.readline()
        rows = np.loadtxt(fh, ndmin=2)
    return mcmc.Observation(y=rows[:, 2], points=rows[:, :2], sigma=float(meta["sigma"]))


def ensure_data(cfg: ExperimentConfig, force: bool = False) -> mcmc.Observation:
    """Load the synthetic measurements, generating them (seeded) if absent.

    Experiments with a closed-form forward map use it to synthesize data;
    the anomaly experiment solves the PDE at the true parameter once.
    """
    path = data_path(cfg)
    if path.exists() and not force:
        return _load_data(path)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg)
    if model.oracle_forward is not None:
        forward = model.oracle_forward
        source = "oracle"
    else:
        mesh = build_experiment_mesh(cfg, model)
        solver = fem_forward_solver(cfg, model, mesh)

        def forward(theta):
            return fem.evaluate_at_points(solver(theta), model.observation_points)

        source = "fem"
    obs = mcmc.generate_synthetic_data(
        cfg.true_parameter, forward, model.observation_points, cfg.sigma, cfg.data_seed
    )
    _save_data(obs, path, {"sigma": repr(cfg.sigma), "seed": cfg.data_seed, "forward": source})
    return obs


def _reference_forward(cfg: ExperimentConfig, model: ExperimentModel) -> Callable:
    if cfg.reference == "oracle":
        return model.oracle_forward
    mesh = build_experiment_mesh(cfg, model)
    solver = fem_forward_solver(cfg, model, mesh)

    def forward(theta):
        return fem.evaluate_at_points(solver(theta), model.observation_points)

    return forward


def _run_sampler(cfg: ExperimentConfig, forward: Callable, obs: mcmc.Observation, seed: int, n_iter: int) -> mcmc.Chain:
    model = build_model(cfg)
    spec = mcmc.PosteriorSpec(forward=forward, prior=model.structure.domain, observation=obs)
    s = cfg.sampler
    if s["type"] == "twalk":
        chain = mcmc.twalk_sample(spec, s["x0"], s["x1"], n_iter, seed)
    else:
        chain = mcmc.rwm_sample(spec, s["x0"], n_iter, float(s["step_scale"]), seed)
    try:
        chain.iat = mcmc.iat(chain, burn_in=min(int(s["burn_in"]), len(chain.samples) - 1000))
    except (mcmc.ChainTooShort, mcmc.DegenerateChain):
        chain.iat = None
    chain.meta["burn_in"] = int(s["burn_in"])
    return chain


def run_sampling(cfg: ExperimentConfig, force: bool = False) -> dict:
    """Sample the surrogate posterior (and the configured reference posterior).

    The surrogate store must exist.  A ``fem`` reference runs the full solver
    inside the chain and is clamped to ``fem_in_loop_max`` iterations.
    """
    spath = store_path(cfg)
    if not spath.exists():
        raise MissingArtifact(f"surrogate store missing: {spath}; run preprocess first")
    raw_store, _ = surrogate.load_store(spath)
    store = attach_structure(raw_store, cfg)
    obs = ensure_data(cfg, force=False)

    s = cfg.sampler
    produced: list[str] = []
    timing: dict = {"iterations": int(s["iterations"])}

    t0 = time.perf_counter()
    for seed in s["seeds"]:
        path = chain_path(cfg, "surrogate", seed)
        if path.exists() and not force:
            produced.append(str(path))
            continue
        chain = _run_sampler(cfg, surrogate_forward(store), obs, int(seed), int(s["iterations"]))
        mcmc.save_chain(chain, path, burn_in=int(s["burn_in"]))
        produced.append(str(path))
    timing["surrogate_sampling_seconds"] = time.perf_counter() - t0

    # per-evaluation surrogate cost, measured in-run
    rng = np.random.default_rng(0)
    thetas = store.structure.domain.sample(rng, 200)
    t0 = time.perf_counter()
    for t in thetas:
        evaluate_surrogate(t, store)
    timing["surrogate_eval_seconds_mean"] = (time.perf_counter() - t0) / len(thetas)

    if cfg.reference != "none":
        model = build_model(cfg)
        n_iter = int(s["iterations"])
        if cfg.reference == "fem" and n_iter > cfg.fem_in_loop_max:
            logger.warning(
                "fem-in-loop reference clamped from %d to %d iterations", n_iter, cfg.fem_in_loop_max
            )
            n_iter = cfg.fem_in_loop_max
        t0 = time.perf_counter()
        for seed in s["seeds"]:
            path = chain_path(cfg, cfg.reference, seed)
            if path.exists() and not force:
                continue
            chain = _run_sampler(cfg, _reference_forward(cfg, model), obs, int(seed), n_iter)
            mcmc.save_chain(chain, path, burn_in=min(int(s["burn_in"]), n_iter // 2))
            produced.append(str(path))
        timing["reference_sampling_seconds"] = time.perf_counter() - t0

    tpath = cfg.output_dir / "timing_preprocess.json"
    if tpath.exists():
        pre = json.loads(tpath.read_text())
        mean_solve = pre.get("solve_seconds_mean")
        if mean_solve:
            timing["fem_solve_seconds_mean"] = mean_solve
            timing["surrogate_speedup"] = mean_solve / timing["surrogate_eval_seconds_mean"]
    (cfg.output_dir / "timing_sampling.json").write_text(json.dumps(timing, indent=2, sort_keys=True))
    return {"chains": produced, "timing": timing}


# ---------------------------------------------------------------------------
# analysis


def quantiles_linear(samples: np.ndarray, qs) -> np.ndarray:
    """Linear-interpolation quantiles (the common 'type 7' definition)."""
    return np.quantile(np.asarray(samples, dtype=float), np.asarray(qs), method="linear")


def _domain_support(cfg: ExperimentConfig) -> tuple[float, float]:
    dom = build_model(cfg).structure.domain
    if isinstance(dom, Interval):
        return (dom.lo, dom.hi)
    return (-dom.radius, dom.radius)


def discover_chains(cfg: ExperimentConfig) -> dict[str, mcmc.Chain]:
    chains = {}
    for path in sorted(cfg.output_dir.glob("chain_*.txt")):
        chains[path.stem.replace("chain_", "")] = mcmc.load_chain(path)
    return chains


def run_analysis(cfg: ExperimentConfig, chains: dict[str, mcmc.Chain] | None = None) -> dict:
    """Histograms, quantiles, pairwise TV, error-bound and timing summaries.

    Numbers in ``report.json`` depend only on the chain files and seeds, so
    reruns are reproducible; wall-clock readings live in the timing table.
    """
    if chains is None:
        chains = discover_chains(cfg)
    if not chains:
        raise MissingArtifact(f"no chains found under {cfg.output_dir}; run sampling first")

    adir = cfg.output_dir / "analysis"
    adir.mkdir(parents=True, exist_ok=True)
    bins = int(cfg.analysis["bins"])
    burn = int(cfg.sampler["burn_in"])
    qs = [float(q) for q in cfg.analysis["quantiles"]]
    support = _domain_support(cfg)

    report: dict = {"experiment": cfg.experiment, "bins": bins, "burn_in": burn, "chains": {}}

    for name, chain in chains.items():
        b = min(chain.meta.get("burn_in", burn), len(chain.samples) - 2)
        post = chain.samples[b:]
        entry: dict = {
            "n_samples": int(len(chain.samples) - 1),
            "acceptance_rate": float(chain.acceptance_rate),
            "iat": None if chain.iat is None else float(chain.iat),
            "quantiles": {},
        }
        for j in range(post.shape[1]):
            entry["quantiles"][f"theta{j}"] = [float(v) for v in quantiles_linear(post[:, j], qs)]
            hist, edges = np.histogram(post[:, j], bins=bins, range=support)
            mass = hist / hist.sum()
            with open(adir / f"hist_{name}_theta{j}.csv", "w") as fh:
                fh.write("edge_lo,edge_hi,mass\n")
                for lo, hi, v in zip(edges[:-1], edges[1:], mass):
                    fh.write(f"{float(lo)!r},{float(hi)!r},{float(v)!r}\n")
        report["chains"][name] = entry

    names = sorted(chains)
    tv: dict = {}
    for i, a in enumerate(names):
        for b_ in names[i + 1 :]:
            ca, cb = chains[a], chains[b_]
            val = mcmc.histogram_tv(
                ca.samples[ca.meta.get("burn_in", burn):],
                cb.samples[cb.meta.get("burn_in", burn):],
                bins=bins,
                support=support,
            )
            tv[f"{a}|{b_}"] = float(val)
    report["tv_table"] = tv
    with open(adir / "tv_table.csv", "w") as fh:
        fh.write("chain_a,chain_b,tv\n")
        for key, val in sorted(tv.items()):
            a, b_ = key.split("|")
            fh.write(f"{a},{b_},{val!r}\n")

    # error-bound summary over the surrogate chains' retained samples
    spath = store_path(cfg)
    if spath.exists():
        store = attach_structure(surrogate.load_store(spath)[0], cfg)
        eps_summary = {}
        for name, chain in chains.items():
            if not name.startswith("surrogate"):
                continue
            post = chain.samples[chain.meta.get("burn_in", burn):]
            step = max(1, len(post) // 2000)
            eps = np.array([error_bound(t, store).weak_residual for t in post[::step]])
            eps_summary[name] = {
                "mean": float(eps.mean()),
                "max": float(eps.max()),
                "q95": float(np.quantile(eps, 0.95)),
            }
        report["error_bound"] = eps_summary
        report["store"] = {"n": store.n, "m": store.m, "provenance": store.provenance}

    # reconstruction overlay for the 2D experiment: IAT-spaced recent samples
    if cfg.experiment == "anomaly":
        name = next((n for n in names if n.startswith("surrogate")), names[0])
        chain = chains[name]
        post = chain.samples[chain.meta.get("burn_in", burn):]
        tau = chain.iat if chain.iat else mcmc.iat(chain, burn_in=burn)
        spacing = max(1, int(np.ceil(tau)))
        count = int(cfg.analysis["reconstruction_samples"])
        picks = post[::-spacing][:count][::-1]
        r = float(cfg.physics["anomaly_radius"])
        with open(adir / "reconstruction.csv", "w") as fh:
            fh.write("c1,c2,radius\n")
            for c1, c2 in picks:
                fh.write(f"{float(c1)!r},{float(c2)!r},{r!r}\n")
        report["reconstruction"] = {"chain": name, "iat_spacing": spacing, "disks": len(picks)}

    timing_rows = []
    for stage in ("preprocess", "sampling"):
        tpath = cfg.output_dir / f"timing_{stage}.json"
        if tpath.exists():
            for key, val in sorted(json.loads(tpath.read_text()).items()):
                timing_rows.append((stage, key, val))
    with open(adir / "timing_table.csv", "w") as fh:
        fh.write("stage,key,value\n")
        for stage, key, val in timing_rows:
            fh.write(f"{stage},{key},{val}\n")

    (adir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    (adir / "report.txt").write_text(_render_report(report))
    return report


def _render_report(report: dict) -> str:
    lines = [f"experiment: {report['experiment']}", ""]
    lines.append(f"{'chain':<24}{'accept':>8}{'iat':>8}  quantiles (per parameter)")
    for name, entry in sorted(report["chains"].items()):
        iat_s = f"{entry['iat']:.1f}" if entry["iat"] else "-"
        qs = "; ".join(
            f"{p}: " + ", ".join(f"{v:.4g}" for v in vals) for p, vals in entry["quantiles"].items()
        )
        lines.append(f"{name:<24}{entry['acceptance_rate']:>8.3f}{iat_s:>8}  {qs}")
    if report.get("tv_table"):
        lines.append("")
        lines.append("pairwise TV distances:")
        for key, val in sorted(report["tv_table"].items()):
            a, b = key.split("|")
            lines.append(f"  {a:<22} vs {b:<22} {val:.4f}")
    if report.get("error_bound"):
        lines.append("")
        lines.append("weak-residual bound over retained samples:")
        for name, s in sorted(report["error_bound"].items()):
            lines.append(f"  {name:<22} mean {s['mean']:.4g}  q95 {s['q95']:.4g}  max {s['max']:.4g}")
    lines.append("")
    return "\n".join(lines)


def run_full(cfg: ExperimentConfig, force: bool = False) -> dict:
    """Compose the three stages; existing artifacts are reused unless ``force``."""
    pre = run_preprocess(cfg, force=force)
    samp = run_sampling(cfg, force=force)
    rep = run_analysis(cfg)
    return {"preprocess": pre, "sampling": samp, "report": rep}


def verify_design(cfg: ExperimentConfig, eps: float | None = None) -> surrogate.DesignVerification:
    """Sweep the admissible domain and check the k-neighbor coverage of the design."""
    model = build_model(cfg)
    design = model.build_design(cfg.design)
    dom = model.structure.domain
    if isinstance(dom, Interval):
        samples = dom.grid(10_001)
    else:
        samples = dom.grid(121)
    f_max = 1.0
    spath = store_path(cfg)
    if spath.exists():
        f_max = float(np.max(surrogate.load_store(spath)[0].f_values))
    if eps is None:
        eps = _expected_eps(cfg, design)
    return verify_design_approximation(
        design,
        samples,
        model.structure.dissimilarity,
        f_max=f_max,
        C=model.structure.continuity_const,
        k=cfg.k,
        eps=eps,
    )


def _expected_eps(cfg: ExperimentConfig, design: Design) -> float:
    """The lattice's own k-neighbor coverage guarantee (used as default target)."""
    if cfg.design["kind"] == "dyadic":
        span = design.points[:, 0].max() - design.points[:, 0].min()
        spacing = span / (len(design) - 1)
        return spacing if cfg.experiment == "conductivity" else spacing**0.25
    # lattice: worst point sits within one cell diagonal of its k=3 neighbors
    rho = float(cfg.physics["contrast"])
    r = float(cfg.physics["anomaly_radius"])
    s = float(cfg.design["spacing"])
    d_worst = s * (1.0 if cfg.design["kind"] == "grid" else 1.0 / np.sqrt(3.0)) * np.sqrt(2.0)
    return rho * float(surrogate.symmetric_difference_area([0.0, 0.0], [d_worst, 0.0], r)) ** 0.25
