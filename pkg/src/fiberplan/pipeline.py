"""Pipeline orchestration: simplify -> partition -> solve -> merge -> lift.

Costs and validity are always measured against the original problem, and all
randomness flows through seeds derived from the master seed, so a report is
reproducible regardless of scheduling or parallelism.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

from .core import Problem, SteinerTree, is_steiner_tree, tree_cost, validate_problem
from .partition import (
    Partition,
    educated_guess_k,
    eigengap_k,
    greedy_modularity_partition,
    merge_center_of_mass,
    merge_sph,
    random_walk_laplacian_spectrum,
    spectral_partition,
    split_subproblems,
    voronoi_partition,
)
from .physarum import PhysarumParams, solve_physarum
from .qubo import QuboBuildParams, run_qubo
from .seeds import derive_seed
from .simplify import (
    GngParams,
    SimplifiedProblem,
    TriangleEaParams,
    gng_simplify,
    identity_simplification,
    lift_solution,
    physarum_simplify,
    triangle_simplify,
)
from .solvers import EaParams, SaParams, solve_baseline, solve_ea, solve_exact, solve_sa

__all__ = [
    "SIMPLIFIERS",
    "PARTITIONERS",
    "SOLVERS",
    "MERGERS",
    "PipelineConfig",
    "PipelineReport",
    "validate_config",
    "run_pipeline",
    "run_benchmark",
    "full_sweep_configs",
]

SIMPLIFIERS = ("none", "triangle", "gng", "physarum")
PARTITIONERS = ("none", "gm", "sc", "voronoi")
SOLVERS = ("baseline", "ea", "sa", "physarum", "qubo", "exact")
MERGERS = ("sph", "com")


@dataclass(frozen=True)
class PipelineConfig:
    problem_path: str | None = None
    image_path: str | None = None
    simplifier: str = "none"
    partitioner: str = "none"
    solver: str = "baseline"
    merger: str | None = None
    k: int | str = "guess"
    seed: int = 0
    parallelism: int = 1
    pixel_connectivity: int = 4
    spectral_eigs: str = "smallest"
    physarum_pressure_mode: str = "injection"
    simplifier_params: dict = field(default_factory=dict)
    partitioner_params: dict = field(default_factory=dict)
    solver_params: dict = field(default_factory=dict)
    merger_params: dict = field(default_factory=dict)


@dataclass
class PipelineReport:
    problem: str
    simplifier: str
    partitioner: str
    solver: str
    merger: str
    seed: int
    cost: float = math.nan
    valid: bool = False
    wall_ms: float = 0.0
    stage_ms: dict = field(default_factory=dict)
    cluster_count: int | None = None
    simplified_nodes: int | None = None
    qubo_violations: tuple = ()
    qubo_energy: float | None = None
    tree: SteinerTree | None = None
    error: str | None = None


def validate_config(config: PipelineConfig) -> list[str]:
    problems = []
    if config.simplifier not in SIMPLIFIERS:
        problems.append(f"unknown simplifier {config.simplifier!r}")
    if config.partitioner not in PARTITIONERS:
        problems.append(f"unknown partitioner {config.partitioner!r}")
    if config.solver not in SOLVERS:
        problems.append(f"unknown solver {config.solver!r}")
    if config.partitioner != "none":
        if config.merger not in MERGERS:
            problems.append("partitioned runs require a merger (sph or com)")
    elif config.merger not in (None, "sph", "com"):
        problems.append(f"unknown merger {config.merger!r}")
    if not (isinstance(config.k, int) or config.k in ("eigengap", "guess")):
        problems.append(f"k must be an int, 'eigengap' or 'guess', got {config.k!r}")
    if config.parallelism < 1:
        problems.append("parallelism must be >= 1")
    if config.pixel_connectivity not in (4, 8):
        problems.append("pixel connectivity must be 4 or 8")
    if config.spectral_eigs not in ("smallest", "largest"):
        problems.append(f"unknown spectral eigs mode {config.spectral_eigs!r}")
    if config.physarum_pressure_mode not in ("injection", "dirichlet"):
        problems.append(f"unknown pressure mode {config.physarum_pressure_mode!r}")
    return problems


def _load_problem(config: PipelineConfig) -> Problem:
    from . import io as fio

    if config.problem_path:
        with open(config.problem_path, "rb") as fh:
            return fio.load_problem(fh.read())
    if config.image_path:
        from .io import PixelImportRules

        rules = PixelImportRules(connectivity=config.pixel_connectivity)
        with open(config.image_path, "rb") as fh:
            return fio.import_pixel_image(fh.read(), rules,
                                          name=config.image_path)
    raise ValueError("config provides neither a problem file nor an image")


def _simplify(p: Problem, config: PipelineConfig, seed: int) -> SimplifiedProblem:
    params = dict(config.simplifier_params)
    if config.simplifier == "none":
        return identity_simplification(p)
    if config.simplifier == "triangle":
        ea_fields = {k: params.pop(k) for k in
                     ("population", "elitism", "tournament", "mutation_rate",
                      "generations") if k in params}
        return triangle_simplify(p, ea_params=TriangleEaParams(**ea_fields),
                                 seed=seed, **params)
    if config.simplifier == "gng":
        return gng_simplify(p, GngParams(**params), seed=seed)
    keep = params.pop("keep_threshold", 0.01)
    pparams = PhysarumParams(seed=seed,
                             pressure_mode=config.physarum_pressure_mode,
                             **params)
    return physarum_simplify(p, pparams, keep_threshold=keep)


def _resolve_k(p: Problem, config: PipelineConfig, upper: int) -> int:
    if isinstance(config.k, int):
        return config.k
    if config.k == "eigengap":
        vals, _ = random_walk_laplacian_spectrum(p)
        k = eigengap_k(vals)
    else:
        k = educated_guess_k(len(p.terminals))
    return max(1, min(k, upper))


def _partition(p: Problem, config: PipelineConfig, seed: int) -> Partition:
    params = dict(config.partitioner_params)
    if config.partitioner == "gm":
        return greedy_modularity_partition(p)
    if config.partitioner == "sc":
        k = config.k if isinstance(config.k, int) else config.k
        return spectral_partition(p, k, eig_mode=config.spectral_eigs,
                                  seed=seed, **params)
    k = _resolve_k(p, config, upper=len(p.terminals))
    return voronoi_partition(p, k_target=k, **params)


def _solve_one(p: Problem, config: PipelineConfig, seed: int,
               collect: dict) -> SteinerTree:
    params = dict(config.solver_params)
    if config.solver == "baseline":
        return solve_baseline(p)
    if config.solver == "exact":
        return solve_exact(p)
    if config.solver == "ea":
        return solve_ea(p, EaParams(seed=seed, **params))
    if config.solver == "sa":
        return solve_sa(p, SaParams(seed=seed, **params))
    if config.solver == "physarum":
        return solve_physarum(p, PhysarumParams(
            seed=seed, pressure_mode=config.physarum_pressure_mode, **params))
    build_fields = {k: params.pop(k) for k in ("max_depth", "penalty_a", "cost_b")
                    if k in params}
    outcome = run_qubo(p, QuboBuildParams(**build_fields), seed=seed, **params)
    collect.setdefault("violations", []).extend(outcome.violations)
    collect.setdefault("energies", []).append(outcome.energy)
    return outcome.tree


def run_pipeline(config: PipelineConfig, problem: Problem | None = None
                 ) -> PipelineReport:
    """Execute all stages and report cost/validity on the original problem."""
    report = PipelineReport(
        problem="", simplifier=config.simplifier, partitioner=config.partitioner,
        solver=config.solver,
        merger=config.merger if config.partitioner != "none" else "none",
        seed=config.seed)
    t_start = time.perf_counter()
    qubo_info: dict = {}
    try:
        stage = "load"
        p = problem if problem is not None else _load_problem(config)
        report.problem = p.name or "problem"
        violations = validate_problem(p)
        if violations:
            raise ValueError(f"invalid problem: {'; '.join(violations)}")

        stage = "simplify"
        t0 = time.perf_counter()
        sp = _simplify(p, config, derive_seed(config.seed, "simplify"))
        report.stage_ms["simplify"] = (time.perf_counter() - t0) * 1e3
        report.simplified_nodes = sp.problem.n_nodes

        stage = "partition"
        t0 = time.perf_counter()
        if config.partitioner == "none":
            partition = None
            subs = None
        else:
            partition = _partition(sp.problem, config,
                                   derive_seed(config.seed, "partition"))
            subs = split_subproblems(sp.problem, partition)
            report.cluster_count = partition.k
        report.stage_ms["partition"] = (time.perf_counter() - t0) * 1e3

        stage = "solve"
        t0 = time.perf_counter()
        if subs is None:
            tree_on_sp = _solve_one(sp.problem, config,
                                    derive_seed(config.seed, "solve", 0),
                                    qubo_info)
        else:
            def solve_indexed(i_sub):
                i, sub = i_sub
                local = _solve_one(sub.problem, config,
                                   derive_seed(config.seed, "solve", i),
                                   qubo_info)
                back = sub.back_map
                edges = tuple(sorted((min(back[u], back[v]), max(back[u], back[v]))
                                     for u, v in local.edges))
                nodes = frozenset(back[n] for n in local.nodes)
                return SteinerTree(edges=edges, nodes=nodes, cost=local.cost)

            if config.parallelism > 1:
                with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                    trees = list(pool.map(solve_indexed, enumerate(subs)))
            else:
                trees = [solve_indexed(pair) for pair in enumerate(subs)]
        report.stage_ms["solve"] = (time.perf_counter() - t0) * 1e3

        stage = "merge"
        t0 = time.perf_counter()
        if subs is not None:
            if config.merger == "sph":
                tree_on_sp = merge_sph(sp.problem, trees, **config.merger_params)
            else:
                tree_on_sp = merge_center_of_mass(sp.problem, trees,
                                                  **config.merger_params)
        report.stage_ms["merge"] = (time.perf_counter() - t0) * 1e3

        stage = "lift"
        t0 = time.perf_counter()
        final = lift_solution(sp, tree_on_sp)
        report.stage_ms["lift"] = (time.perf_counter() - t0) * 1e3

        stage = "validate"
        ok, tree_violations = is_steiner_tree(p, final.edges)
        report.valid = ok
        report.cost = tree_cost(p, final.edges)
        report.tree = final
        if not ok:
            report.error = f"validate: {'; '.join(tree_violations)}"
        if qubo_info:
            report.qubo_violations = tuple(qubo_info.get("violations", ()))
            energies = qubo_info.get("energies", [])
            report.qubo_energy = sum(energies) if energies else None
    except Exception as exc:  # stage failures become diagnostics, not crashes
        report.valid = False
        report.error = f"{stage}: {exc}"
    report.wall_ms = (time.perf_counter() - t_start) * 1e3
    return report


def _is_pure_baseline(config: PipelineConfig) -> bool:
    return (config.solver == "baseline" and config.simplifier == "none"
            and config.partitioner == "none")


def run_benchmark(configs: Sequence[PipelineConfig],
                  problems: Sequence[Problem], repeats: int = 1
                  ) -> tuple[list[PipelineReport], dict]:
    """Cross-product sweep with per-run derived seeds and a best-per-problem
    summary (improvement is relative to the plain baseline configuration)."""
    reports: list[PipelineReport] = []
    summary: dict[str, dict] = {}
    for pi, problem in enumerate(problems):
        name = problem.name or f"problem-{pi}"
        rows: list[PipelineReport] = []
        for ci, config in enumerate(configs):
            for rep in range(repeats):
                run_cfg = replace(config,
                                  seed=derive_seed(config.seed, "bench", pi, ci, rep))
                report = run_pipeline(run_cfg, problem=problem)
                report.problem = name
                rows.append(report)
        reports.extend(rows)

        baseline_rows = [r for i, r in enumerate(rows)
                         if _is_pure_baseline(configs[i // repeats]) and r.valid]
        if baseline_rows:
            baseline_cost = min(r.cost for r in baseline_rows)
        else:
            baseline_cost = run_pipeline(
                PipelineConfig(solver="baseline"), problem=problem).cost
        valid_rows = [r for r in rows if r.valid]
        best = min(valid_rows, key=lambda r: r.cost) if valid_rows else None
        combo_baseline = [r for i, r in enumerate(rows)
                          if configs[i // repeats].solver == "baseline"
                          and not _is_pure_baseline(configs[i // repeats])
                          and r.valid]
        summary[name] = {
            "baseline_cost": baseline_cost,
            "best_cost": best.cost if best else math.nan,
            "best_config": {
                "simplifier": best.simplifier, "partitioner": best.partitioner,
                "solver": best.solver, "merger": best.merger,
            } if best else None,
            "improvement_pct": (100.0 * (best.cost - baseline_cost) / baseline_cost
                                if best and baseline_cost else math.nan),
            "baseline_combinations_increase_cost": (
                all(r.cost >= baseline_cost - 1e-12 for r in combo_baseline)
                if combo_baseline else None),
        }
    return reports, summary


def full_sweep_configs(seed: int = 0, merger_required_only: bool = False,
                       simplifier_params: dict | None = None,
                       partitioner_params: dict | None = None,
                       solver_params: dict | None = None) -> list[PipelineConfig]:
    """Every simplifier x partitioner x solver x merger combination."""
    configs = []
    for simp in SIMPLIFIERS:
        for part in PARTITIONERS:
            for solver in ("baseline", "ea", "sa", "physarum", "qubo"):
                mergers: tuple = MERGERS if part != "none" else ((None,) if
                                                                 merger_required_only
                                                                 else MERGERS)
                for merger in mergers:
                    configs.append(PipelineConfig(
                        simplifier=simp, partitioner=part, solver=solver,
                        merger=merger if part != "none" else merger,
                        seed=seed,
                        simplifier_params=dict((simplifier_params or {}).get(simp, {})),
                        partitioner_params=dict((partitioner_params or {}).get(part, {})),
                        solver_params=dict((solver_params or {}).get(solver, {})),
                    ))
    return configs
