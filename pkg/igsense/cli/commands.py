"""
Comandos da CLI: solve, sensitivity, sweep, gsa e verify.

Cada comando recebe um RunConfig já validado, escreve seus CSVs no
diretório de saída e devolve um CommandResult. Erros numéricos sobem como
exceções de igsense.core.exceptions e são traduzidos em código de saída
por igsense.main.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from igsense.cli.output import write_csv
from igsense.core.config import settings
from igsense.core.exceptions import ConfigurationError
from igsense.models.schemas import RunConfig
from igsense.services.bayes import information_gain_at, trace_term
from igsense.services.factory import ProblemSetup, base_model, build_problem
from igsense.services.forward import ThetaVector
from igsense.services.gsa import PerturbationMap, dgsm_bound, remap_gradient
from igsense.services.hdsa import SensitivityReport, info_gain_gradient
from igsense.services.verification import run_checks

logger = logging.getLogger(__name__)


@dataclass
class CommandResult:
    """Arquivos escritos e se o comando terminou com sucesso."""

    files: list[Path] = field(default_factory=list)
    passed: bool = True


def output_dir(config: RunConfig) -> Path:
    return Path(config.output.directory or settings.output_dir)


def _workers(threads: int | None, work: int) -> int:
    return max(1, min(threads or settings.threads, work))


def _banner(name: str, setup: ProblemSetup) -> None:
    logger.info("=" * 50)
    logger.info(f"▶ {name}: modelo {setup.config.model.kind}")
    logger.info(f"   θ = {dict(zip(setup.theta.names, setup.theta.values.tolist()))}")
    logger.info(f"   posto r = {setup.rank}, oversample = {setup.config.spectrum.oversample}")
    logger.info("=" * 50)


def _gradient(setup: ProblemSetup, report: SensitivityReport) -> tuple[np.ndarray, np.ndarray]:
    """Gradientes no sistema pedido em [output] (absoluto ou relativo)."""
    if not setup.config.output.relative:
        return report.grad_phi_ig, report.grad_phi_ig_bar
    pmap = PerturbationMap(setup.theta, setup.config.theta.alpha)
    return remap_gradient(pmap, report.grad_phi_ig), remap_gradient(pmap, report.grad_phi_ig_bar)


# ==========================================
# solve
# ==========================================

def cmd_solve(config: RunConfig, threads: int | None = None) -> CommandResult:
    """MAP, espectro retido e resumo (Φ_IG, Φ̄_IG, contagem de solves)."""
    setup = build_problem(config)
    _banner("solve", setup)
    ip, theta = setup.ip, setup.theta
    phi, phi_bar, spec, m_post = information_gain_at(
        ip,
        theta,
        setup.rank,
        oversample=config.spectrum.oversample,
        seed=config.spectrum.seed,
        strict=config.spectrum.strict,
    )
    logger.info(f"Φ_IG = {phi:.10g}, Φ̄_IG = {phi_bar:.10g}")

    out = output_dir(config)
    map_frame = pd.DataFrame({"index": np.arange(m_post.shape[0])})
    if config.model.kind == "elliptic":
        nodes = base_model(ip.model).mesh.nodes
        map_frame["x"], map_frame["y"] = nodes[:, 0], nodes[:, 1]
    map_frame["m_post"] = m_post
    files = [
        write_csv(map_frame, out / "map.csv"),
        write_csv(
            [{"i": i + 1, "gamma": g} for i, g in enumerate(spec.gammas)], out / "spectrum.csv", ["i", "gamma"]
        ),
    ]
    summary = {
        "phi_ig": phi,
        "phi_ig_bar": phi_bar,
        "rank": spec.rank,
        "requested_rank": spec.requested_rank,
        "truncation_ratio": spec.truncation_ratio,
        "trace_term": trace_term(spec),
        "rank_deficient": int(spec.rank_deficient),
        **ip.counter.as_dict(),
    }
    files.append(write_csv([summary], out / "summary.csv", list(summary)))
    return CommandResult(files)


# ==========================================
# sensitivity
# ==========================================

def cmd_sensitivity(config: RunConfig, threads: int | None = None) -> CommandResult:
    """Gradiente local de Φ_IG e Φ̄_IG em θ."""
    setup = build_problem(config)
    _banner("sensitivity", setup)
    report = info_gain_gradient(
        setup.ip,
        setup.theta,
        setup.rank,
        seed=config.spectrum.seed,
        oversample=config.spectrum.oversample,
        strict=config.spectrum.strict,
    )
    grad, grad_bar = _gradient(setup, report)

    ranking = sorted(zip(setup.theta.names, grad), key=lambda item: -abs(item[1]))
    for name, value in ranking:
        logger.info(f"   ∂Φ_IG/∂{name} = {value:+.6e}")
    counts = report.algorithm_counts
    logger.info(f"Solves (MAP + sensibilidade): {counts.as_dict()}")

    rows = [
        {"param": name, "value": value, "d_phi_ig": g, "d_phi_ig_bar": gb}
        for name, value, g, gb in zip(setup.theta.names, setup.theta.values, grad, grad_bar)
    ]
    path = write_csv(rows, output_dir(config) / "sensitivity.csv", ["param", "value", "d_phi_ig", "d_phi_ig_bar"])
    return CommandResult([path])


# ==========================================
# sweep
# ==========================================

def sweep_points(config: RunConfig, theta: ThetaVector) -> list[ThetaVector]:
    """Pontos da grade em ordem 'ij' (o último parâmetro varia mais rápido)."""
    sweep = config.sweep
    if not sweep.params:
        raise ConfigurationError("sweep exige a seção [sweep] com ao menos um parâmetro")
    axes = [np.linspace(lo, hi, num) for lo, hi, num in zip(sweep.lo, sweep.hi, sweep.num)]
    grids = np.meshgrid(*axes, indexing="ij")
    indices = [theta.index(name) for name in sweep.params]
    points = []
    for coords in zip(*(g.ravel() for g in grids)):
        values = theta.values.copy()
        values[indices] = coords
        points.append(theta.with_values(values))
    return points


def cmd_sweep(config: RunConfig, threads: int | None = None) -> CommandResult:
    """Φ_IG, Φ̄_IG e gradientes numa grade de até 2 parâmetros."""
    setup = build_problem(config)
    _banner("sweep", setup)
    points = sweep_points(config, setup.theta)
    workers = _workers(threads, len(points))
    logger.info(f"Sweep com {len(points)} pontos em {workers} worker(s)")

    def evaluate(theta: ThetaVector) -> SensitivityReport:
        return info_gain_gradient(
            setup.fresh_problem(),
            theta,
            setup.rank,
            seed=config.spectrum.seed,
            oversample=config.spectrum.oversample,
            strict=config.spectrum.strict,
        )

    with ThreadPoolExecutor(max_workers=workers) as pool:
        reports = list(pool.map(evaluate, points))

    names = setup.theta.names
    columns = [
        *config.sweep.params,
        "phi_ig",
        "phi_ig_bar",
        *(f"d_phi_ig_{name}" for name in names),
        *(f"d_phi_ig_bar_{name}" for name in names),
    ]
    rows = []
    for theta, report in zip(points, reports):
        row = {name: theta.values[theta.index(name)] for name in config.sweep.params}
        row["phi_ig"] = report.phi_ig
        row["phi_ig_bar"] = report.phi_ig_bar
        row.update({f"d_phi_ig_{n}": g for n, g in zip(names, report.grad_phi_ig)})
        row.update({f"d_phi_ig_bar_{n}": g for n, g in zip(names, report.grad_phi_ig_bar)})
        rows.append(row)
    return CommandResult([write_csv(rows, output_dir(config) / "sweep.csv", columns)])


# ==========================================
# gsa
# ==========================================

def cmd_gsa(config: RunConfig, threads: int | None = None) -> CommandResult:
    """Limitantes DGSM dos índices de Sobol totais de Φ_IG."""
    setup = build_problem(config)
    _banner("gsa", setup)
    gsa = config.gsa
    pmap = setup.perturbation_map()
    report = dgsm_bound(
        setup.fresh_problem,
        pmap,
        gsa.n_samples,
        gsa.seed,
        rank=setup.rank,
        oversample=config.spectrum.oversample,
        spectrum_seed=config.spectrum.seed,
        threads=_workers(threads, gsa.n_samples),
        tolerate_failures=gsa.tolerate_failures,
        batches=gsa.batches,
        strict=config.spectrum.strict,
    )
    if report.flagged:
        logger.warning(f"{len(report.skipped)} amostra(s) descartada(s): {list(report.skipped)}")

    rows = [
        {
            "parameter": name,
            "dgsm": d,
            "variance": report.variance,
            "poincare": c,
            "bound": b,
            "standard_error": se,
        }
        for name, d, c, b, se in zip(report.names, report.dgsm, report.poincare, report.bounds, report.standard_errors)
    ]
    columns = ["parameter", "dgsm", "variance", "poincare", "bound", "standard_error"]
    return CommandResult([write_csv(rows, output_dir(config) / "gsa.csv", columns)])


# ==========================================
# verify
# ==========================================

def cmd_verify(config: RunConfig, threads: int | None = None) -> CommandResult:
    """Roda a suíte de verificação; passed=False se alguma verificação falhar."""
    logger.info("=" * 50)
    logger.info(f"▶ verify: malhas {config.verify.mesh_sizes}, h = {config.verify.fd_h}")
    logger.info("=" * 50)
    results = run_checks(config)
    rows = [
        {"check_name": r.name, "max_error": r.max_error, "tolerance": r.tolerance, "pass": r.passed}
        for r in results
    ]
    path = write_csv(rows, output_dir(config) / "verify.csv", ["check_name", "max_error", "tolerance", "pass"])
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"❌ {len(failed)} verificação(ões) falharam: {failed}")
    else:
        logger.info(f"✅ {len(results)} verificações passaram")
    return CommandResult([path], passed=not failed)


COMMANDS = {
    "solve": cmd_solve,
    "sensitivity": cmd_sensitivity,
    "sweep": cmd_sweep,
    "gsa": cmd_gsa,
    "verify": cmd_verify,
}
