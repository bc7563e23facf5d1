"""
Suíte de verificação usada por `igsense verify`.

Cada verificação devolve um ou mais CheckResult (nome, erro máximo,
tolerância). Os problemas de teste são montados aqui mesmo a partir das
seções [noise], [prior], [spectrum] e [verify] da configuração.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from igsense.models.schemas import RunConfig
from igsense.services.bayes import information_gain, information_gain_at, map_point
from igsense.services.factory import ProblemSetup, build_problem
from igsense.services.gsa import PerturbationMap, dgsm_bound
from igsense.services.hdsa import build_workspace, info_gain_gradient, verify_multiplier
from igsense.services.oracle import (
    DenseProblem,
    dense_kld,
    fd_errors,
    pick_freeze_total_sobol,
    uniform_box,
)
from igsense.services.twobytwo import (
    TwoByTwoSetup,
    kld_closed_form,
    kld_closed_form_batch,
    kld_gradient_reference,
    posterior_closed_form,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    """Linha de verify.csv."""

    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tolerance)


def _rel(a, b) -> float:
    """max |a − b| / max(1, |b|)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))) if a.size else 0.0


def twobytwo_setup(config: RunConfig) -> ProblemSetup:
    return build_problem(RunConfig.from_dict({
        "model": {"kind": "twobytwo"},
        "spectrum": {"seed": config.spectrum.seed},
    }))


def elliptic_setup(config: RunConfig, n: int) -> ProblemSetup:
    return build_problem(RunConfig.from_dict({
        "model": {"kind": "elliptic", "mesh_n": n},
        "noise": config.noise.model_dump(),
        "prior": config.prior.model_dump(),
        "spectrum": {"seed": config.spectrum.seed, "oversample": config.spectrum.oversample},
    }))


# ==========================================
# Modelo 2×2
# ==========================================

def check_twobytwo(config: RunConfig) -> list[CheckResult]:
    """Pipeline genérico vs forma fechada num reticulado 5×5 de [0.1, 0.9]²."""
    setup = twobytwo_setup(config)
    seed = config.spectrum.seed
    reference = TwoByTwoSetup(setup.ip.data.u_obs, float(np.sqrt(setup.ip.data.noise_var[0])))
    lattice = np.linspace(0.1, 0.9, 5)
    phi_err, grad_err, map_err = 0.0, 0.0, 0.0
    for t1 in lattice:
        for t2 in lattice:
            theta = setup.theta.with_values([t1, t2])
            report = info_gain_gradient(setup.fresh_problem(), theta, 2, seed=seed)
            ref = reference.with_theta([t1, t2])
            phi_err = max(phi_err, _rel(report.phi_ig, kld_closed_form(ref)))
            grad_err = max(grad_err, _rel(report.grad_phi_ig, kld_gradient_reference(ref, 1e-3)))
            map_err = max(map_err, _rel(report.m_post, posterior_closed_form(ref)[0]))

    report = info_gain_gradient(setup.fresh_problem(), setup.theta.with_values([0.0, 0.0]), 2, seed=seed)
    eig_err = max(
        abs(report.spectrum.gammas[0] - 100.0) / 100.0,
        abs(report.eigenvalue_derivatives[0, 1] + 200.0) / 200.0,
        abs(report.eigenvalue_derivatives[0, 0]),
    )
    return [
        CheckResult("twobytwo_phi_closed_form", phi_err, 1e-6),
        CheckResult("twobytwo_gradient_closed_form", grad_err, 1e-5),
        CheckResult("twobytwo_map_closed_form", map_err, 1e-10),
        CheckResult("twobytwo_eigenvalue_derivative", eig_err, 1e-8),
    ]


def check_sobol_bound(config: RunConfig, n_samples: int = 500, seed: int = 11, n_reference: int = 100_000) -> list[CheckResult]:
    """Limitante DGSM ≥ Ŝ_tot − 3·SE do pick-freeze no 2×2 com caixa [0.1, 0.9]²."""
    setup = twobytwo_setup(config)
    template = setup.theta.with_values([0.5, 0.5])
    pmap = PerturbationMap(template, alpha=0.8)
    report = dgsm_bound(setup.fresh_problem, pmap, n_samples, seed, rank=2, spectrum_seed=config.spectrum.seed)

    u_obs = setup.ip.data.u_obs
    sigma = float(np.sqrt(setup.ip.data.noise_var[0]))

    def phi(t: np.ndarray) -> np.ndarray:
        return kld_closed_form_batch((1.0 + pmap.alpha * t) * pmap.nominal, u_obs, sigma)

    reference = pick_freeze_total_sobol(phi, uniform_box([-1, -1], [1, 1]), n_reference, seed)
    violation = np.maximum(0.0, reference.total - 3 * reference.standard_errors - report.bounds)
    return [CheckResult("sobol_bound_validity", float(violation.max()), 0.0)]


# ==========================================
# Modelo elíptico
# ==========================================

def check_dense_oracle(config: RunConfig, n: int) -> list[CheckResult]:
    """Pipeline de posto completo vs oráculo denso na malha n×n."""
    setup = elliptic_setup(config, n)
    ip, theta = setup.ip, setup.theta
    phi, phi_bar, spec, m_post = information_gain_at(
        ip, theta, setup.rank, oversample=config.spectrum.oversample, seed=config.spectrum.seed
    )
    exact = dense_kld(DenseProblem.assemble(ip, theta), ip.data.u_obs)
    top = exact.gammas[: spec.rank]
    gamma_err = float(np.max(np.abs(spec.gammas - top) / np.maximum(np.abs(top), 1e-10 * abs(top[0]))))
    map_err = float(np.linalg.norm(m_post - exact.m_post) / np.linalg.norm(exact.m_post))
    return [
        CheckResult(f"dense_phi_ig_n{n}", _rel(phi, exact.phi_ig), 1e-10),
        CheckResult(f"dense_phi_ig_bar_n{n}", _rel(phi_bar, exact.phi_ig_bar), 1e-10),
        CheckResult(f"dense_m_post_n{n}", map_err, 1e-8),
        CheckResult(f"dense_eigenvalues_n{n}", gamma_err, 1e-8),
    ]


def check_elliptic_local(config: RunConfig, n: int) -> list[CheckResult]:
    """Independência de Φ̄_IG em g, contabilidade de solves, multiplicadores e convergência em r."""
    setup = elliptic_setup(config, n)
    ip, theta, r = setup.ip, setup.theta, setup.rank
    seed, oversample = config.spectrum.seed, config.spectrum.oversample

    report = info_gain_gradient(ip.clone(), theta, r, seed=seed, oversample=oversample)
    g = theta.index("g")

    bars = []
    for g_value in np.linspace(0.02, 0.5, 40):
        values = theta.values.copy()
        values[g] = g_value
        _, phi_bar, _, _ = information_gain_at(ip.clone(), theta.with_values(values), r, oversample, seed)
        bars.append(phi_bar)
    bars = np.array(bars)
    bar_spread = float(np.max(np.abs(bars - bars[0])) / max(1.0, abs(bars[0])))

    counts = report.algorithm_counts
    n_theta = len(theta)
    excess = max(0, counts.incremental - (2 * r + 2 * n_theta + 6)) + max(0, counts.forward_adjoint - 4)

    ws = build_workspace(ip.clone(), report.spectrum, theta)
    multiplier_err = max((verify_multiplier(ip, ws, i) for i in range(ws.rank)), default=0.0)

    spec = report.spectrum
    phis = []
    probe = ip.clone()
    for k in range(1, spec.rank + 1):
        truncated = spec.truncated(k)
        phis.append(information_gain(probe, truncated, map_point(probe, truncated, theta)))
    gaps = np.abs(np.array(phis) - phis[-1])
    rank_increase = float(np.max(np.diff(gaps), initial=0.0))

    return [
        CheckResult(f"phi_ig_bar_g_derivative_n{n}", abs(float(report.grad_phi_ig_bar[g])), 1e-10),
        CheckResult(f"phi_ig_bar_g_sweep_n{n}", bar_spread, 1e-9),
        CheckResult(f"solve_accounting_n{n}", float(excess), 0.0),
        CheckResult(f"multiplier_identity_n{n}", multiplier_err, 1e-7),
        CheckResult(f"rank_convergence_n{n}", max(rank_increase, 0.0), 1e-10 * max(1.0, abs(phis[-1]))),
    ]


def g_sign_changes(config: RunConfig, n: int, num: int = 40) -> tuple[int, float, np.ndarray, np.ndarray]:
    """
    Número de trocas de sinal de ∂Φ_IG/∂g numa janela que contém a raiz.

    ∂Φ_IG/∂g é afim em g; a raiz sai de duas avaliações (g = 0.05 e 0.5, c = 1).

    Returns:
        (trocas, raiz, grade de g, derivadas na grade)
    """
    setup = elliptic_setup(config, n)
    ip, theta, r = setup.ip, setup.theta, setup.rank
    seed, oversample = config.spectrum.seed, config.spectrum.oversample
    g = theta.index("g")

    def derivative(g_value: float) -> float:
        values = theta.values.copy()
        values[0] = 1.0
        values[g] = g_value
        report = info_gain_gradient(ip.clone(), theta.with_values(values), r, seed=seed, oversample=oversample)
        return float(report.grad_phi_ig[g])

    d_lo, d_hi = derivative(0.05), derivative(0.5)
    slope = (d_hi - d_lo) / 0.45
    root = 0.05 - d_lo / slope if slope != 0.0 else np.nan
    half_width = max(0.5, abs(root) / 2) if np.isfinite(root) else 0.5
    grid = np.linspace(root - half_width, root + half_width, num) if np.isfinite(root) else np.linspace(0.05, 0.5, num)
    values = np.array([derivative(x) for x in grid])
    signs = np.sign(values)
    changes = int(np.count_nonzero(signs[1:] * signs[:-1] < 0))
    logger.info(f"∂Φ_IG/∂g: raiz em g ≈ {root:.6g}, {changes} troca(s) de sinal em [{grid[0]:.4g}, {grid[-1]:.4g}]")
    return changes, float(root), grid, values


def check_g_sign_change(config: RunConfig, n: int) -> list[CheckResult]:
    changes, _, _, _ = g_sign_changes(config, n)
    return [CheckResult(f"g_single_sign_change_n{n}", float(abs(changes - 1)), 0.0)]


# ==========================================
# Diferenças finitas
# ==========================================

def _fd_checks(name: str, setup: ProblemSetup, theta, hs, seed: int, oversample: int) -> list[CheckResult]:
    ip, r = setup.ip, setup.rank
    report = info_gain_gradient(ip.clone(), theta, r, seed=seed, oversample=oversample)

    def phi(t):
        return information_gain_at(ip.clone(), t, r, oversample, seed)[0]

    errors = fd_errors(phi, report.grad_phi_ig, theta, hs)
    violations = 0
    if len(hs) >= 2:
        expected = (hs[0] / hs[1]) ** 2
        for j in range(errors.shape[1]):
            if errors[0, j] > 1e-8 and errors[0, j] / max(errors[1, j], 1e-300) < expected / 4:
                violations += 1
    return [
        CheckResult(f"fd_gradient_{name}", float(errors[-1].max()), 1e-4),
        CheckResult(f"fd_second_order_{name}", float(violations), 0.0),
    ]


def check_fd(config: RunConfig) -> list[CheckResult]:
    """Gradiente adjunto vs diferenças centrais nos dois modelos."""
    hs = tuple(config.verify.fd_h)
    seed, oversample = config.spectrum.seed, config.spectrum.oversample
    two = twobytwo_setup(config)
    results = _fd_checks("twobytwo", two, two.theta.with_values([0.3, 0.6]), hs, seed, oversample)
    n = config.verify.mesh_sizes[0]
    ell = elliptic_setup(config, n)
    results += _fd_checks(f"elliptic_n{n}", ell, ell.theta, hs, seed, oversample)
    return results


def check_prior(config: RunConfig, n: int) -> list[CheckResult]:
    """C_prior e C_prior⁻¹ mutuamente inversos em sondas aleatórias."""
    prior = elliptic_setup(config, n).ip.prior
    rng = np.random.Generator(np.random.Philox(key=config.spectrum.seed))
    v = rng.standard_normal((prior.dim, 5))
    back = prior.apply_cov(prior.apply_precision(v))
    return [CheckResult(f"prior_inverse_pair_n{n}", float(np.max(np.linalg.norm(back - v, axis=0) / np.linalg.norm(v, axis=0))), 1e-8)]


def run_checks(config: RunConfig) -> list[CheckResult]:
    """Executa toda a suíte e loga cada resultado."""
    checks: list[Callable[[], list[CheckResult]]] = [
        lambda: check_twobytwo(config),
        lambda: check_sobol_bound(config),
        lambda: check_fd(config),
    ]
    for n in config.verify.mesh_sizes:
        checks.append(lambda n=n: check_prior(config, n))
        checks.append(lambda n=n: check_dense_oracle(config, n))
        checks.append(lambda n=n: check_elliptic_local(config, n))
        checks.append(lambda n=n: check_g_sign_change(config, n))

    results: list[CheckResult] = []
    for check in checks:
        for result in check():
            status = "ok" if result.passed else "FALHOU"
            logger.info(f"[{status}] {result.name}: erro {result.max_error:.3e} (tol {result.tolerance:.1e})")
            results.append(result)
    return results
