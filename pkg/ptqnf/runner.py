import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib.metadata import version
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler

from ptqnf import checks
from ptqnf.config import ConfigError, RunConfig, load_config
from ptqnf.enums import CheckName, CheckStatus, Mode, Parity
from ptqnf.frequency import ResonanceError, smallness_constant, verify_diophantine
from ptqnf.normal_form import cnf, convergence_diagnostics, qnf
from ptqnf.serialization import norms_frame, number_tag, write_normal_form, write_report
from ptqnf.spectra import (
    hbar_sweep,
    match_spectra,
    order_scaling_test,
    radius_stability,
    spectral_summary,
)
from ptqnf.symbol import build_potential, is_real_coeffs, parity_J
from ptqnf.weyl import EigenSolveError, SupportOverflowError, assemble_H, dump_matrix

logging.basicConfig(level=logging.INFO, format="%(message)s", datefmt="[%X]", handlers=[RichHandler()])
logger = logging.getLogger(__name__)


def print_validation(cfg: RunConfig, console: Console):
    f = cfg.frequency
    value = smallness_constant(f.gamma, f.tau)
    console.print(f"[bold]Config valid[/bold] (schema {cfg.schema_version}, digest {cfg.digest[:12]})")
    console.print(f"omega={f.omega} gamma={f.gamma:.6g} tau={f.tau}")
    console.print(f"Smallness constant gamma tau^tau (tau+2)^(4(tau+2)) = {value:.4e} (needs < 0.5)")
    if value >= 0.5:
        console.print("[bold yellow]theoretical condition not met: proceeding is empirical[/bold yellow]")


class _Run:
    """State of one run: configuration, potential, normal forms and collected check results."""

    def __init__(self, cfg: RunConfig, output_directory: Path):
        self.cfg = cfg
        self.out = output_directory
        self.f = cfg.frequency
        self.V = build_potential(cfg.potential)
        self.is_pt = is_real_coeffs(self.V, cfg.tolerances.reality) and parity_J(self.V) == Parity.ODD
        self.quantum = []
        self.classical = None
        self.results: dict = {}
        self.report: dict = {}

    def record(self, result: checks.CheckResult):
        self.results[result.name] = result

    def enabled(self, name: CheckName) -> bool:
        if not self.cfg.enabled(name):
            self.record(checks.skipped(name, "disabled"))
            return False
        return True

    def normal_forms(self):
        cfg = self.cfg
        if cfg.mode in (Mode.QUANTUM, Mode.BOTH):
            for hbar in cfg.hbar_list:
                logger.info(f"Quantum normal form to order {cfg.order} at hbar={hbar}")
                r = qnf(self.V, self.f, hbar, cfg.order, cfg.policy)
                write_normal_form(r, self.out / f"nf_{number_tag(hbar)}.txt")
                self.quantum.append(r)
        if cfg.mode in (Mode.CLASSICAL, Mode.BOTH):
            logger.info(f"Classical normal form to order {cfg.order}")
            self.classical = cnf(self.V, self.f, cfg.order, cfg.policy)
            write_normal_form(self.classical, self.out / "nf_classical.txt")

        all_results = self.quantum + ([self.classical] if self.classical else [])
        norms_frame(all_results).to_csv(self.out / "norms.csv", index=False)
        return all_results

    def structural_checks(self, all_results):
        tol = self.cfg.tolerances
        w = self.cfg.window
        if self.enabled(CheckName.POTENTIAL_SYMMETRY):
            self.record(checks.check_potential_symmetry(self.V, tol.reality))
        if self.enabled(CheckName.PT_MATRIX):
            self.record(checks.check_pt_matrix(self.V, self.cfg.hbar_list, w, self.f, tol.pt_matrix))
        if self.enabled(CheckName.REALITY):
            self.record(checks.check_reality(all_results, tol.reality))
        if self.enabled(CheckName.IMAG_W):
            self.record(checks.check_imag_w(all_results, tol.imag_w))
        if self.enabled(CheckName.ODD_VANISHING):
            self.record(checks.check_odd_vanishing(all_results, tol.odd))
        if self.enabled(CheckName.PARITY_LADDER):
            self.record(checks.check_parity_ladder(all_results, tol.parity))
        if self.enabled(CheckName.HOMOLOGICAL_RESIDUAL):
            self.record(checks.check_homological(all_results, tol.homological))
        if self.enabled(CheckName.GRADED_VS_LITERAL):
            self.record(checks.check_graded_vs_literal(self.V, all_results, tol.literal))
        if self.enabled(CheckName.COMMUTATOR_ORACLE):
            self.record(checks.check_commutator_oracle(self.V, self.quantum, w, tol.commutator))
        if self.enabled(CheckName.LINEAR_RULE_ORACLE):
            self.record(checks.check_linear_rule(self.quantum, w, tol.linear_rule))
        if self.enabled(CheckName.BRACKET_PROPERTIES):
            self.record(checks.check_bracket_properties(self.V, all_results, tol.reality))
        if self.enabled(CheckName.CLASSICAL_LIE_TRANSFORM):
            if self.classical is None:
                self.record(checks.skipped(CheckName.CLASSICAL_LIE_TRANSFORM, "classical mode not selected"))
            else:
                self.record(
                    checks.check_classical_lie_transform(self.V, self.classical, self.cfg.policy, tol.literal)
                )

    def _spectra_job(self, job):
        eps, r = job
        cfg = self.cfg
        hbar = r.hbar
        logger.info(f"Oracle comparison at eps={eps}, hbar={hbar}")
        continuation = {"steps": cfg.steps, "max_halvings": cfg.max_halvings, "pairing_tol": cfg.tolerances.pairing}
        qnf_imag_tol = cfg.tolerances.qnf_imag if self.is_pt else float("inf")
        table = match_spectra(r, self.V, eps, hbar, cfg.window, self.f, qnf_imag_tol=qnf_imag_tol, **continuation)
        table.to_frame().to_csv(self.out / f"spectra_{number_tag(eps)}_{number_tag(hbar)}.csv", index=False)
        if cfg.dump_matrices:
            matrix = assemble_H(self.V, eps, hbar, cfg.window, self.f)
            dump_matrix(matrix, self.out / f"matrix_{number_tag(eps)}_{number_tag(hbar)}.bin", eps, self.f)

        scaling = None
        if eps != 0 and cfg.enabled(CheckName.ORDER_SCALING):
            scaling = order_scaling_test(
                r,
                self.V,
                eps,
                hbar,
                cfg.window,
                self.f,
                factor=cfg.tolerances.scaling_factor,
                floor=cfg.tolerances.residual_floor,
                qnf_imag_tol=qnf_imag_tol,
                **continuation,
            )
        return table, scaling

    def spectra(self):
        cfg = self.cfg
        jobs = [(eps, r) for r in self.quantum for eps in cfg.epsilon_list]
        # map keeps job order, so the merged tables do not depend on scheduling
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(self._spectra_job, jobs))
        tables = [table for table, _ in outcomes]
        scalings = [scaling for _, scaling in outcomes if scaling is not None]
        self.report["spectra"] = [spectral_summary(t) for t in tables]
        self.report["scaling"] = [s.as_dict() for s in scalings]

        tol = cfg.tolerances
        if self.enabled(CheckName.SPECTRAL_REALITY):
            self.record(checks.check_spectral_reality(tables, tol.oracle_imag))
        if self.enabled(CheckName.SPECTRA_RESIDUAL):
            self.record(checks.check_spectra_residual(tables))
        if self.enabled(CheckName.ORDER_SCALING):
            self.record(checks.check_order_scaling(scalings))

    def sweep(self):
        cfg = self.cfg
        self.report["sweep"] = {}
        if not self.enabled(CheckName.CLASSICAL_LIMIT):
            return
        if not cfg.sweep_hbars:
            self.record(checks.skipped(CheckName.CLASSICAL_LIMIT, "empty sweep"))
            return
        logger.info(f"hbar sweep over {cfg.sweep_hbars}")
        record = hbar_sweep(self.V, self.f, cfg.order, cfg.sweep_hbars, cfg.policy)
        record.to_frame().to_csv(self.out / "sweep.csv", index=False)
        self.report["sweep"] = record.as_dict()
        self.record(checks.check_classical_limit(record, cfg.tolerances.classical_exponent))

    def diagnostics(self):
        cfg = self.cfg
        diagnostics = {}
        for r in self.quantum + ([self.classical] if self.classical else []):
            key = f"{r.mode.name.lower()}_{number_tag(r.hbar)}"
            diagnostics[key] = convergence_diagnostics(r, cfg.policy.rho / 2).as_dict()
        if self.enabled(CheckName.RADIUS_STABILITY):
            hbar = self.quantum[0].hbar if self.quantum else 0.0
            record = radius_stability(self.V, self.f, hbar, cfg.order, cfg.policy, cfg.tolerances.radius_stability)
            diagnostics["radius_stability"] = record.as_dict()
            self.record(checks.check_radius_stability(record, cfg.tolerances.radius_stability))
        self.report["diagnostics"] = diagnostics

    def finish(self) -> int:
        ordered = [self.results.get(name, checks.skipped(name, "not applicable")) for name in CheckName]
        failed = [c.name.name.lower() for c in ordered if c.status == CheckStatus.FAIL]
        self.report["checks"] = [c.as_dict() for c in ordered]
        self.report["status"] = "FAIL" if failed else "PASS"
        write_report(self.report, self.out / "report.json")
        if failed:
            logger.error(f"Failed checks: {', '.join(failed)}")
            return 1
        logger.info(f"All enabled checks passed; report at {self.out / 'report.json'}")
        return 0


def run_from_cli_worker(
    config_path: Path,
    output_directory: Path = None,
    order: int = None,
    mode: str = None,
    checks_selection: str = None,
    jobs: int = None,
    validate_only: bool = False,
    dump_matrices: bool = False,
) -> int:
    """
    Run worker. Worker is called by tests, and thus not wrapped by `click`.

    :param config_path: path to the JSON run configuration
    :param output_directory: path to the output directory, overriding the config
    :param order: normal form order K, overriding the config
    :param mode: quantum, classical or both
    :param checks_selection: "all", "none" or a comma-separated list of check names
    :param jobs: number of parallel (eps, hbar) comparisons
    :param validate_only: validate the config and print the smallness report without running
    :param dump_matrices: write the H(eps) matrices of every comparison
    :returns: 0 on success, 1 on invalid input, aborted run, or any failed check
    """

    try:
        cfg = load_config(config_path)
        cfg = cfg.with_overrides(
            order=order,
            mode=mode,
            checks=checks_selection,
            jobs=jobs,
            output_directory=output_directory,
            dump_matrices=dump_matrices or None,
        )
    except ConfigError as e:
        for field_path, message in e.problems:
            logger.error(f"Invalid config {field_path}: {message}" if field_path else f"Invalid config: {message}")
        return 1

    if validate_only:
        print_validation(cfg, Console())
        return 0

    if cfg.output_directory is None:
        logger.error("No output directory given in the config or on the command line, aborting.")
        return 1
    out = cfg.output_directory
    if not out.exists():
        logger.info("Output path does not exist. attempting to create")
        out.mkdir(parents=True, exist_ok=True)

    diophantine = verify_diophantine(cfg.frequency, cfg.qmax_check)
    logger.info(
        f"Diophantine scan to |q|={cfg.qmax_check}: worst q={diophantine.worst_q}, "
        f"implied gamma={diophantine.implied_gamma:.6g}"
    )

    try:
        run = _Run(cfg, out)
        if not run.is_pt:
            logger.warning("The potential is not PT-symmetric; reality checks are expected to fail")
        reach = cfg.order * run.V.q_spread
        if cfg.window.margin < reach:
            logger.warning(
                f"Interior margin {cfg.window.margin} is below K * qmax(V) = {reach}; "
                "interior rows may carry basis truncation error"
            )
        run.report.update(
            {
                "schema_version": cfg.schema_version,
                "config_digest": cfg.digest,
                "diophantine": diophantine.as_dict(),
            }
        )
        all_results = run.normal_forms()
        run.structural_checks(all_results)
        run.spectra()
        run.sweep()
        run.diagnostics()
    except (ResonanceError, SupportOverflowError, EigenSolveError) as e:
        logger.error(f"Run aborted: {e}")
        return 1
    return run.finish()


@click.command(name="PTQNFCommandLine")
@click.option("-c", "--config", "config_path", type=click.Path(exists=True, path_type=Path), help="Path to run config")
@click.option("-o", "--out", "output_directory", type=click.Path(path_type=Path), help="Path to output directory")
@click.option("-k", "--order", type=int, help="Normal form order K")
@click.option("-m", "--mode", type=click.Choice(["quantum", "classical", "both"], case_sensitive=False), help="Mode")
@click.option("--checks", "checks_selection", help="all, none, or a comma-separated list of check names")
@click.option("-j", "--jobs", type=int, help="Parallel (eps, hbar) comparisons")
@click.option("--validate-only", is_flag=True, help="Validate the config and report the smallness condition")
@click.option("--dump-matrices", is_flag=True, help="Write the H(eps) matrices of every comparison")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging")
@click.version_option(version("ptqnf"))
def run_from_cli(
    config_path, output_directory, order, mode, checks_selection, jobs, validate_only, dump_matrices, verbose
):
    """
    CLI entrypoint for the normal form runner.

    :param config_path: path to the run config

    :param output_directory: path to output directory
    """

    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    if config_path is None:
        logger.error("A config file is required (--config)")
        sys.exit(1)

    logger.debug(f"{config_path=}")
    logger.debug(f"{output_directory=}")

    sys.exit(
        run_from_cli_worker(
            config_path,
            output_directory=output_directory,
            order=order,
            mode=mode,
            checks_selection=checks_selection,
            jobs=jobs,
            validate_only=validate_only,
            dump_matrices=dump_matrices,
        )
    )


if __name__ == "__main__":
    sys.exit(run_from_cli())
