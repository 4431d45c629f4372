"""
실험 실행 모듈 - 선택된 실험 하나를 수행하고 CSV/JSON/HTML 산출물을 기록합니다
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .config import CONVERGENCE_REQUIRED, EXIT_CODES, ensure_directories
from .expr import FunctionSpec
from .export import ExportGenerator
from .game import GameProblem, estimate_value_mc, solve_value
from .grid import Grid, GridError, ScalarField, build_grid, sample
from .load import SOLUTION, ConfigError, ExperimentConfig
from .operators import (
    aronsson_apply,
    comparison_check,
    default_theta,
    default_tolerance,
    general_operator_apply,
    infinity_laplacian,
    lipschitz_constant,
    normalized_inf_laplacian,
    viscosity_check,
)
from .report import ReportGenerator
from .verification import (
    cone_comparison_check,
    doubling_sweep,
    recover_cost,
    recovery_refinement,
    refinement_study,
    slope_analysis,
    uniqueness_experiment,
)

logger = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    """실험 한 번의 결과 묶음"""

    selector: str
    status: str = "ok"
    results: Dict[str, Any] = field(default_factory=dict)
    verdicts: Dict[str, Any] = field(default_factory=dict)
    tolerances: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)
    fields: Dict[str, Tuple[ScalarField, Optional[np.ndarray]]] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)

    def mark_not_converged(self, message: str) -> None:
        self.warnings.append(message)
        if self.selector in CONVERGENCE_REQUIRED:
            self.status = "not_converged"


class ExperimentRunner:
    """ExperimentConfig 하나를 실행하는 클래스"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.grid: Grid = config.grid.grid
        self.result = ExperimentResult(selector=config.selector)
        self._solution: Optional[ScalarField] = None
        self._problem: Optional[GameProblem] = None

    # --- 공통 도우미 ---

    def _sample(self, dotted: str, fn: FunctionSpec, grid: Optional[Grid] = None) -> ScalarField:
        try:
            return sample(grid or self.grid, fn)
        except ValueError as e:
            raise ConfigError(str(e), dotted) from e

    def problem(self, grid: Optional[Grid] = None, epsilon: Optional[float] = None) -> GameProblem:
        game = self.config.game
        try:
            return GameProblem.from_functions(grid or self.grid, epsilon or game.epsilon, game.f, game.F)
        except ValueError as e:
            raise ConfigError(str(e), "game") from e

    def solution(self) -> ScalarField:
        """게임 값 함수 (한 번만 풉니다)"""
        if self._solution is None:
            solver = self.config.solver
            self._problem = self.problem()
            u, stats = solve_value(self._problem, solver.tol, solver.max_iter, solver.sweep)
            self.result.results["solve"] = {**stats.to_dict(), **self._problem.describe()}
            self.result.tolerances["solver_tol"] = solver.tol
            self.result.tolerances["max_iter"] = solver.max_iter
            self.result.warnings.extend(stats.warnings)
            if not stats.converged:
                self.result.mark_not_converged(f"값 반복 미수렴: {stats.iterations}회, 마지막 갱신량 {stats.final_update:.3e}")
            self._solution = u
        return self._solution

    def field_from(self, dotted: str, source: Optional[str], fn: Optional[FunctionSpec]) -> ScalarField:
        if source == SOLUTION:
            return self.solution()
        return self._sample(dotted, fn)

    def subject(self) -> ScalarField:
        """operator.u 로 지정된 필드"""
        op = self.config.operator
        return self.field_from("operator.u", op.u_source, op.u)

    def tolerance_policy(self) -> str:
        return "solver" if self.config.operator.u_source == SOLUTION else "sampled"

    def locate(self, dotted: str, point) -> int:
        try:
            return self.grid.locate(point)
        except GridError as e:
            raise ConfigError(str(e), dotted) from e

    # --- 실험 ---

    def run_solve(self) -> None:
        u = self.solution()
        self.result.fields["u"] = (u, None)

    def run_recover(self) -> None:
        u = self.solution()
        cfg = self.config
        reference = cfg.verify.reference or cfg.game.f
        report = recover_cost(
            u, theta=cfg.operator.theta,
            reference=self._sample("verify.reference", reference),
            coherence=cfg.verify.coherence,
        )
        self.result.results["recovery"] = report.to_dict()
        self.result.tolerances["theta"] = report.theta
        self.result.tolerances["coherence"] = report.coherence
        self.result.warnings.extend(report.warnings)
        self.result.fields["u"] = (u, None)
        self.result.fields["f_hat"] = (report.f_hat, report.mask)

        def builder(level: int):
            if level == 0:
                return u, cfg.game.epsilon
            scale = 2 ** level
            grid = build_grid(cfg.grid.lower, cfg.grid.upper, cfg.grid.h / scale)
            epsilon = cfg.game.epsilon / scale
            refined, stats = solve_value(self.problem(grid, epsilon), cfg.solver.tol, cfg.solver.max_iter, cfg.solver.sweep)
            if not stats.converged:
                self.result.mark_not_converged(f"복원 세분 수준 {level} 미수렴")
            return refined, epsilon

        table = recovery_refinement(builder, reference, coherence=cfg.verify.coherence)
        self.result.results["recovery_refinement"] = table
        self.result.tables["recover_refine"] = table

    def run_unique(self) -> None:
        cfg = self.config
        try:
            report = uniqueness_experiment(
                cfg.game.f, cfg.verify.g, cfg.game.F, self.grid, cfg.game.epsilon,
                cfg.solver.tol, cfg.solver.max_iter, cfg.solver.sweep,
            )
        except ValueError as e:
            raise ConfigError(str(e), "verify.g") from e
        self.result.results["uniqueness"] = report.to_dict()
        self.result.tolerances["solver_tol"] = cfg.solver.tol
        self.result.fields["u_f"] = (report.u_f, None)
        self.result.fields["u_g"] = (report.u_g, None)
        if report.failure:
            self.result.mark_not_converged(report.failure)

    def run_simulate(self) -> None:
        cfg = self.config
        u = self.solution()
        start = self.locate("verify.start", cfg.verify.start)
        if not self.grid.interior[start]:
            raise ConfigError(f"시작점 {self.grid.coords[start].tolist()} 은 내부 노드여야 합니다", "verify.start")
        estimate = estimate_value_mc(self._problem, u, start, cfg.verify.samples, cfg.seed, cfg.verify.step_cap)
        dp_value = u[start]
        z_score = abs(estimate.mean - dp_value) / estimate.stderr if estimate.stderr > 0 else None
        self.result.results["monte_carlo"] = {
            **estimate.to_dict(),
            "start": self.grid.coords[start].tolist(),
            "dp_value": dp_value,
            "z_score": z_score,
        }
        self.result.tolerances["step_cap"] = estimate.step_cap
        if estimate.truncated_fraction >= 0.01:
            self.result.warnings.append(f"절단된 플레이아웃 비율 {estimate.truncated_fraction:.2%}")
        self.result.fields["u"] = (u, None)

    def run_operator(self) -> None:
        op = self.config.operator
        u = self.subject()
        mask = None
        if op.kind == "inf":
            out = infinity_laplacian(u)
        elif op.kind == "normalized":
            theta = default_theta(self.grid) if op.theta is None else op.theta
            out, mask = normalized_inf_laplacian(u, theta)
            self.result.tolerances["theta"] = theta
        elif op.kind == "aronsson":
            out = aronsson_apply(op.hamiltonian, u)
            self.result.tolerances["fd_step"] = op.hamiltonian.step
        else:
            out = general_operator_apply(op.general, u)

        interior = self.grid.interior if mask is None else mask
        values = out.values[interior]
        self.result.results["operator"] = {
            "kind": op.kind,
            "nodes": int(values.size),
            "max_abs": float(np.abs(values).max()) if values.size else 0.0,
            "mean": float(values.mean()) if values.size else 0.0,
        }
        self.result.fields["u"] = (u, None)
        self.result.fields[op.kind] = (out, mask)

    def run_check(self) -> None:
        cfg = self.config
        op = cfg.operator
        u = self.subject()
        f = self._sample("game.f", cfg.game.f)
        tol = op.tol if op.tol is not None else default_tolerance(self.grid, self.tolerance_policy())
        theta = op.theta if op.theta is not None else default_theta(self.grid)
        self.result.tolerances.update({"theta": theta, "tol": tol, "tol_policy": self.tolerance_policy()})

        roles = ("sub", "super") if op.role == "both" else (op.role,)
        for role in roles:
            verdict = viscosity_check(u, f, form=op.form, role=role, theta=theta, tol=tol)
            key = f"{op.form}_{role}"
            summary = verdict.summary()
            summary["verdict"] = "pass" if verdict.all_passed else ("fail-at-all-nodes" if verdict.all_failed else "mixed")
            self.result.verdicts[key] = summary
            self.result.tables[f"verdict_{key}"] = verdict.to_frame(self.grid)

        if op.general is not None and cfg.verify.g is not None:
            g = self._sample("verify.g", cfg.verify.g)
            self.result.results["comparison"] = comparison_check(u, op.general, f, g, tol).to_dict()
        self.result.fields["u"] = (u, None)

    def run_doubling(self) -> None:
        cfg = self.config
        op = cfg.operator
        u = self.subject()
        v = u if op.v_source is None else self.field_from("operator.v", op.v_source, op.v)
        reports, table = doubling_sweep(u, v, cfg.verify.eps, lift=cfg.verify.lift)
        within = [r.gap <= r.gap_bound + 1e-12 for r in reports]
        if not all(within):
            self.result.warnings.append("이중화 간격이 sqrt(dim)(L eps + h/2) 한계를 넘었습니다")
        self.result.results["doubling"] = [dict(r.to_dict(), within_bound=ok) for r, ok in zip(reports, within)]
        self.result.tolerances["eps"] = list(cfg.verify.eps)
        self.result.tables["doubling"] = table

    def run_slope(self) -> None:
        cfg = self.config
        u = self.subject()
        center = self.locate("verify.center", cfg.verify.center)
        try:
            report = slope_analysis(u, center, cfg.verify.radii, s_plus_radius=cfg.verify.rho, tol=cfg.operator.tol)
        except ValueError as e:
            raise ConfigError(str(e), "verify.radii") from e
        self.result.results["slope"] = report.to_dict()
        self.result.tolerances["slope_tol"] = report.tol
        self.result.tolerances["s_plus_radius"] = report.s_plus_radius
        self.result.tables["slope"] = report.to_frame()

    def run_cones(self) -> None:
        cfg = self.config
        u = self.subject()
        try:
            report = cone_comparison_check(
                u, cfg.verify.box_lower, cfg.verify.box_upper, cfg.verify.direction, tol=cfg.operator.tol,
            )
        except ValueError as e:
            raise ConfigError(str(e), "verify.box_lower") from e
        self.result.verdicts["cones"] = report.to_dict()
        self.result.tolerances["cone_tol"] = report.tol
        self.result.tolerances["lipschitz"] = lipschitz_constant(u)

    def run_refine(self) -> None:
        cfg = self.config
        lower, upper = cfg.grid.lower, cfg.grid.upper

        def builder(level: int):
            scale = 2 ** level
            grid = build_grid(lower, upper, cfg.grid.h / scale)
            epsilon = cfg.game.epsilon / scale
            u, stats = solve_value(self.problem(grid, epsilon), cfg.solver.tol, cfg.solver.max_iter, cfg.solver.sweep)
            if not stats.converged:
                self.result.mark_not_converged(f"세분 수준 {level} 미수렴")
            return u, epsilon

        table = refinement_study(builder, cfg.verify.reference, cfg.verify.levels)
        self.result.results["refinement"] = table
        self.result.tolerances["solver_tol"] = cfg.solver.tol
        self.result.tables["refine"] = table

    def execute(self) -> ExperimentResult:
        handlers: Dict[str, Callable[[], None]] = {
            "solve": self.run_solve,
            "recover": self.run_recover,
            "unique": self.run_unique,
            "simulate": self.run_simulate,
            "operator": self.run_operator,
            "check": self.run_check,
            "doubling": self.run_doubling,
            "slope": self.run_slope,
            "cones": self.run_cones,
            "refine": self.run_refine,
        }
        handlers[self.config.selector]()
        return self.result


def write_artifacts(config: ExperimentConfig, result: ExperimentResult) -> Dict[str, Path]:
    """CSV, JSON, HTML 산출물을 기록합니다."""
    directories = ensure_directories(config.output.dir)
    artifacts: Dict[str, Path] = {}
    formats = config.output.formats

    if "csv" in formats:
        exporter = ExportGenerator(directories["output"])
        for name, (values, mask) in result.fields.items():
            artifacts[name] = exporter.write_field(name, values, mask)
        for name, table in result.tables.items():
            if name == "slope":
                artifacts[name] = exporter.write_slope(table)
            elif name == "doubling":
                artifacts[name] = exporter.write_doubling(table)
            else:
                artifacts[name] = exporter.write_table(name, table)

    reporter = ReportGenerator(directories["output"])
    if "json" in formats or "html" in formats:
        document = reporter.build_document(config, result, artifacts)
        if "json" in formats:
            artifacts["report_json"] = reporter.write_json(document)
        if "html" in formats:
            artifacts["report_html"] = reporter.write_html(document)
    return artifacts


def run(config: ExperimentConfig) -> int:
    """실험을 실행하고 종료 코드를 반환합니다 (0 성공, 1 오류, 3 미수렴). 설정 오류는 ConfigError 로 전달됩니다."""
    logger.info(f"실험 '{config.selector}' 시작 (seed={config.seed})")
    runner = ExperimentRunner(config)
    try:
        result = runner.execute()
    except ConfigError:
        raise
    except Exception as e:
        logger.error(f"실험 중 오류가 발생했습니다: {e}", exc_info=True)
        result = runner.result
        result.status = "error"
        result.errors.append(str(e))

    artifacts = write_artifacts(config, result)
    logger.info(f"✓ 산출물 {len(artifacts)}개 기록 완료 (상태: {result.status})")
    if result.status == "error":
        return EXIT_CODES["error"]
    if result.status == "not_converged":
        return EXIT_CODES["not_converged"]
    return EXIT_CODES["ok"]
