"""
줄다리기(tug-of-war) 게임 / 무한 라플라시안 수치 실험실 설정 파일
"""
from pathlib import Path
from typing import Dict, Any

# 프로젝트 루트 경로
PROJECT_ROOT = Path(__file__).parent.parent

# 출력 경로
OUTPUT_DIR = PROJECT_ROOT / "outputs"

# 템플릿 경로
TEMPLATE_DIR = PROJECT_ROOT / "templates"

# 격자 옵션
GRID_OPTIONS = {
    "span_rtol": 1e-12,        # (upper-lower)/h 정수성 허용 오차
    "ball_tol": 1e-12,         # |y-x| <= r + ball_tol
    "candidate_slack": 1e-9,   # sklearn 후보 탐색 반경 여유분
}

# 값 반복(value iteration) 솔버 옵션
SOLVER_OPTIONS = {
    "tol": 1e-10,
    "max_iter": 200000,
    "sweep": "jacobi",         # jacobi | gauss-seidel
    "log_every": 20000,        # 진행 로그 간격 (반복 수)
}

# 게임 시뮬레이션 옵션
GAME_OPTIONS = {
    "step_cap_factor": 10**6,  # 기본 step cap = factor * (1/eps)^2
    "prng": "PCG64",           # numpy.random.Generator 비트 생성기
    "n_samples": 10000,
}

# 미분 연산자 옵션
OPERATOR_OPTIONS = {
    "theta_power": 0.5,            # theta = h^(1/2)
    "sampled_tol_factor": 10.0,    # 샘플링된 매끄러운 필드: tol = 10 h^2
    "solver_tol_factor": 10.0,     # 솔버 출력: tol = 10 h^(1/2)
    "fd_step": 1e-5,               # H 도함수 중앙 차분 스텝
    "derivative_check_tol": 1e-4,  # 명시적 도함수 검증 허용 오차
    "probe_count": 10,             # 명시적 도함수 검증 점 개수
    "probe_seed": 0,
    "probe_box": (-1.0, 1.0),
}

# 검증 실험 옵션
VERIFY_OPTIONS = {
    "coherence": 0.9,              # 비용 복원 마스크: 이웃 기울기 방향 코사인 하한
    "cone_slope_count": 41,        # 원뿔 기울기 스캔 개수
    "cone_vertex_reach": 2.0,      # 꼭짓점 스캔 반경 = reach * diam(V)
    "doubling_eps": (0.05, 0.1, 0.2),
    "doubling_chunk": 512,         # O(N^2) 스캔의 x-블록 크기
    "refine_levels": 2,
    "recover_levels": 1,           # 비용 복원 세분 표: 기준 격자 + 반분 1회
}

# 실험 선택자
SELECTORS = (
    "solve", "recover", "unique", "doubling", "slope",
    "cones", "check", "simulate", "operator", "refine",
)

# 수렴이 필요한 실험 (미수렴 시 종료 코드 3)
CONVERGENCE_REQUIRED = ("solve", "unique", "simulate", "refine")

# 종료 코드
EXIT_CODES = {
    "ok": 0,
    "error": 1,
    "config": 2,
    "not_converged": 3,
}

# 리포트 설정
REPORT_CONFIG: Dict[str, Any] = {
    "title": "줄다리기 게임 / 무한 라플라시안 실험 리포트",
    "version": "1.0.0",
    "reproduction_command": "python run.py <config.ini>",
}


def ensure_directories(output_dir: Path = OUTPUT_DIR) -> Dict[str, Path]:
    """필요한 디렉터리들을 생성합니다."""
    directories = {
        "output": output_dir,
        "fields": output_dir / "fields",
        "report": output_dir / "report",
    }
    for directory in directories.values():
        directory.mkdir(parents=True, exist_ok=True)
    return directories
