#!/usr/bin/env python3
"""
줄다리기 게임 / 무한 라플라시안 수치 실험 메인 실행 파일
설정 파일 하나로 실험 하나를 실행합니다.

사용 예:
    python run.py configs/solve_1d.ini
    python run.py configs/check_counterexample.ini -o operator.form=product --out outputs/product
"""
import sys
import logging
import argparse
from pathlib import Path
from typing import List, Optional

# 프로젝트 루트를 Python 경로에 추가
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from src.config import EXIT_CODES, SELECTORS
from src.experiments import run
from src.load import ConfigError, load_config

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    """명령행 인자 파서를 생성합니다 (설정 파일 경로 + 재정의 옵션)."""
    parser = argparse.ArgumentParser(description="줄다리기 게임 / 무한 라플라시안 수치 실험")
    parser.add_argument("config", help="INI 실험 설정 파일 경로")
    parser.add_argument("-o", "--override", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="설정 키 하나를 재정의 (반복 가능)")
    parser.add_argument("--seed", type=int, help="experiment.seed 재정의")
    parser.add_argument("--out", help="output.dir 재정의")
    parser.add_argument("--selector", choices=SELECTORS, help="experiment.selector 재정의")
    parser.add_argument("-v", "--verbose", action="store_true", help="DEBUG 로그 출력")
    return parser


def collect_overrides(args: argparse.Namespace) -> List[str]:
    """
    -o 재정의와 --seed, --out, --selector 플래그를 section.key=value 목록으로 모읍니다.

    Args:
        args: 파싱된 명령행 인자

    Returns:
        load_config 에 넘길 재정의 문자열 목록 (플래그가 -o 보다 나중에 적용됨)
    """
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"experiment.seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output.dir={args.out}")
    if args.selector is not None:
        overrides.append(f"experiment.selector={args.selector}")
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    """메인 실행 함수"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[logging.StreamHandler(sys.stdout)],
    )

    try:
        logger.info("=" * 60)
        logger.info("1. 설정 로드 중...")
        config = load_config(args.config, collect_overrides(args))
        logger.info(f"✓ 설정 로드 완료: {args.config}")

        logger.info(f"2. 실험 '{config.selector}' 실행 중...")
        status = run(config)
        if status == EXIT_CODES["ok"]:
            logger.info("✓ 실험 완료")
        elif status == EXIT_CODES["not_converged"]:
            logger.warning("⚠ 수렴하지 않아 종료 코드 3 으로 끝납니다")
        logger.info("=" * 60)
        return status

    except ConfigError as e:
        logger.error(f"설정 오류: {e}")
        return EXIT_CODES["config"]

    except Exception as e:
        logger.error(f"실행 중 오류가 발생했습니다: {e}")
        logger.error("오류 상세 정보:", exc_info=True)
        return EXIT_CODES["error"]


if __name__ == "__main__":
    sys.exit(main())
