"""
리포트 생성 모듈 - 자기 서술적 JSON 리포트와 HTML 요약
"""
import json
import math
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader

from .config import OUTPUT_DIR, REPORT_CONFIG, TEMPLATE_DIR

logger = logging.getLogger(__name__)


def to_jsonable(value: Any) -> Any:
    """numpy/pandas/Path 값을 JSON 으로 직렬화 가능한 값으로 바꿉니다 (NaN/inf 는 null)."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, pd.DataFrame):
        return [to_jsonable(row) for row in value.to_dict(orient="records")]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


class ReportGenerator:
    """JSON 리포트 + HTML 요약 생성 클래스"""

    def __init__(self, output_dir: Path = OUTPUT_DIR, template_dir: Path = TEMPLATE_DIR):
        self.report_dir = Path(output_dir) / "report"
        self.report_config = REPORT_CONFIG

        # Jinja2 환경 설정
        self.env = Environment(
            loader=FileSystemLoader(str(template_dir)),
            autoescape=True,
        )

    def build_document(self, config, result, artifacts: Dict[str, Path]) -> Dict[str, Any]:
        """설정 요약, 통계, 판정, 오류, 허용 오차를 담은 리포트 문서"""
        document = {
            "title": self.report_config["title"],
            "version": self.report_config["version"],
            "generated_at": datetime.now().isoformat(timespec="seconds"),
            "reproduction_command": self.report_config["reproduction_command"],
            "selector": config.selector,
            "seed": config.seed,
            "status": result.status,
            "config": config.echo,
            "grid": config.grid.grid.describe(),
            "tolerances": result.tolerances,
            "results": result.results,
            "verdicts": result.verdicts,
            "warnings": result.warnings,
            "errors": result.errors,
            "artifacts": {name: str(path) for name, path in artifacts.items()},
        }
        return to_jsonable(document)

    def write_json(self, document: Dict[str, Any]) -> Path:
        self.report_dir.mkdir(parents=True, exist_ok=True)
        path = self.report_dir / "report.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(document, f, ensure_ascii=False, indent=2, allow_nan=False)
        logger.info(f"JSON 리포트 생성 완료: {path}")
        return path

    def write_html(self, document: Dict[str, Any]) -> Path:
        """HTML 요약을 생성합니다."""
        try:
            template = self.env.get_template("report.html")
            html_content = template.render(
                doc=document,
                pretty=lambda value: json.dumps(value, ensure_ascii=False, indent=2),
            )
        except Exception as e:
            logger.error(f"리포트 생성 중 오류 발생: {e}")
            raise

        self.report_dir.mkdir(parents=True, exist_ok=True)
        path = self.report_dir / "report.html"
        with open(path, "w", encoding="utf-8") as f:
            f.write(html_content)
        logger.info(f"HTML 리포트 생성 완료: {path}")
        return path
