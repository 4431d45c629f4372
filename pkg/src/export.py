"""
CSV 내보내기 모듈
필드, 기울기 표, 이중화 표 등 그래프용 표 데이터를 CSV 로 저장합니다.
"""
import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .config import OUTPUT_DIR
from .grid import ScalarField

logger = logging.getLogger(__name__)


def shortest_repr(value: float) -> str:
    """최단 왕복 십진 표현"""
    return repr(float(value))


def field_frame(field: ScalarField, mask: Optional[np.ndarray] = None) -> pd.DataFrame:
    """x[,y],value[,mask] 열을 가진 표"""
    grid = field.grid
    frame = pd.DataFrame({"x": grid.coords[:, 0]})
    if grid.dim == 2:
        frame["y"] = grid.coords[:, 1]
    frame["value"] = field.values
    if mask is not None:
        frame["mask"] = np.asarray(mask, dtype=bool).astype(int)
    return frame


class ExportGenerator:
    """실험 결과를 CSV 로 저장하는 클래스"""

    def __init__(self, output_dir: Path = OUTPUT_DIR):
        """
        Args:
            output_dir: 산출물 루트 디렉토리 (필드는 그 아래 fields/ 에 저장)
        """
        self.output_dir = Path(output_dir)
        self.fields_dir = self.output_dir / "fields"

    def _write(self, name: str, frame: pd.DataFrame, directory: Path) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{name}.csv"
        try:
            frame.to_csv(path, index=False, float_format=shortest_repr, lineterminator="\n")
        except OSError as e:
            logger.error(f"CSV 저장 실패: {path} ({e})")
            raise
        logger.info(f"CSV 저장: {path} ({len(frame)} 행)")
        return path

    def write_field(self, name: str, field: ScalarField, mask: Optional[np.ndarray] = None) -> Path:
        """
        격자 필드를 fields/<name>.csv 로 저장합니다.

        Args:
            name: 파일 이름 (확장자 제외)
            field: 저장할 필드
            mask: 노드별 마스크 (있으면 0/1 mask 열 추가)

        Returns:
            저장된 CSV 파일 경로
        """
        return self._write(name, field_frame(field, mask), self.fields_dir)

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        """
        표를 출력 디렉토리 바로 아래 <name>.csv 로 저장합니다.

        Args:
            name: 파일 이름 (확장자 제외)
            frame: 저장할 표

        Returns:
            저장된 CSV 파일 경로
        """
        return self._write(name, frame, self.output_dir)

    def write_slope(self, frame: pd.DataFrame, name: str = "slope") -> Path:
        """r,slope 열"""
        return self.write_table(name, frame[["r", "slope"]])

    def write_doubling(self, frame: pd.DataFrame, name: str = "doubling") -> Path:
        """eps,gap,wmax 열"""
        return self.write_table(name, frame[["eps", "gap", "wmax"]])
