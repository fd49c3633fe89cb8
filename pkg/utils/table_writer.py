# utils/table_writer.py
import logging
import math
import os
from datetime import datetime

import pandas as pd

from config import settings
from core.schemas import INF, SweepTable
from utils.error_handler import OutputWriteError

logger = logging.getLogger(__name__)


class TableWriter:
    def __init__(self, output_dir: str = settings.OUTPUT_DIR):
        self.output_dir = output_dir

    def default_path(self, table: SweepTable, extension: str = "csv") -> str:
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        return os.path.join(self.output_dir, f"sweep_{table.kind}_{timestamp}.{extension}")

    def save_table(self, table: SweepTable, path: str = None) -> str:
        """
        스윕 테이블을 CSV(기본) 또는 Excel(.xlsx)로 저장합니다.

        CSV: 헤더 행 포함, 유효숫자 12자리, LF 줄바꿈, 빈 칸은 값 없음, 무한대는 'inf'.

        Returns:
            저장된 파일 경로

        Raises:
            OutputWriteError: 디렉터리 생성이나 파일 쓰기에 실패한 경우
        """
        path = path or self.default_path(table)
        df = table.to_frame()

        try:
            directory = os.path.dirname(path)
            if directory and not os.path.exists(directory):
                os.makedirs(directory)
                logger.info(f"Created output directory: {directory}")

            if path.lower().endswith(".xlsx"):
                # 엑셀 셀은 무한대를 담지 못함
                df["critical_lambda"] = df["critical_lambda"].map(lambda v: INF if v == math.inf else v)
                df.to_excel(path, index=False, engine="openpyxl", sheet_name=table.kind)
                logger.info(f"Sweep table saved to Excel: {path}")
            else:
                df.to_csv(
                    path,
                    index=False,
                    float_format=settings.CSV_FLOAT_FORMAT,
                    lineterminator=settings.CSV_LINE_TERMINATOR,
                    na_rep="",
                )
                logger.info(f"Sweep table saved to CSV: {path} ({len(df)} rows)")
        except (OSError, ValueError) as e:
            logger.error(f"Failed to save sweep table: {e}")
            raise OutputWriteError(f"cannot write {path}: {e}") from e

        return path

    def read_table(self, path: str, kind: str, axes) -> SweepTable:
        """save_table 로 쓴 파일을 SweepTable 로 되읽습니다."""
        if path.lower().endswith(".xlsx"):
            frame = pd.read_excel(path, engine="openpyxl", dtype={"label": str, "status": str})
            return SweepTable.from_frame(frame, kind, axes)
        return SweepTable.from_csv(path, kind, axes)
