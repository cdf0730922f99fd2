"""
Storage module for run reports, embedding dumps and label files.
"""
import json
import logging
import os
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.utils import ensure_directory_exists
from data.models import RunReport

logger = logging.getLogger(__name__)

DUMP_FLOAT_FORMAT = "%.9g"


class StorageManager:
    """Handles saving and loading of run artifacts."""

    def __init__(self, base_dir: str = "sanet_runs"):
        self.base_dir = base_dir
        self.reports_dir = os.path.join(base_dir, "reports")
        self.dumps_dir = os.path.join(base_dir, "dumps")

    def _ensure_directories(self):
        """Ensure storage directories exist."""
        for directory in [self.base_dir, self.reports_dir, self.dumps_dir]:
            ensure_directory_exists(directory)

    def report_path(self, name: str) -> str:
        return os.path.join(self.reports_dir, f"{name}.json")

    def save_report(self, report: RunReport, path: Optional[str] = None) -> str:
        """
        Save a run report as JSON.

        Args:
            report: RunReport to save
            path: Target file; defaults to reports/<config name>_<timestamp>.json

        Returns:
            Path to the saved report, or "" on failure
        """
        if path is None:
            self._ensure_directories()
            stamp = datetime.now().strftime('%Y%m%d_%H%M%S')
            name = report.config.get('name') or 'run'
            path = self.report_path(f"{name}_{stamp}")
        else:
            ensure_directory_exists(os.path.dirname(path))

        try:
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(report.to_dict(), f, indent=2, ensure_ascii=False)
            logger.info("report written to %s", path)
            return path
        except (OSError, TypeError, ValueError) as e:
            logger.error("error saving report to %s: %s", path, e)
            return ""

    def load_report(self, path: str) -> Optional[RunReport]:
        """
        Load a run report.

        Returns:
            RunReport or None if not found/error
        """
        if not os.path.exists(path):
            return None
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
            return RunReport.from_dict(data)
        except (OSError, ValueError, KeyError) as e:
            logger.error("error loading report %s: %s", path, e)
            return None

    def list_reports(self) -> List[Dict]:
        """
        List stored reports with metadata, newest first.
        """
        reports = []
        if not os.path.exists(self.reports_dir):
            return reports

        for filename in os.listdir(self.reports_dir):
            if not filename.endswith('.json'):
                continue
            filepath = os.path.join(self.reports_dir, filename)
            try:
                stat = os.stat(filepath)
                with open(filepath, 'r', encoding='utf-8') as f:
                    data = json.load(f)
                metrics = data.get('metrics') or {}
                reports.append({
                    'name': filename[:-5],
                    'config_name': data.get('config', {}).get('name', ''),
                    'n_images': data.get('n_images', 0),
                    'acc': metrics.get('acc'),
                    'created_at': data.get('created_at', ''),
                    'file_size': stat.st_size,
                    'file_modified': datetime.fromtimestamp(stat.st_mtime).isoformat(),
                })
            except (OSError, ValueError) as e:
                logger.warning("error reading report %s: %s", filename, e)

        reports.sort(key=lambda x: x.get('file_modified', ''), reverse=True)
        return reports

    def delete_report(self, name: str) -> bool:
        filepath = self.report_path(name)
        try:
            if os.path.exists(filepath):
                os.remove(filepath)
                return True
        except OSError as e:
            logger.error("error deleting report %s: %s", name, e)
        return False

    def save_embedding_dump(self, rows: np.ndarray, labels: Optional[Sequence[int]],
                            output_path: str) -> bool:
        """
        Write embedding rows as CSV with a one-line header.

        Columns are ``label`` (when labels are given) then ``e0``, ``e1``, ...
        with 9 significant digits.
        """
        rows = np.asarray(rows, dtype=np.float64)
        frame = pd.DataFrame(rows, columns=[f"e{j}" for j in range(rows.shape[1])])
        if labels is not None:
            frame.insert(0, 'label', np.asarray(labels, dtype=np.int64))
        try:
            ensure_directory_exists(os.path.dirname(output_path))
            frame.to_csv(output_path, index=False, float_format=DUMP_FLOAT_FORMAT)
            return True
        except OSError as e:
            logger.error("error saving embedding dump: %s", e)
            return False

    def load_embedding_dump(self, csv_path: str) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        """
        Read an embedding dump.

        Returns:
            (rows, labels); labels is None when the dump has no label column,
            and both are None on error
        """
        try:
            frame = pd.read_csv(csv_path)
        except (OSError, ValueError) as e:
            logger.error("error loading embedding dump %s: %s", csv_path, e)
            return None, None
        labels = frame.pop('label').to_numpy(dtype=np.int64) if 'label' in frame else None
        return frame.to_numpy(dtype=np.float64), labels

    def save_labels(self, labels: Sequence[int], output_path: str) -> bool:
        """One integer label per line."""
        try:
            ensure_directory_exists(os.path.dirname(output_path))
            pd.Series(np.asarray(labels, dtype=np.int64)).to_csv(
                output_path, index=False, header=False)
            return True
        except OSError as e:
            logger.error("error saving labels: %s", e)
            return False

    def load_labels(self, path: str) -> Optional[np.ndarray]:
        """
        Read a label file with one integer per line.

        Returns:
            int64 array, or None if the file is missing or malformed
        """
        try:
            frame = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True)
        except pd.errors.EmptyDataError:
            return np.zeros(0, dtype=np.int64)
        except OSError as e:
            logger.error("error loading labels %s: %s", path, e)
            return None
        if frame.shape[1] != 1:
            logger.error("label file %s must hold one value per line", path)
            return None
        try:
            return np.array([int(v.strip()) for v in frame[0]], dtype=np.int64)
        except (ValueError, AttributeError) as e:
            logger.error("label file %s holds a non-integer value: %s", path, e)
            return None
