"""运行记录落盘

浮点数统一用 repr() 输出（最短可往返表示），meta.json 按键排序且不含耗时，
相同配置重跑得到逐字节相同的文件。每个文件先写临时文件再 rename。
"""

import csv
import io
import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..dynamics.base import RunRecord
from ..errors import RecordWriteError
from .metrics import MarginalHistogram

logger = logging.getLogger(__name__)


def fmt(value: Any) -> str:
    """CSV 单元格格式"""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return '' if value is None else str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buffer.getvalue()


def atomic_write(path: str, text: str) -> None:
    """写临时文件后 rename"""
    tmp = f"{path}.tmp"
    try:
        with open(tmp, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError as e:
        raise RecordWriteError(f"cannot write {path}: {e}") from e


def trace_header(dim: int) -> List[str]:
    return ['iteration', *[f'mean_{i}' for i in range(dim)], 'V_mean', 'spread', 'accept_rate']


def trace_csv(record: RunRecord) -> str:
    dim = record.rows[0].mean.shape[0] if record.rows else 0
    rows = ([row.iteration, *row.mean, row.v_mean, row.spread, row.accept_rate] for row in record.rows)
    return csv_text(trace_header(dim), rows)


def samples_csv(samples: np.ndarray) -> str:
    return csv_text([f'x_{i}' for i in range(samples.shape[1])], samples.tolist())


def ensemble_csv(record: RunRecord) -> str:
    dim = record.ensembles[0][1].shape[1]
    rows = ([iteration, member, *point]
            for iteration, ensemble in record.ensembles
            for member, point in enumerate(ensemble))
    return csv_text(['iteration', 'member', *[f'x_{i}' for i in range(dim)]], rows)


def marginal_csv(sample: MarginalHistogram, reference: Optional[MarginalHistogram]) -> str:
    header = ['bin_lower', 'bin_upper', 'count', 'sample_density']
    if reference is not None:
        header.append('reference_density')
    rows = []
    for i in range(sample.counts.shape[0]):
        row = [sample.edges[i], sample.edges[i + 1], int(sample.counts[i]), sample.densities[i]]
        if reference is not None:
            row.append(reference.densities[i])
        rows.append(row)
    return csv_text(header, rows)


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def meta_json(record: RunRecord, extra: Optional[Dict[str, Any]] = None) -> str:
    meta = record.to_dict()
    meta['config'] = record.config
    meta['burn_in'] = record.burn_in
    if extra:
        meta.update(extra)
    return json.dumps(_jsonable(meta), sort_keys=True, indent=2, allow_nan=True) + '\n'


def write_record(record: RunRecord, directory: str,
                 marginal: Optional[MarginalHistogram] = None,
                 reference: Optional[MarginalHistogram] = None,
                 extra: Optional[Dict[str, Any]] = None) -> List[str]:
    """写出一次运行的全部文件

    Args:
        record: 运行记录
        directory: 输出目录，不存在时创建
        marginal: 样本边缘直方图（采样器）
        reference: 参考边缘直方图
        extra: 追加到 meta.json 的键值

    Returns:
        List[str]: 写出的文件路径

    Raises:
        RecordWriteError: 目录或文件无法写入
    """
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as e:
        raise RecordWriteError(f"cannot create {directory}: {e}") from e

    files = {'trace.csv': trace_csv(record)}
    if record.samples is not None:
        files['samples.csv'] = samples_csv(record.samples)
    if record.ensembles:
        files['ensemble.csv'] = ensemble_csv(record)
    if marginal is not None:
        files['marginal.csv'] = marginal_csv(marginal, reference)
    files['meta.json'] = meta_json(record, extra)

    written = []
    for name, text in files.items():
        path = os.path.join(directory, name)
        atomic_write(path, text)
        written.append(path)
    logger.info(f"已写出 {len(written)} 个文件到 {directory}")
    return written
