"""Append-only JSONL results log, replay, and plot-ready CSV emitters."""

from __future__ import annotations

import json
import logging
import threading
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from . import __version__
from .dataset import write_csv
from .evolution import Candidate, FitnessVector, RunStats, pareto_front

logger = logging.getLogger(__name__)

LOG_FORMAT = "codesign-results/1"
HW_OBJECTIVES = ("outputs_per_s", "latency_s", "effective_gops", "potential_gops", "efficiency", "total_time_s",
                 "flops")
REPORT_COLUMNS = ("accuracy", "outputs_per_s", "efficiency", "effective_gops", "potential_gops", "latency_s")

Archive = List[Tuple[Candidate, FitnessVector]]


class LogError(ValueError):
    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message if index is None else f"record {index}: {message}")
        self.index = index


class ResultsLog:
    """Single writer; records from concurrent evaluations are serialized by a lock."""

    def __init__(self, path: Union[str, Path], config: dict, run_id: str = "run", mode: str = "w"):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._fh = open(self.path, mode, encoding="utf-8")
        self._write({"type": "header", "format": LOG_FORMAT, "version": __version__, "run_id": run_id,
                     "config": config})

    def _write(self, rec: dict):
        line = json.dumps(rec, sort_keys=True, allow_nan=False)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def record(self, rec: dict):
        self._write({"type": "eval", **rec})

    def close(self):
        with self._lock:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_log(path: Union[str, Path]) -> List[dict]:
    """All records of a (possibly concatenated) log, headers included."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise LogError(f"not valid JSON ({e.msg})", i) from None
            if not isinstance(rec, dict) or rec.get("type") not in ("header", "eval"):
                raise LogError("unknown record type", i)
            if rec["type"] == "eval" and not all(k in rec for k in ("candidate", "fitness")):
                raise LogError("eval record lacks candidate or fitness", i)
            rec["_index"] = i
            out.append(rec)
    return out


def replay(path: Union[str, Path]) -> Archive:
    archive = []
    for rec in read_log(path):
        if rec["type"] != "eval":
            continue
        try:
            archive.append((Candidate.from_dict(rec["candidate"]), FitnessVector.from_dict(rec["fitness"])))
        except (KeyError, TypeError, ValueError) as e:
            raise LogError(f"malformed eval record ({e})", rec["_index"]) from None
    return archive


def log_headers(path: Union[str, Path]) -> List[dict]:
    return [r for r in read_log(path) if r["type"] == "header"]


# -- metrics and CSV --------------------------------------------------------

def metrics(fv: FitnessVector) -> Dict[str, float]:
    """Objective values plus everything the workers reported as numbers."""
    out: Dict[str, float] = {}
    hw = fv.payload.get("workers", {}).get("hardware_db", {})
    for src in (hw, fv.payload.get("metrics", {}), fv.values):
        for k, v in src.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                out[k] = float(v)
    return out


def _column(name: str, target: Optional[str]) -> str:
    return f"{name}_{target}" if target and name in HW_OBJECTIVES else name


def _num(v: float) -> str:
    return repr(float(v))


def _cand_columns(c: Candidate) -> List[str]:
    g = c.grid
    return [str(int(c.id[1:]) if c.id[1:].isdigit() else -1), str(len(c.genome.hidden)),
            str(c.genome.total_neurons), str(c.genome.n_params), str(g.rows), str(g.cols), str(g.vec_width),
            str(g.interleave_rows), str(g.interleave_cols), str(c.batch_m)]


_CAND_HEADER = ["candidate_id", "layers", "neurons", "params", "rows", "cols", "vec_width", "interleave_rows",
                "interleave_cols", "batch_m"]


def sort_front(front: Archive) -> Archive:
    if not front:
        return []
    names = list(front[0][1].senses)
    return sorted(front, key=lambda cf: ([-v for v in cf[1].oriented(names)], cf[0].key()))


def front_table(front: Archive, target: Optional[str] = None) -> Tuple[List[str], List[List[str]]]:
    front = sort_front(front)
    names = list(front[0][1].senses) if front else []
    header = ["candidate"] + [_column(n, target) for n in names] + _CAND_HEADER
    rows = [[c.label()] + [_num(fv.values[n]) for n in names] + _cand_columns(c) for c, fv in front]
    return header, rows


def write_pareto(path: Union[str, Path], archive: Archive, target: Optional[str] = None) -> Archive:
    front = pareto_front(archive)
    if not front:
        logger.warning("no successful evaluations; writing an empty front")
    header, rows = front_table(front, target)
    if not header:
        header = ["candidate"]
    write_csv(path, header, rows)
    return front


def write_report(path: Union[str, Path], archive: Archive, target: Optional[str] = None) -> int:
    """One row per successful evaluation with the scatter columns; failures counted in a footer."""
    ok = [(c, fv, metrics(fv)) for c, fv in archive if fv.ok]
    failed = len(archive) - len(ok)
    cols = [k for k in REPORT_COLUMNS if ok and all(k in m for _, _, m in ok)]
    header = ["candidate"] + [_column(k, target) for k in cols] + _CAND_HEADER
    rows = [[c.label()] + [_num(m[k]) for k in cols] + _cand_columns(c) for c, _, m in ok]
    write_csv(path, header, rows, footer=[f"failed={failed}", f"ok={len(ok)}"])
    return len(rows)


def write_stats(path: Union[str, Path], stats: RunStats):
    Path(path).write_text(json.dumps(stats.table(), indent=2, sort_keys=True) + "\n")


def stats_from_archive(archive: Archive) -> RunStats:
    st = RunStats()
    for _, fv in archive:
        st.models_evaluated += 1
        st.total_eval_s += fv.eval_seconds
        st.failed += not fv.ok
    return st


def front_dominates(a: Iterable[Sequence[float]], b: Iterable[Sequence[float]]) -> bool:
    """Set-wise weak dominance on oriented (maximize) points: every b is matched or beaten by some a."""
    a = [list(p) for p in a]
    for q in b:
        if not any(all(x >= y for x, y in zip(p, q)) for p in a):
            return False
    return True

