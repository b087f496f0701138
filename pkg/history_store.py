"""
History Store Module for LCDA.
Versioned line-delimited JSON files: a header line naming the schema,
then one record per line. Used for search histories and LLM transcripts.
"""

import json
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Type

from config import HISTORY_SCHEMA, HISTORY_SCHEMA_VERSION
from errors import HistoryError, LcdaError
from logger import get_logger

logger = get_logger(__name__)


def dump_line(record: Dict) -> str:
    """Canonical one-line JSON; key order is fixed so reruns are byte-identical."""
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def header_record(schema: str, version: int) -> Dict:
    return {"format": schema, "version": version}


def read_jsonl(path: Path, schema: str, version: int,
               error_cls: Type[LcdaError] = HistoryError) -> Tuple[List[Dict], bool]:
    """
    Read a versioned JSONL file.

    A final line without a newline that does not parse is treated as the
    remains of an interrupted write and dropped with a warning. Any other
    bad line is an error.

    Returns:
        (records, had_partial_tail); an empty file yields no records

    Raises:
        error_cls: on a missing or mismatched header or a malformed line
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise error_cls(f"Cannot read {path}: {e}")
    if not text:
        return [], False

    lines = text.split("\n")
    complete_tail = lines[-1] == ""
    if complete_tail:
        lines = lines[:-1]

    records: List[Dict] = []
    partial = False
    for number, line in enumerate(lines, start=1):
        try:
            value = json.loads(line)
        except ValueError:
            if number == len(lines) and not complete_tail:
                logger.warning(f"Dropping partial trailing line {number} of {path}")
                partial = True
                break
            raise error_cls(f"{path}: line {number} is not valid JSON")
        if not isinstance(value, dict):
            raise error_cls(f"{path}: line {number} is not a JSON object")
        records.append(value)

    if not records:
        if partial:
            return [], True
        raise error_cls(f"{path}: missing header line")
    header = records[0]
    if header.get("format") != schema:
        raise error_cls(f"{path}: expected format '{schema}', found {header.get('format')!r}")
    if header.get("version") != version:
        raise error_cls(f"{path}: unsupported {schema} version {header.get('version')!r} (expected {version})")
    return records[1:], partial


class JsonlWriter:
    """
    Appends records to a versioned JSONL file, flushing after every line.

    With resume=True an existing file is re-read, a partial trailing line is
    trimmed away and new records continue after the complete ones.
    """

    def __init__(self, path: Path, schema: str, version: int, resume: bool = False,
                 error_cls: Type[LcdaError] = HistoryError):
        self.path = Path(path)
        self.schema = schema
        self.version = version
        self.error_cls = error_cls
        self.existing: List[Dict] = []
        self.path.parent.mkdir(parents=True, exist_ok=True)

        if resume and self.path.exists() and self.path.stat().st_size > 0:
            self.existing, partial = read_jsonl(self.path, schema, version, error_cls)
            if partial:
                self._rewrite(self.existing)
            logger.info(f"Resuming {self.path} with {len(self.existing)} existing records")
        else:
            self._rewrite([])

    def _rewrite(self, records: List[Dict]):
        with open(self.path, 'w', encoding='utf-8', newline="\n") as f:
            f.write(dump_line(header_record(self.schema, self.version)) + "\n")
            for record in records:
                f.write(dump_line(record) + "\n")

    def append(self, record: Dict):
        with open(self.path, 'a', encoding='utf-8', newline="\n") as f:
            f.write(dump_line(record) + "\n")
            f.flush()


class HistoryStore(JsonlWriter):
    """Append-only search history: one evaluated episode per line."""

    def __init__(self, path: Path, resume: bool = False):
        super().__init__(path, HISTORY_SCHEMA, HISTORY_SCHEMA_VERSION, resume, HistoryError)


def load_history_records(path: Path) -> List[Dict]:
    """
    Records of a history file, in episode order.

    Raises:
        HistoryError: if the file is malformed or has another schema version
    """
    records, _ = read_jsonl(path, HISTORY_SCHEMA, HISTORY_SCHEMA_VERSION, HistoryError)
    return records


def write_json(path: Path, data, default: Optional[Callable] = None):
    """Pretty-printed JSON artifact (summary, pareto, curve, enumeration)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True, default=default)
        f.write("\n")
    logger.debug(f"Wrote {path}")
