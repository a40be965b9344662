import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from src import __version__

SCHEMA = "pmp-qoc/1"
FLOAT_FORMAT = "%.17g"


def _plain(obj):
    """JSON fallback for numpy scalars, arrays and complex numbers."""
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist()) if np.iscomplexobj(obj) else obj.tolist()
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, list):
        return [_plain(x) for x in obj]
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(payload: dict) -> str:
    body = {"schema": SCHEMA, **payload}
    return json.dumps(body, indent=2, default=_plain, allow_nan=True) + "\n"


class OutputWriter:
    """Writes run artifacts into one directory, each file via temp file + rename."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.written: list[Path] = []

    def csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.out_dir / name
        text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\r\n")
        _atomic_write(path, text)
        self.written.append(path)
        logger.debug(f"wrote {path} ({len(frame)} rows)")
        return path

    def json(self, name: str, payload: dict) -> Path:
        path = self.out_dir / name
        _atomic_write(path, dumps(payload))
        self.written.append(path)
        logger.debug(f"wrote {path}")
        return path


@dataclass
class RunManifest:
    subcommand: str
    scenario: str | None
    parameters: dict = field(default_factory=dict)
    output_dir: str = ""
    seed: int | None = None
    version: str = __version__
    wall_clock_seconds: float = 0.0
    exit_code: int = 0
    outputs: list[str] = field(default_factory=list)

    def write(self, writer: OutputWriter) -> Path:
        self.outputs = sorted(p.name for p in writer.written)
        return writer.json("manifest.json", asdict(self))


def load_manifest(path: str | Path) -> RunManifest:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    data.pop("schema", None)
    return RunManifest(**data)
