import hashlib
import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_THREADS_ENV = "MODECHOICE_THREADS"


def derive_seed(seed, tag, index=0):
    """Derive an independent 64-bit seed from (master seed, purpose tag, index).

    The derivation is a SHA-256 hash so streams for different purposes or
    indices never overlap and do not depend on scheduling order.
    """
    payload = f"{int(seed)}|{tag}|{int(index)}".encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


def rng_for(seed, tag, index=0):
    return np.random.default_rng(derive_seed(seed, tag, index))


def n_workers():
    raw = os.environ.get(_THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def parallel_map(fn, items):
    """Map ``fn`` over ``items``; results come back in input order."""
    items = list(items)
    workers = min(n_workers(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def atomic_write_text(path, text):
    """Write via a temporary file in the same directory followed by rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_number(x):
    """Shortest round-trip text for a number; integral floats print as ints."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isfinite(x) and x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def csv_text(header, rows):
    """Render rows as CSV text; numbers use :func:`format_number`."""
    out = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append('"' + v.replace('"', '""') + '"' if ("," in v or '"' in v) else v)
            elif v is None:
                cells.append("")
            else:
                cells.append(format_number(v))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def write_csv_rows(path, header, rows):
    atomic_write_text(path, csv_text(header, rows))


def config_digest(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()
