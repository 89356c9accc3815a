"""Line-delimited JSON records: flashes, trajectory samples, density snapshots."""

import csv
import hashlib
import json
import math
import os

SCHEMAS = {
    "flash": {"run": int, "t": float, "x": list, "label": int},
    "trajectory": {"run": int, "t": float, "q": list},
    "density": {"t": float, "grid": dict, "values": list},
}


class RecordError(ValueError):
    pass


class IoError(OSError):
    pass


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def validate_record(rec, kind):
    schema = SCHEMAS[kind]
    if not isinstance(rec, dict) or set(rec) != set(schema):
        raise RecordError(f"{kind} record must have exactly the keys {sorted(schema)}: {rec!r}")
    for key, typ in schema.items():
        v = rec[key]
        if typ is int and not (isinstance(v, int) and not isinstance(v, bool)):
            raise RecordError(f"{kind}.{key} must be an integer, got {v!r}")
        if typ is float and not _is_real(v):
            raise RecordError(f"{kind}.{key} must be a finite number, got {v!r}")
        if typ is list and not (isinstance(v, list) and all(_is_real(x) for x in v)):
            raise RecordError(f"{kind}.{key} must be a list of finite numbers, got {v!r}")
        if typ is dict and not isinstance(v, dict):
            raise RecordError(f"{kind}.{key} must be a mapping")
    if kind == "flash" and rec["label"] < 1:
        raise RecordError("flash labels start at 1")


def _clean(v):
    """Plain Python types for JSON (numpy scalars and arrays included)."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if hasattr(v, "tolist"):
        return _clean(v.tolist())
    return v


def encode(rec):
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def write_records(records, path, kind):
    """Validate every record, then write one JSON object per line and fsync."""
    recs = [_clean(r) for r in records]
    for r in recs:
        validate_record(r, kind)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for r in recs:
                fh.write(encode(r))
                fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return len(recs)


def read_records(path, kind=None):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                if kind:
                    validate_record(r, kind)
                out.append(r)
    return out


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())


def export_csv(records, kind, path):
    """Flatten records to CSV; vector fields become numbered columns."""
    if kind == "density":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "index", "value"])
            for r in records:
                for i, v in enumerate(r["values"]):
                    w.writerow([r["t"], i, v])
        return
    vec = "x" if kind == "flash" else "q"
    width = max((len(r[vec]) for r in records), default=0)
    head = ["run", "t"] + [f"{vec}{i}" for i in range(width)] + (["label"] if kind == "flash" else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        for r in records:
            row = [r["run"], r["t"]] + list(r[vec]) + [""] * (width - len(r[vec]))
            if kind == "flash":
                row.append(r["label"])
            w.writerow(row)
