"""CSV / JSON / flat-binary serialization of matrices, signals, observations and results.

CSV files carry their metadata in leading ``# key=value`` comment lines,
then a column header, then data.  Floats are written with ``repr`` so a
round trip is exact.
"""
import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

_MAGIC = b"PCSMAT1\n"


def _fmt(x):
    return repr(float(x))


def _write_meta(fh, meta):
    for key, val in meta.items():
        fh.write(f"# {key}={val}\n")


def _read_meta_and_rows(path):
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader, None)
    rows = [r for r in reader]
    return meta, header, rows


def _opt_int(val):
    return None if val in (None, "", "None") else int(val)


# -- matrices ---------------------------------------------------------------

def save_matrix(path, entries, a_lo, a_hi, seed=None, fmt="csv"):
    """Row-major matrix with header ``(n, p, a_lo, a_hi, seed)``.

    ``fmt="binary"`` writes a magic line, a length-prefixed JSON header and
    the entries as little-endian float64.
    """
    X = np.asarray(entries, dtype=float)
    n, p = X.shape
    meta = {"n": n, "p": p, "a_lo": _fmt(a_lo), "a_hi": _fmt(a_hi), "seed": seed}
    if fmt == "binary":
        head = json.dumps(meta).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(head)))
            fh.write(head)
            fh.write(np.ascontiguousarray(X, dtype="<f8").tobytes())
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            _write_meta(fh, meta)
            w = csv.writer(fh, lineterminator="\n")
            for row in X:
                w.writerow([_fmt(v) for v in row])
    else:
        raise ConfigurationError(f"unknown matrix format {fmt!r}")


def load_matrix(path):
    """Return ``(entries, meta)`` from a file written by :func:`save_matrix`."""
    with open(path, "rb") as fh:
        start = fh.read(len(_MAGIC))
        if start == _MAGIC:
            (size,) = struct.unpack("<I", fh.read(4))
            meta = json.loads(fh.read(size).decode())
            X = np.frombuffer(fh.read(), dtype="<f8").astype(float)
            X = X.reshape(meta["n"], meta["p"])
            meta["a_lo"] = float(meta["a_lo"])
            meta["a_hi"] = float(meta["a_hi"])
            return X, meta
    meta = {}
    data = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            elif line.strip():
                data.append([float(v) for v in line.split(",")])
    X = np.array(data, dtype=float)
    out = {"n": int(meta["n"]), "p": int(meta["p"]), "a_lo": float(meta["a_lo"]),
           "a_hi": float(meta["a_hi"]), "seed": _opt_int(meta.get("seed"))}
    if X.shape != (out["n"], out["p"]):
        raise ConfigurationError(f"matrix body has shape {X.shape}, header says ({out['n']}, {out['p']})")
    return X, out


# -- signals and observations ----------------------------------------------

def save_signal(path, theta, f, p, q, R_q, basis_kind, seed):
    with open(path, "w", newline="") as fh:
        _write_meta(fh, {"p": p, "q": _fmt(q), "R_q": _fmt(R_q), "basis": basis_kind, "seed": seed})
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "theta", "f"])
        for i, (t, v) in enumerate(zip(theta, f)):
            w.writerow([i, _fmt(t), _fmt(v)])


def load_signal(path):
    """Return ``(theta, f, meta)``."""
    meta, _, rows = _read_meta_and_rows(path)
    theta = np.array([float(r[1]) for r in rows])
    f = np.array([float(r[2]) for r in rows])
    out = {"p": int(meta["p"]), "q": float(meta["q"]), "R_q": float(meta["R_q"]),
           "basis": meta["basis"], "seed": _opt_int(meta.get("seed"))}
    return theta, f, out


def save_observation(path, y, T, seed):
    with open(path, "w", newline="") as fh:
        _write_meta(fh, {"n": len(y), "T": _fmt(T), "seed": seed})
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "count"])
        for i, c in enumerate(y):
            w.writerow([i, int(c)])


def load_observation(path):
    """Return ``(y, meta)``."""
    meta, _, rows = _read_meta_and_rows(path)
    y = np.array([int(r[1]) for r in rows], dtype=np.int64)
    return y, {"n": int(meta["n"]), "T": float(meta["T"]), "seed": _opt_int(meta.get("seed"))}


# -- estimates --------------------------------------------------------------

def save_estimate(path, result, fmt="json"):
    """JSON summary of an :class:`EstimateResult` (plus coefficient arrays),
    or a CSV of ``(index, theta_hat, f_hat)`` with the summary in the header."""
    summary = result.to_dict()
    if fmt == "json":
        doc = dict(summary)
        doc["theta_hat"] = [float(v) for v in result.theta_hat]
        doc["f_hat"] = [float(v) for v in result.f_hat]
        Path(path).write_text(json.dumps(doc, indent=2, allow_nan=True) + "\n")
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            _write_meta(fh, summary)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "theta_hat", "f_hat"])
            for i, (t, v) in enumerate(zip(result.theta_hat, result.f_hat)):
                w.writerow([i, _fmt(t), _fmt(v)])
    else:
        raise ConfigurationError(f"unknown estimate format {fmt!r}")


# -- sweep records ----------------------------------------------------------

RECORD_FIELDS = ("axis", "axis_value", "solver", "mean_mse", "std_mse", "trials", "mean_lambda", "mean_iterations")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v)


def table_to_csv(fields, rows):
    """CSV text with header ``fields``; rows are dicts or objects with ``to_dict``."""
    lines = [",".join(fields)]
    for r in rows:
        d = r if isinstance(r, dict) else r.to_dict()
        lines.append(",".join(_cell(d[k]) for k in fields))
    return "\n".join(lines) + "\n"


def records_to_csv(records):
    """CSV text (header plus one row per record) in the given order."""
    return table_to_csv(RECORD_FIELDS, records)


def emit_csv(records, path):
    Path(path).write_text(records_to_csv(records))


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def emit_json(records, path, config=None):
    doc = {
        "config": config.to_dict() if hasattr(config, "to_dict") else config,
        "records": [{k: _jsonable(v) for k, v in (r if isinstance(r, dict) else r.to_dict()).items()} for r in records],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_records_json(path):
    """Return ``(records, config)`` from :func:`emit_json` output; records are dicts."""
    doc = json.loads(Path(path).read_text())
    return doc["records"], doc.get("config")


def read_records_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = []
        for row in reader:
            rec = dict(row)
            for key in ("axis_value", "mean_mse", "std_mse", "mean_lambda", "mean_iterations"):
                rec[key] = float(rec[key])
            rec["trials"] = int(rec["trials"])
            out.append(rec)
    return out
