"""On-disk formats: trace files, checkpoints, CSV tables and key=value configs.

Trace file (little-endian throughout)::

    magic      4s   b"EMTR"
    version    H    1
    n_samples  Q
    sample_rate d
    clock_freq d
    trigger    q    -1 when absent
    key_len    Q    0 when no key
    key_seed   q
    leakage    d    synthetic leakage_strength (0 for measured traces)
    noise      d    synthetic noise_sigma
    key        key_len bytes, one symbol code 0..3 each
    samples    n_samples float32

Checkpoint::

    magic      4s   b"EMCK"
    version    H    1
    header_len I
    header     UTF-8 JSON: architecture, tensor names/shapes in order,
               normalization statistics, seeds
    tensors    float32, concatenated in header order
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import RawKey, Trace, TraceMeta
from .nn.model import Network

TRACE_MAGIC = b"EMTR"
TRACE_VERSION = 1
_TRACE_HEADER = struct.Struct("<4sHQddqQqdd")
NO_TRIGGER = -1

CKPT_MAGIC = b"EMCK"
CKPT_VERSION = 1
_CKPT_PREFIX = struct.Struct("<4sHI")


class FormatError(ValueError):
    pass


def write_trace(path, trace: Trace) -> None:
    meta = trace.meta
    key = trace.key
    header = _TRACE_HEADER.pack(
        TRACE_MAGIC,
        TRACE_VERSION,
        len(trace),
        float(meta.sample_rate),
        float(meta.clock_freq),
        NO_TRIGGER if meta.trigger_index is None else int(meta.trigger_index),
        0 if key is None else len(key),
        -1 if key is None else int(key.seed),
        float(meta.leakage_strength),
        float(meta.noise_sigma),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        if key is not None:
            fh.write(key.codes.astype(np.uint8).tobytes())
        fh.write(np.asarray(trace.samples, dtype="<f4").tobytes())


def read_trace_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(_TRACE_HEADER.size)
    return _parse_trace_header(raw)


def _parse_trace_header(raw: bytes) -> dict:
    if len(raw) < _TRACE_HEADER.size:
        raise FormatError("truncated trace header")
    magic, version, n, fs, fclk, trig, key_len, key_seed, leak, noise = _TRACE_HEADER.unpack(raw[: _TRACE_HEADER.size])
    if magic != TRACE_MAGIC:
        raise FormatError(f"not a trace file (magic {magic!r})")
    if version != TRACE_VERSION:
        raise FormatError(f"unsupported trace version {version}")
    return {
        "magic": magic.decode(),
        "version": version,
        "n_samples": n,
        "sample_rate": fs,
        "clock_freq": fclk,
        "trigger_index": None if trig == NO_TRIGGER else trig,
        "key_length": key_len,
        "key_seed": key_seed,
        "leakage_strength": leak,
        "noise_sigma": noise,
    }


def read_trace(path) -> Trace:
    """Load a trace; it is returned unaligned (align with the dsp module)."""
    data = Path(path).read_bytes()
    h = _parse_trace_header(data)
    off = _TRACE_HEADER.size
    expected = off + h["key_length"] + 4 * h["n_samples"]
    if len(data) != expected:
        raise FormatError(f"trace file has {len(data)} bytes, header implies {expected}")
    key = None
    if h["key_length"]:
        codes = np.frombuffer(data, dtype=np.uint8, count=h["key_length"], offset=off)
        key = RawKey(codes.astype(np.int8), seed=h["key_seed"])
        off += h["key_length"]
    samples = np.frombuffer(data, dtype="<f4", count=h["n_samples"], offset=off).astype(np.float32)
    meta = TraceMeta(
        sample_rate=h["sample_rate"],
        clock_freq=h["clock_freq"],
        trigger_index=h["trigger_index"],
        leakage_strength=h["leakage_strength"],
        noise_sigma=h["noise_sigma"],
    )
    return Trace(meta, samples, key=key, aligned=False, name=Path(path).stem)


# --- checkpoints ------------------------------------------------------------


def save_checkpoint(path, net: Network, extra: dict | None = None) -> None:
    tensors = net.named_tensors()
    header = {
        "architecture": net.config(),
        "window_len": net.window_len,
        "rng_seed": net.rng_seed,
        "norm_mean": net.norm_mean,
        "norm_std": net.norm_std,
        "tensors": [[name, list(t.shape)] for name, t in tensors.items()],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_PREFIX.pack(CKPT_MAGIC, CKPT_VERSION, len(blob)))
        fh.write(blob)
        for t in tensors.values():
            fh.write(np.asarray(t, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[Network, dict]:
    """Rebuild the network from its stored architecture and check every tensor shape."""
    data = Path(path).read_bytes()
    magic, version, hlen = _CKPT_PREFIX.unpack(data[: _CKPT_PREFIX.size])
    if magic != CKPT_MAGIC:
        raise FormatError(f"not a checkpoint (magic {magic!r})")
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    off = _CKPT_PREFIX.size
    header = json.loads(data[off : off + hlen])
    off += hlen
    net = Network.from_config(header["architecture"], header["window_len"], header["rng_seed"])
    expected = net.named_tensors()
    stored = [name for name, _ in header["tensors"]]
    if stored != list(expected):
        raise FormatError("checkpoint tensor list does not match its architecture")
    for name, shape in header["tensors"]:
        want = expected[name].shape
        if tuple(shape) != want:
            raise FormatError(f"{name}: stored shape {tuple(shape)} != architecture shape {want}")
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        net.set_tensor(name, arr.astype(np.float32))
    if off != len(data):
        raise FormatError("trailing bytes after checkpoint tensors")
    net.norm_mean = header["norm_mean"]
    net.norm_std = header["norm_std"]
    return net, header


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as fh:
        prefix = fh.read(_CKPT_PREFIX.size)
        magic, version, hlen = _CKPT_PREFIX.unpack(prefix)
        if magic != CKPT_MAGIC:
            raise FormatError(f"not a checkpoint (magic {magic!r})")
        header = json.loads(fh.read(hlen))
    header["magic"], header["version"] = magic.decode(), version
    return header


# --- tables and configs -----------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, rows: Sequence[dict], fields: Iterable[str] | None = None) -> None:
    rows = list(rows)
    fields = list(fields) if fields is not None else list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r[k]) for k in fields})
    Path(path).write_text(buf.getvalue())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def dump_config(cfg: dict) -> str:
    """Flat ``key=value`` text, one entry per line, keys sorted."""
    lines = []
    for k in sorted(cfg):
        v = cfg[k]
        if isinstance(v, (list, tuple)):
            v = ",".join(_fmt(x) for x in v)
        else:
            v = _fmt(v)
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> dict:
    """Inverse of :func:`dump_config`; values stay strings (typing is the caller's job)."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
