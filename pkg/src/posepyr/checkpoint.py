"""Versioned binary checkpoint: parameters, batch-norm buffers, Adam state.

Layout: magic line, 8-byte little-endian header length, JSON header, then a
raw little-endian blob. The header records name/shape/dtype/offset for every
entry plus free-form metadata (training step, RNG state, config echo).
"""

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"POSEPYR-CKPT-1\n"


class CheckpointError(RuntimeError):
    pass


def _dtype_tag(arr):
    return {"float32": "<f4", "float64": "<f8"}[str(arr.dtype)]


def save_checkpoint(path, model, optimizer=None, meta=None):
    entries = []
    blobs = []
    offset = 0

    def push(name, kind, arr):
        nonlocal offset
        raw = np.ascontiguousarray(arr).astype(_dtype_tag(arr)).tobytes()
        entries.append({"name": name, "kind": kind, "shape": list(arr.shape),
                        "dtype": _dtype_tag(arr), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)

    adam_steps = {}
    for name, p in model.named_parameters():
        push(name, "param", p.data)
        if p.adam_m is not None:
            push(name, "adam_m", p.adam_m)
            push(name, "adam_v", p.adam_v)
            adam_steps[name] = p.adam_step
    for name, b in model.named_buffers():
        push(name, "buffer", b)

    header = {"adam_steps": adam_steps, "meta": meta or {}}
    if optimizer is not None:
        header["optimizer"] = {"lr": optimizer.lr, "beta1": optimizer.beta1,
                               "beta2": optimizer.beta2, "eps": optimizer.eps}
    header["entries"] = entries
    hbytes = json.dumps(header).encode()

    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".ckpt.tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<Q", len(hbytes)))
            f.write(hbytes)
            for raw in blobs:
                f.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_checkpoint(path):
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a POSEPYR-CKPT-1 checkpoint")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode())
        blob = f.read()
    arrays = {}
    for e in header["entries"]:
        raw = blob[e["offset"]:e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype=e["dtype"]).reshape(e["shape"]).copy()
        arrays[(e["kind"], e["name"])] = arr
    return header, arrays


def load_checkpoint(path, model, load_adam=True):
    """Restore parameters/buffers (and Adam state) into `model`.

    Returns the checkpoint metadata dict. Shape mismatches raise naming the
    offending parameter.
    """
    header, arrays = read_checkpoint(path)
    params = dict(model.named_parameters())
    for (kind, name), arr in arrays.items():
        if kind == "param":
            if name not in params:
                raise CheckpointError(f"checkpoint parameter {name!r} not present in model")
            p = params[name]
            if tuple(arr.shape) != p.data.shape:
                raise CheckpointError(
                    f"parameter {name!r}: checkpoint shape {tuple(arr.shape)} "
                    f"!= model shape {p.data.shape}")
            p.data[...] = arr.astype(p.data.dtype)
    missing = set(params) - {n for (k, n) in arrays if k == "param"}
    if missing:
        raise CheckpointError(f"checkpoint missing parameters: {sorted(missing)[:5]}")
    buffers = dict(model.named_buffers())
    for (kind, name), arr in arrays.items():
        if kind == "buffer":
            if name not in buffers:
                raise CheckpointError(f"checkpoint buffer {name!r} not present in model")
            buffers[name][...] = arr.astype(buffers[name].dtype)
    if load_adam:
        for name, p in params.items():
            m = arrays.get(("adam_m", name))
            v = arrays.get(("adam_v", name))
            if m is not None:
                p.adam_m = m.astype(p.data.dtype)
                p.adam_v = v.astype(p.data.dtype)
                p.adam_step = header["adam_steps"].get(name, 0)
    return header.get("meta", {})
