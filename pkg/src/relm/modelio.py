"""Binary model container.

Layout (little-endian)::

    b"RELM"  u32 version  u32 section_count
    section_count x ( 4-byte ASCII tag, u64 payload_length, payload )
    u32 CRC-32 of every preceding byte

A payload is ``u32 header_length``, a UTF-8 JSON header, then raw array
bytes. Arrays inside the header appear as
``{"__array__": offset, "dtype": "<f8", "shape": [...]}`` where offset
counts from the end of the header.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .cmaes import CmaesState
from .controller import MetricsRow, RelmModel
from .environment import ReplayWindow, _Block
from .ingest import FeatureSchema, StandardizationStats
from .latent import Encoders, PcaModel, RbmModel
from .policy import Topology
from .util import atomic_write

MAGIC = b"RELM"
VERSION = 1
SECTIONS = ("SCHM", "STAT", "ENCD", "TOPO", "GENO", "CMAS", "SNAP", "BASE", "WIND", "HIST")


class ModelFileError(ValueError):
    pass


def _pack(obj) -> bytes:
    blobs: list[bytes] = []
    offset = 0

    def enc(o):
        nonlocal offset
        if isinstance(o, np.ndarray):
            a = np.ascontiguousarray(o)
            a = a.astype(a.dtype.newbyteorder("<"))
            ref = {"__array__": offset, "dtype": a.dtype.str, "shape": list(a.shape)}
            data = a.tobytes()
            blobs.append(data)
            offset += len(data)
            return ref
        if isinstance(o, dict):
            return {k: enc(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [enc(v) for v in o]
        if isinstance(o, np.generic):
            return o.item()
        return o

    header = json.dumps(enc(obj), sort_keys=True).encode("utf-8")
    return struct.pack("<I", len(header)) + header + b"".join(blobs)


def _unpack(payload: bytes):
    (hlen,) = struct.unpack_from("<I", payload)
    header = json.loads(payload[4:4 + hlen].decode("utf-8"))
    body = memoryview(payload)[4 + hlen:]

    def dec(o):
        if isinstance(o, dict):
            if "__array__" in o:
                dt = np.dtype(o["dtype"])
                count = int(np.prod(o["shape"], dtype=np.int64))
                start = o["__array__"]
                a = np.frombuffer(body[start:start + count * dt.itemsize], dtype=dt)
                return a.reshape(o["shape"]).astype(dt.newbyteorder("="))
            return {k: dec(v) for k, v in o.items()}
        if isinstance(o, list):
            return [dec(v) for v in o]
        return o

    return dec(header)


def _cmaes_to_obj(s: CmaesState) -> dict:
    return {
        "n": s.n, "mean": s.mean, "sigma": s.sigma, "C": s.C, "p_sigma": s.p_sigma,
        "p_c": s.p_c, "lam": s.lam, "mu": s.mu, "weights": s.weights, "mu_eff": s.mu_eff,
        "c_sigma": s.c_sigma, "d_sigma": s.d_sigma, "c_c": s.c_c, "c_1": s.c_1,
        "c_mu": s.c_mu, "chi_n": s.chi_n, "generation": s.generation, "B": s.B, "D": s.D,
        "best_x": s.best_x, "best_f": s.best_f, "eigen_clamps": s.eigen_clamps,
        "nonfinite_count": s.nonfinite_count, "rng": s.rng.bit_generator.state,
    }


def _rng_from_state(state: dict) -> np.random.Generator:
    bg = getattr(np.random, state["bit_generator"])()
    bg.state = state
    return np.random.Generator(bg)


def _cmaes_from_obj(o: dict) -> CmaesState:
    o = dict(o)
    rng = _rng_from_state(o.pop("rng"))
    return CmaesState(rng=rng, **o)


def model_to_bytes(model: RelmModel) -> bytes:
    enc = model.encoders
    w = model.window
    sections = {
        "SCHM": enc.schema.to_dict(),
        "STAT": {"names": list(enc.stats.names), "mean": enc.stats.mean,
                 "std": enc.stats.std, "constant": enc.stats.constant},
        "ENCD": {
            "mute": enc.mute,
            "pca": None if enc.pca is None else {
                "mean": enc.pca.mean, "components": enc.pca.components,
                "explained_variance": enc.pca.explained_variance},
            "rbm": None if enc.rbm is None else {
                "weights": enc.rbm.weights, "visible_bias": enc.rbm.visible_bias,
                "hidden_bias": enc.rbm.hidden_bias},
        },
        "TOPO": model.topology.to_dict(),
        "GENO": {"genome": model.genome},
        "CMAS": _cmaes_to_obj(model.state),
        "SNAP": {"snapshot": model.snapshot},
        "BASE": {"accuracy": model.baselines[0], "f1": model.baselines[1],
                 "period": model.period, "rng": model.rng.bit_generator.state},
        "WIND": {"capacity_periods": w.capacity_periods, "current_period": w.current_period,
                 "dim": w.dim, "blocks": [
                     {"period": p, "states": b.states, "labels": b.labels, "raw": b.raw}
                     for p, b in sorted(w._blocks.items())]},
        "HIST": [r.to_dict() for r in model.history],
    }
    out = [MAGIC, struct.pack("<II", VERSION, len(sections))]
    for tag in SECTIONS:
        payload = _pack(sections[tag])
        out.append(tag.encode("ascii") + struct.pack("<Q", len(payload)) + payload)
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


def model_from_bytes(data: bytes) -> RelmModel:
    if len(data) < 16 or data[:4] != MAGIC:
        raise ModelFileError("not a model file (bad magic bytes)")
    (version, count) = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ModelFileError(f"unsupported model file version {version} (supported: {VERSION})")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != crc:
        raise ModelFileError("model file is corrupted (CRC-32 mismatch)")
    pos, sec = 12, {}
    for _ in range(count):
        tag = data[pos:pos + 4].decode("ascii")
        (length,) = struct.unpack_from("<Q", data, pos + 4)
        sec[tag] = _unpack(data[pos + 12:pos + 12 + length])
        pos += 12 + length
    missing = [t for t in SECTIONS if t not in sec]
    if missing:
        raise ModelFileError(f"model file lacks sections {missing}")

    schema = FeatureSchema.from_dict(sec["SCHM"])
    st = sec["STAT"]
    stats = StandardizationStats(tuple(st["names"]), st["mean"], st["std"], st["constant"])
    e = sec["ENCD"]
    pca = None if e["pca"] is None else PcaModel(**e["pca"])
    rbm = None if e["rbm"] is None else RbmModel(**e["rbm"])
    encoders = Encoders(schema, stats, pca, rbm, e["mute"])

    wd = sec["WIND"]
    window = ReplayWindow(wd["capacity_periods"])
    window.current_period = wd["current_period"]
    window.dim = wd["dim"]
    for b in wd["blocks"]:
        window._blocks[b["period"]] = _Block(b["states"], b["labels"], b["raw"])

    base = sec["BASE"]
    return RelmModel(
        encoders=encoders, topology=Topology.from_dict(sec["TOPO"]),
        genome=sec["GENO"]["genome"], state=_cmaes_from_obj(sec["CMAS"]),
        snapshot=sec["SNAP"]["snapshot"], baselines=(base["accuracy"], base["f1"]),
        window=window, rng=_rng_from_state(base["rng"]), period=base["period"],
        history=[MetricsRow(**r) for r in sec["HIST"]])


def save_model(model: RelmModel, path) -> None:
    atomic_write(path, model_to_bytes(model))


def load_model(path) -> RelmModel:
    path = Path(path)
    if not path.is_file():
        raise ModelFileError(f"model file not found: {path}")
    return model_from_bytes(path.read_bytes())
