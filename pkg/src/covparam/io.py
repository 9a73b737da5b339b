"""
File formats: grayscale images, the matrix CSV format and model files.

Matrix CSV: optional ``# key: value`` comment lines, then one matrix row per
line, comma separated, every value printed with 17 significant digits so the
text round-trips to the same doubles.
"""
from __future__ import annotations

import io
import json
import os

import numpy as np
from PIL import Image

from .sparse import Dictionary

__all__ = [
    "FormatError",
    "load_image",
    "format_matrix_csv",
    "write_matrix_csv",
    "read_matrix_csv",
    "save_model",
    "load_model",
    "dumps_model",
    "loads_model",
    "MODEL_VERSION",
    "rep_header",
    "read_reps",
]

MODEL_VERSION = "covparam-model-v1"


class FormatError(ValueError):
    pass


def load_image(path, resize: int | None = None) -> np.ndarray:
    """Read a PGM (P2/P5) or grayscale PNG as floats in [0, 1].

    ``resize`` rescales to a ``resize x resize`` square first (bilinear).
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"image not found: {path}")
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            if im.mode != "L":
                im = im.convert("L")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    if resize:
        arr = np.asarray(Image.fromarray(arr.astype(np.float32), mode="F")
                         .resize((resize, resize), Image.BILINEAR), dtype=np.float64)
        arr = np.clip(arr, 0.0, 1.0)
    return arr


def _fmt(v) -> str:
    return format(float(v), ".17g")


def format_matrix_csv(M, header: dict | None = None) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    out = io.StringIO()
    for key, value in (header or {}).items():
        out.write(f"# {key}: {value}\n")
    for row in M:
        out.write(",".join(_fmt(v) for v in row))
        out.write("\n")
    return out.getvalue()


def write_matrix_csv(path, M, header: dict | None = None) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(format_matrix_csv(M, header))


def _parse_rows(lines, path):
    rows = []
    for n, line in enumerate(lines, 1):
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise FormatError(f"{path}: bad number on data line {n}") from exc
    if rows and len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: ragged rows")
    return rows


def read_matrix_csv(path):
    """Return ``(matrix, header)``; the header maps comment keys to strings."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"file not found: {path}")
    header = {}
    data = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].partition(":")
                if sep:
                    header[key.strip()] = value.strip()
                continue
            data.append(line)
    rows = _parse_rows(data, path)
    M = np.array(rows, dtype=np.float64) if rows else np.empty((0, 0))
    return M, header


def dumps_model(model: Dictionary) -> str:
    header = {
        "version": MODEL_VERSION,
        "d_rep": model.d_rep,
        "K": model.K,
        "n_classes": model.n_classes,
        "alpha": _fmt(model.alpha),
        "beta": _fmt(model.beta),
        "T": model.T,
        "iterations": model.iterations,
        "seed": model.seed,
        "atom_class": ",".join(str(int(c)) for c in model.atom_class),
        "class_names": json.dumps(list(model.class_names)),
        "replaced_iterations": json.dumps(list(model.replaced_iterations)),
    }
    parts = [format_matrix_csv(np.empty((0, 0)), header)]
    blocks = [("D", model.D), ("A", model.A), ("W", model.W),
              ("objective_trace", np.atleast_2d(model.objective_trace))]
    for name, M in blocks:
        M = np.atleast_2d(M)
        parts.append(f"# matrix: {name} {M.shape[0]} {M.shape[1]}\n")
        if M.size:
            parts.append(format_matrix_csv(M))
    parts.append("# end\n")
    return "".join(parts)


def loads_model(text: str, source="<model>") -> Dictionary:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# version: {MODEL_VERSION}":
        found = lines[0].strip() if lines else "empty file"
        raise FormatError(f"{source}: expected {MODEL_VERSION}, found {found!r}")
    if lines[-1].strip() != "# end":
        raise FormatError(f"{source}: truncated model file")

    header = {}
    matrices = {}
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        if line.startswith("# matrix:"):
            name, r, c = line.split(":", 1)[1].split()
            r, c = int(r), int(c)
            body = lines[i + 1:i + 1 + r] if r * c else []
            if any(b.startswith("#") for b in body) or len(body) != (r if r * c else 0):
                raise FormatError(f"{source}: truncated matrix {name}")
            rows = _parse_rows(body, source)
            M = np.array(rows, dtype=np.float64).reshape(r, c) if r * c else np.empty((r, c))
            matrices[name] = M
            i += 1 + len(body)
            continue
        if line.startswith("#") and line != "# end":
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
        i += 1

    try:
        K = int(header["K"])
        atom_class = np.array([int(v) for v in header["atom_class"].split(",")], dtype=np.int64)
        model = Dictionary(
            D=matrices["D"], A=matrices["A"], W=matrices["W"], atom_class=atom_class,
            alpha=float(header["alpha"]), beta=float(header["beta"]), T=int(header["T"]),
            iterations=int(header["iterations"]), seed=int(header["seed"]),
            class_names=tuple(json.loads(header["class_names"])),
            objective_trace=matrices["objective_trace"].ravel(),
            replaced_iterations=tuple(json.loads(header["replaced_iterations"])),
        )
    except KeyError as exc:
        raise FormatError(f"{source}: missing field {exc}") from exc
    if model.D.shape != (int(header["d_rep"]), K) or model.A.shape != (K, K) \
            or model.W.shape != (int(header["n_classes"]), K) or atom_class.size != K:
        raise FormatError(f"{source}: inconsistent matrix shapes")
    return model


def save_model(model: Dictionary, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> Dictionary:
    if not os.path.exists(path):
        raise FileNotFoundError(f"model not found: {path}")
    with open(path) as fh:
        return loads_model(fh.read(), source=str(path))


def rep_header(kind, d: int, lam: float, fused: bool, labeled: bool = False,
               class_names=()) -> dict:
    header = {"kind": str(kind), "d": d, "lambda": _fmt(lam), "fused": str(bool(fused)).lower()}
    if labeled:
        header["labels"] = "first-column"
        header["classes"] = json.dumps(list(class_names))
    return header


def read_reps(path):
    """Read a representation CSV; returns ``(rows, labels or None, header)``."""
    M, header = read_matrix_csv(path)
    labels = None
    if header.get("labels") == "first-column":
        if M.size == 0:
            raise FormatError(f"{path}: labeled file without rows")
        labels = M[:, 0].astype(np.int64)
        if not np.array_equal(labels, M[:, 0]):
            raise FormatError(f"{path}: non-integer labels")
        M = M[:, 1:]
    return M, labels, header
