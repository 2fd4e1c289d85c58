from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Final, Literal

from ..errors import FormatError
from ..tensors.core import DenseTensor
from ..tensors.decomposition import TTFactors, TuckerFactors
from ..tensors.kernels import Tucker2Kernel, TTKernel
from .container import read_tensor, write_tensor

logger = logging.getLogger("tensordenoise.io")

METHODS: Final = ("tucker", "tt", "tucker2", "tt_kernel")

Factors = TuckerFactors | TTFactors | Tucker2Kernel | TTKernel


@dataclass(frozen=True)
class FactorBundle:
    method: str
    source_shape: tuple[int, ...]
    ranks: tuple[int, ...]
    tensors: dict[str, DenseTensor]


def required_roles(method: str, ndim: int) -> list[str]:
    if method == "tucker":
        return ["core", *(f"factor_{n + 1}" for n in range(ndim))]
    if method == "tt":
        return [f"core_{n + 1}" for n in range(ndim)]
    if method == "tucker2":
        return ["core", "factor_p", "factor_q"]
    if method == "tt_kernel":
        return ["core_1", "core_2", "core_3", "core_4"]
    raise FormatError(f"unknown bundle method {method!r}")


def bundle_from(f: Factors) -> FactorBundle:
    if isinstance(f, TuckerFactors):
        tensors = {"core": f.core, **{f"factor_{n + 1}": a for n, a in enumerate(f.factors)}}
        return FactorBundle("tucker", tuple(f.source_shape), tuple(f.ranks), tensors)
    if isinstance(f, TTFactors):
        tensors = {f"core_{n + 1}": c for n, c in enumerate(f.cores)}
        return FactorBundle("tt", f.source_shape, f.ranks, tensors)
    if isinstance(f, Tucker2Kernel):
        d = f.core.shape[0]
        shape = (d, d, f.factor_p.shape[0], f.factor_q.shape[0])
        tensors = {"core": f.core, "factor_p": f.factor_p, "factor_q": f.factor_q}
        return FactorBundle("tucker2", shape, f.ranks, tensors)
    g1, g2, g3, g4 = f.cores
    shape = (g1.shape[0], g2.shape[1], g3.shape[1], g4.shape[1])
    tensors = {f"core_{n + 1}": c for n, c in enumerate(f.cores)}
    return FactorBundle("tt_kernel", shape, f.ranks, tensors)


def _expected_shapes(b: FactorBundle) -> dict[str, tuple[int, ...]]:
    s, r = b.source_shape, b.ranks
    if b.method == "tucker":
        out = {"core": tuple(r)}
        out.update({f"factor_{n + 1}": (s[n], r[n]) for n in range(len(s))})
        return out
    if b.method == "tt":
        return {f"core_{n + 1}": (r[n], s[n], r[n + 1]) for n in range(len(s))}
    if b.method == "tucker2":
        d, _, p, q = s
        rp, rq = r
        return {"core": (d, d, rp, rq), "factor_p": (p, rp), "factor_q": (q, rq)}
    d, _, p, q = s
    r1, r2, r3 = r
    return {"core_1": (d, r1), "core_2": (r1, d, r2), "core_3": (r2, p, r3), "core_4": (r3, q)}


def validate_bundle(b: FactorBundle) -> None:
    roles = required_roles(b.method, len(b.source_shape))
    if sorted(b.tensors) != sorted(roles):
        raise FormatError(f"{b.method} bundle needs roles {roles}, got {sorted(b.tensors)}")
    try:
        expected = _expected_shapes(b)
    except (ValueError, IndexError) as e:
        raise FormatError(
            f"{b.method} bundle: source shape {b.source_shape} and ranks {b.ranks} disagree"
        ) from e
    for role, shape in expected.items():
        if tuple(b.tensors[role].shape) != shape:
            raise FormatError(
                f"{b.method} bundle role {role}: shape {b.tensors[role].shape}, expected {shape}"
            )


def factors_from(b: FactorBundle) -> Factors:
    validate_bundle(b)
    t = b.tensors
    if b.method == "tucker":
        factors = tuple(t[f"factor_{n + 1}"] for n in range(len(b.source_shape)))
        return TuckerFactors(core=t["core"], factors=factors, source_shape=b.source_shape)
    if b.method == "tt":
        return TTFactors(cores=tuple(t[f"core_{n + 1}"] for n in range(len(b.source_shape))))
    if b.method == "tucker2":
        return Tucker2Kernel(core=t["core"], factor_p=t["factor_p"], factor_q=t["factor_q"])
    return TTKernel(cores=(t["core_1"], t["core_2"], t["core_3"], t["core_4"]))


def write_bundle(
    index_path: str | Path,
    f: Factors | FactorBundle,
    dtype: Literal["float32", "float64"] = "float64",
) -> FactorBundle:
    b = f if isinstance(f, FactorBundle) else bundle_from(f)
    validate_bundle(b)
    index_path = Path(index_path)
    index_path.parent.mkdir(parents=True, exist_ok=True)
    entries: list[dict[str, Any]] = []
    for role, tensor in b.tensors.items():
        name = f"{index_path.stem}.{role}.tnsr"
        write_tensor(index_path.parent / name, tensor, dtype)
        entries.append({"role": role, "file": name})
    index = {
        "method": b.method,
        "source_shape": list(b.source_shape),
        "ranks": list(b.ranks),
        "entries": entries,
    }
    index_path.write_text(json.dumps(index, indent=2), encoding="utf-8")
    logger.info("wrote %s bundle %s (%d tensors)", b.method, index_path, len(entries))
    return b


def read_bundle(index_path: str | Path) -> FactorBundle:
    index_path = Path(index_path)
    if not index_path.is_file():
        raise FormatError(f"no such bundle index: {index_path}")
    try:
        index = json.loads(index_path.read_text(encoding="utf-8"))
        method = str(index["method"])
        source_shape = tuple(int(d) for d in index["source_shape"])
        ranks = tuple(int(r) for r in index["ranks"])
        entries = [(str(e["role"]), str(e["file"])) for e in index["entries"]]
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"{index_path}: malformed bundle index: {e}") from e
    if method not in METHODS:
        raise FormatError(f"{index_path}: unknown bundle method {method!r}")
    tensors = {role: read_tensor(index_path.parent / name) for role, name in entries}
    b = FactorBundle(method, source_shape, ranks, tensors)
    validate_bundle(b)
    return b
