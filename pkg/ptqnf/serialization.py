"""Flat-file formats for symbols, normal forms, norm tables and the run report."""

import json
import logging
import math
import re
from pathlib import Path

import numpy as np
import pandas as pd

from ptqnf.enums import Mode, parse_enum
from ptqnf.frequency import Frequency
from ptqnf.normal_form import NormalFormResult
from ptqnf.symbol import Symbol, TruncationPolicy, imag_residual, reality_residual, rho_norm

logger = logging.getLogger(__name__)

_SYMBOL_HEADER = re.compile(r"^# symbol dim=(\d+) pstep=(\S+) atoms=(\d+)$")
_BLOCK_HEADER = re.compile(r"^## ([BW]) (\d+)$")

NORM_COLUMNS = ["mode", "hbar", "k", "norm_B", "norm_W", "norm_V", "dropped", "reality_B", "imag_W"]


def format_symbol(F: Symbol) -> str:
    """One header line, then `q_1 .. q_l m re im` per atom in key order; floats use repr."""
    lines = [f"# symbol dim={F.dim} pstep={F.pstep!r} atoms={len(F)}"]
    for key, c in zip(F.keys, F.coeffs):
        ints = " ".join(str(int(x)) for x in key)
        lines.append(f"{ints} {float(c.real)!r} {float(c.imag)!r}")
    return "\n".join(lines) + "\n"


def parse_symbol(text: str) -> Symbol:
    lines = [line for line in text.strip().splitlines() if line.strip()]
    if not lines:
        raise ValueError("Empty symbol text")
    match = _SYMBOL_HEADER.match(lines[0].strip())
    if match is None:
        raise ValueError(f"Malformed symbol header: {lines[0]!r}")
    dim, pstep, count = int(match[1]), float(match[2]), int(match[3])
    if len(lines) - 1 != count:
        raise ValueError(f"Symbol header announces {count} atoms, found {len(lines) - 1}")

    keys = np.zeros((count, dim + 1), dtype=np.int64)
    coeffs = np.zeros(count, dtype=np.complex128)
    for i, line in enumerate(lines[1:]):
        fields = line.split()
        if len(fields) != dim + 3:
            raise ValueError(f"Atom line {i + 1} has {len(fields)} fields, expected {dim + 3}: {line!r}")
        keys[i] = [int(x) for x in fields[: dim + 1]]
        coeffs[i] = complex(float(fields[-2]), float(fields[-1]))
    return Symbol(dim, pstep, keys, coeffs)


def format_normal_form(r: NormalFormResult) -> str:
    f = r.frequency
    header = [
        f"# mode={r.mode.name.lower()}",
        f"# order={r.order}",
        f"# hbar={r.hbar!r}",
        f"# omega={' '.join(repr(w) for w in f.omega)}",
        f"# gamma={f.gamma!r}",
        f"# tau={f.tau!r}",
        f"# pstep={r.B[0].pstep!r}" if r.B else "# pstep=nan",
        f"# policy={json.dumps(r.policy.as_dict(), sort_keys=True)}",
    ]
    blocks = []
    for k, (bk, wk) in enumerate(zip(r.B, r.W), start=1):
        blocks.append(f"## B {k}\n{format_symbol(bk)}")
        blocks.append(f"## W {k}\n{format_symbol(wk)}")
    return "\n".join(header) + "\n" + "".join(blocks)


def write_normal_form(r: NormalFormResult, path: Path):
    path.write_text(format_normal_form(r))
    logger.debug(f"Normal form written: {path}")


def read_normal_form(path: Path) -> NormalFormResult:
    """Read back a normal form written by write_normal_form; V_k and the ledger are not stored."""
    meta = {}
    blocks = {"B": {}, "W": {}}
    current = None
    for line in path.read_text().splitlines():
        block = _BLOCK_HEADER.match(line)
        if block:
            current = []
            blocks[block[1]][int(block[2])] = current
        elif current is not None:
            current.append(line)
        elif line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = value.strip()

    mode = parse_enum(Mode, meta["mode"])
    omega = tuple(float(w) for w in meta["omega"].split())
    f = Frequency(len(omega), omega, float(meta["gamma"]), float(meta["tau"]))
    policy = TruncationPolicy(**json.loads(meta["policy"]))
    order = int(meta["order"])
    return NormalFormResult(
        order=order,
        mode=mode,
        hbar=float(meta["hbar"]),
        frequency=f,
        policy=policy,
        B=[parse_symbol("\n".join(blocks["B"][k])) for k in range(1, order + 1)],
        W=[parse_symbol("\n".join(blocks["W"][k])) for k in range(1, order + 1)],
    )


def norms_frame(results) -> pd.DataFrame:
    """Per-order norm table over several normal forms."""
    records = []
    for r in results:
        for norms, bk, wk, vk in zip(r.norms, r.B, r.W, r.V_terms):
            records.append(
                {
                    "mode": r.mode.name.lower(),
                    "hbar": r.hbar,
                    "k": norms.k,
                    "norm_B": norms.norm_B,
                    "norm_W": norms.norm_W,
                    "norm_V": norms.norm_V,
                    "dropped": norms.dropped,
                    "reality_B": reality_residual(bk, rho_norm(vk, 0.0)),
                    "imag_W": imag_residual(wk, rho_norm(vk, 0.0)),
                }
            )
    return pd.DataFrame.from_records(records, columns=NORM_COLUMNS)


def number_tag(x: float) -> str:
    """Compact file-name tag for a parameter value."""
    return f"{x:g}"


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, complex):
        return {"re": _json_safe(value.real), "im": _json_safe(value.imag)}
    return value


def write_report(report: dict, path: Path):
    with open(path, "w") as report_file:
        json.dump(_json_safe(report), report_file, indent=2)
        # Add a trailing newline to the file
        report_file.write("\n")
