"""MATPOWER-format case ingestion and canonical serialization.

The accepted subset: ``mpc.baseMVA = <number>;`` plus the ``mpc.bus``,
``mpc.gen`` and ``mpc.branch`` matrices, one row per line, ``%`` comments
stripped. Documented column layouts (extra columns are ignored):

bus     BUS_I TYPE PD QD GS BS AREA VM VA BASEKV ZONE VMAX VMIN
gen     BUS PG QG QMAX QMIN VG MBASE STATUS PMAX PMIN ...
branch  FROM TO R X B RATEA RATEB RATEC TAP SHIFT STATUS [ANGMIN ANGMAX]

Loads, generation, and shunts are converted to per-unit on baseMVA; angles to
radians; MATPOWER's tap = 0 becomes the explicit nominal 1.0. Bus numbering
may be arbitrary positive integers; positions in NetworkCase.buses are the
dense internal ids and the original numbers are kept for reporting.
"""
from __future__ import annotations

import math
import re
from importlib import resources
from pathlib import Path

from .errors import CaseNotFoundError, CaseParseError, ModelError
from .model import Branch, Bus, BusKind, NetworkCase

BUNDLED_CASES = ("ieee14", "ieee30", "ieee118")

_BUS_COLS, _GEN_COLS, _BRANCH_COLS = 13, 10, 11


def _tokens(line: str, lineno: int) -> list[float]:
    vals = []
    for col, tok in enumerate(line.replace(";", " ").split(), start=1):
        try:
            v = float(tok)
        except ValueError:
            raise CaseParseError(f"unparseable numeric field {tok!r}",
                                 lineno, col) from None
        if not math.isfinite(v):
            raise CaseParseError(f"non-finite field {tok!r}", lineno, col)
        vals.append(v)
    return vals


def _matrices(text: str) -> tuple[float, dict[str, list[tuple[int, list[float]]]]]:
    base_mva = None
    blocks: dict[str, list[tuple[int, list[float]]]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if current is not None:
            if line.startswith("]"):
                current = None
                continue
            blocks[current].append((lineno, _tokens(line, lineno)))
            continue
        m = re.match(r"mpc\.baseMVA\s*=\s*([^;]+);", line)
        if m:
            try:
                base_mva = float(m.group(1))
            except ValueError:
                raise CaseParseError(f"bad baseMVA {m.group(1)!r}", lineno) from None
            continue
        m = re.match(r"mpc\.(bus|gen|branch)\s*=\s*\[\s*$", line)
        if m:
            current = m.group(1)
            blocks.setdefault(current, [])
    if base_mva is None:
        raise CaseParseError("mpc.baseMVA not found")
    if not base_mva > 0 or not math.isfinite(base_mva):
        raise CaseParseError(f"baseMVA must be positive, got {base_mva}")
    for need in ("bus", "branch"):
        if need not in blocks or not blocks[need]:
            raise CaseParseError(f"mpc.{need} matrix not found or empty")
    blocks.setdefault("gen", [])
    return base_mva, blocks


def parse_case(text: str, name: str = "case") -> NetworkCase:
    """Parse MATPOWER case text into a per-unit NetworkCase."""
    base, blocks = _matrices(text)

    # generators aggregate per bus: powers sum, first in-service one regulates
    gen_p: dict[int, list[float]] = {}
    gen_q: dict[int, list[float]] = {}
    gen_v: dict[int, float] = {}
    gen_lines: dict[int, int] = {}
    for lineno, row in blocks["gen"]:
        if len(row) < _GEN_COLS:
            raise CaseParseError(
                f"gen row has {len(row)} columns, expected >= {_GEN_COLS}", lineno)
        bus_id = int(row[0])
        gen_lines.setdefault(bus_id, lineno)
        if int(row[7]) == 0:
            continue
        gen_p.setdefault(bus_id, []).append(row[1])
        gen_q.setdefault(bus_id, []).append(row[2])
        gen_v.setdefault(bus_id, row[5])

    buses: list[Bus] = []
    seen: dict[int, int] = {}
    for lineno, row in blocks["bus"]:
        if len(row) < _BUS_COLS:
            raise CaseParseError(
                f"bus row has {len(row)} columns, expected >= {_BUS_COLS}", lineno)
        bus_id = int(row[0])
        if bus_id <= 0:
            raise CaseParseError(f"bus id must be positive, got {bus_id}", lineno)
        if bus_id in seen:
            raise CaseParseError(
                f"duplicate bus id {bus_id} (first at line {seen[bus_id]})", lineno)
        seen[bus_id] = lineno
        type_code = int(row[1])
        if type_code == 3:
            kind = BusKind.SLACK
        elif type_code == 2:
            kind = BusKind.PV
        elif type_code == 1:
            kind = BusKind.PQ
        else:
            raise CaseParseError(f"unsupported bus type {type_code}", lineno)
        # a PV bus with no in-service generator has nothing to regulate with
        if kind is BusKind.PV and bus_id not in gen_v:
            kind = BusKind.PQ
        setpoint = None
        if kind is not BusKind.PQ:
            setpoint = gen_v.get(bus_id, row[7])
        buses.append(Bus(
            id=bus_id, kind=kind,
            pd=row[2] / base, qd=row[3] / base,
            pg=math.fsum(gen_p.get(bus_id, ())) / base,
            qg=math.fsum(gen_q.get(bus_id, ())) / base,
            gs=row[4] / base, bs=row[5] / base,
            vm_init=row[7], va_init=math.radians(row[8]),
            vm_setpoint=setpoint,
        ))

    for bus_id, lineno in gen_lines.items():
        if bus_id not in seen:
            raise CaseParseError(f"gen row references unknown bus {bus_id}", lineno)

    branches: list[Branch] = []
    for lineno, row in blocks["branch"]:
        if len(row) < _BRANCH_COLS:
            raise CaseParseError(
                f"branch row has {len(row)} columns, expected >= {_BRANCH_COLS}",
                lineno)
        f, t = int(row[0]), int(row[1])
        for end in (f, t):
            if end not in seen:
                raise CaseParseError(f"branch references unknown bus {end}", lineno)
        tap = row[8]
        if tap < 0:
            raise CaseParseError(f"negative tap {tap}", lineno)
        branches.append(Branch(
            from_bus=f, to_bus=t, r=row[2], x=row[3], b_charging=row[4],
            tap=tap if tap != 0 else 1.0, shift=math.radians(row[9]),
            status=int(row[10]) != 0,
        ))

    if not any(b.kind is BusKind.SLACK for b in buses):
        raise ModelError(f"case {name!r} has no slack bus")
    return NetworkCase(name=name, base_mva=base,
                       buses=tuple(buses), branches=tuple(branches)).validate()


def _undo_scale(pu: float, base: float) -> float:
    """A raw value whose re-parse (value / base) reproduces pu exactly."""
    raw = pu * base
    for _ in range(8):
        err = raw / base
        if err == pu:
            return raw
        raw = math.nextafter(raw, math.inf if err < pu else -math.inf)
    return pu * base


def _undo_radians(rad: float) -> float:
    deg = math.degrees(rad)
    for _ in range(8):
        back = math.radians(deg)
        if back == rad:
            return deg
        deg = math.nextafter(deg, math.inf if back < rad else -math.inf)
    return math.degrees(rad)


def serialize_case(case: NetworkCase) -> str:
    """Canonical MATPOWER text; parse(serialize(c)) == c field-for-field.

    Scaled columns are nudged by ulps where needed so the reparse division
    restores the exact stored per-unit value.
    """
    base = case.base_mva
    fn_name = re.sub(r"\W", "_", case.name) or "case"
    out = [f"function mpc = {fn_name}", "mpc.version = '2';",
           f"mpc.baseMVA = {base!r};", "", "mpc.bus = ["]
    code = {BusKind.PQ: 1, BusKind.PV: 2, BusKind.SLACK: 3}
    for b in case.buses:
        out.append("\t" + "\t".join(repr(v) for v in (
            b.id, code[b.kind], _undo_scale(b.pd, base), _undo_scale(b.qd, base),
            _undo_scale(b.gs, base), _undo_scale(b.bs, base), 1,
            b.vm_init, _undo_radians(b.va_init), 0, 1, 1.1, 0.9)))
    out += ["];", "", "mpc.gen = ["]
    for b in case.buses:
        if b.kind is BusKind.PQ and b.pg == 0 and b.qg == 0:
            continue
        vg = b.vm_setpoint if b.vm_setpoint is not None else b.vm_init
        out.append("\t" + "\t".join(repr(v) for v in (
            b.id, _undo_scale(b.pg, base), _undo_scale(b.qg, base),
            0, 0, vg, base, 1, 0, 0)))
    out += ["];", "", "mpc.branch = ["]
    for br in case.branches:
        out.append("\t" + "\t".join(repr(v) for v in (
            br.from_bus, br.to_bus, br.r, br.x, br.b_charging, 0, 0, 0,
            br.tap, _undo_radians(br.shift), 1 if br.status else 0)))
    out += ["];", ""]
    return "\n".join(out)


def load_case(name_or_path: str | Path) -> NetworkCase:
    """Load a bundled case by name (ieee14, ieee30, ieee118) or a file path."""
    text_name = str(name_or_path)
    if text_name in BUNDLED_CASES:
        ref = resources.files("gridgraph") / "cases" / f"{text_name}.m"
        return parse_case(ref.read_text(encoding="utf-8"), text_name)
    path = Path(name_or_path)
    if not path.is_file():
        raise CaseNotFoundError(
            f"{text_name!r} is neither a bundled case {BUNDLED_CASES} "
            f"nor a readable file")
    return parse_case(path.read_text(encoding="utf-8"), path.stem)
