"""Case-file ingestion: MATPOWER-style ``.m`` subset and a native JSON format.

Only the fields needed by the DC model are read.  From a MATPOWER file:
``baseMVA``; bus table columns BUS_I, BUS_TYPE (reference detection), PD;
gen table columns GEN_BUS, PG; branch table columns F_BUS, T_BUS, BR_X,
BR_STATUS.  Everything else is ignored.  Out-of-service branches are
dropped and parallel branches between the same bus pair are merged into
one line with ``x = 1 / sum(1/x_i)``.

The native format is a JSON document::

    {"base_mva": 100.0,
     "buses":    [{"id": 1, "pd": 20.0}, ...],
     "gens":     [{"bus": 1, "pg": 50.0}, ...],
     "branches": [{"from": 1, "to": 2, "x": 0.1, "status": 1}, ...]}

``pd``/``pg`` are in MW on ``base_mva``; the reference bus is the first
listed bus.  ``parse_case`` returns injections in per-unit.
"""

import json
import re

import numpy as np

from .errors import CaseParseError
from .network import Network

__all__ = ["parse_case", "load_case", "serialize_native"]

_MATPOWER_REF_TYPE = 3
_BRANCH_STATUS_COL = 10  # F_BUS T_BUS R X B RATEA RATEB RATEC TAP SHIFT STATUS


def parse_case(text, fmt):
    """Parse case-file content into a :class:`Network`.

    ``fmt`` is ``"matpower"`` or ``"native"``.
    """
    if fmt == "matpower":
        return _parse_matpower(text)
    if fmt == "native":
        return _parse_native(text)
    raise ValueError(f"unknown case format {fmt!r}")


def load_case(path, fmt=None):
    """Read a case file; the format defaults by extension (.m / .json)."""
    if fmt is None:
        fmt = "matpower" if str(path).endswith(".m") else "native"
    with open(path) as fh:
        return parse_case(fh.read(), fmt)


# -- MATPOWER subset ---------------------------------------------------------


def _strip_comment(line):
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _read_matrix(lines, start, name, source_line):
    """Collect numeric rows of ``mpc.<name> = [ ... ];`` starting at ``start``."""
    rows = []
    i = start
    while i < len(lines):
        raw = _strip_comment(lines[i][1])
        lineno = lines[i][0]
        done = "]" in raw
        raw = raw.replace("[", " ").replace("]", " ")
        for chunk in raw.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                rows.append(([float(v) for v in chunk.split()], lineno))
            except ValueError:
                raise CaseParseError(f"bad numeric row in mpc.{name}", line=lineno)
        if done:
            return rows, i + 1
        i += 1
    raise CaseParseError(f"unterminated matrix mpc.{name}", line=source_line)


def _parse_matpower(text):
    numbered = list(enumerate(text.splitlines(), start=1))
    lines = [(no, ln) for no, ln in numbered]

    base_mva = None
    tables = {}
    i = 0
    scalar_re = re.compile(r"mpc\.baseMVA\s*=\s*([0-9eE+.\-]+)\s*;")
    matrix_re = re.compile(r"mpc\.(bus|gen|branch)\s*=\s*\[")
    while i < len(lines):
        lineno, raw = lines[i]
        raw = _strip_comment(raw)
        m = scalar_re.search(raw)
        if m:
            base_mva = float(m.group(1))
            i += 1
            continue
        m = matrix_re.search(raw)
        if m:
            name = m.group(1)
            # keep anything after the opening bracket on the same line
            lines[i] = (lineno, raw[m.end():])
            tables[name], i = _read_matrix(lines, i, name, lineno)
            continue
        i += 1

    if base_mva is None:
        raise CaseParseError("missing mpc.baseMVA")
    for required in ("bus", "branch"):
        if required not in tables or not tables[required]:
            raise CaseParseError(f"missing mpc.{required} table")

    bus_ids, pd, ref_id = [], {}, None
    for row, lineno in tables["bus"]:
        if len(row) < 3:
            raise CaseParseError("bus row needs at least BUS_I, BUS_TYPE, PD", line=lineno)
        bid = int(row[0])
        if bid in pd:
            raise CaseParseError(f"duplicate bus id {bid}", line=lineno)
        bus_ids.append(bid)
        pd[bid] = row[2]
        if int(row[1]) == _MATPOWER_REF_TYPE and ref_id is None:
            ref_id = bid

    pg = dict.fromkeys(bus_ids, 0.0)
    for row, lineno in tables.get("gen", []):
        if len(row) < 2:
            raise CaseParseError("gen row needs at least GEN_BUS, PG", line=lineno)
        gbus = int(row[0])
        if gbus not in pg:
            raise CaseParseError(f"gen references nonexistent bus {gbus}", line=lineno)
        pg[gbus] += row[1]

    branches = []
    known = set(bus_ids)
    for row, lineno in tables["branch"]:
        if len(row) < 4:
            raise CaseParseError("branch row needs at least F_BUS, T_BUS, BR_R, BR_X", line=lineno)
        f, t, x = int(row[0]), int(row[1]), float(row[3])
        status = int(row[_BRANCH_STATUS_COL]) if len(row) > _BRANCH_STATUS_COL else 1
        if f not in known or t not in known:
            raise CaseParseError(f"branch {f}-{t} references a nonexistent bus", line=lineno)
        branches.append((f, t, x, status))

    p = np.array([(pg[b] - pd[b]) / base_mva for b in bus_ids])
    merged = _merge_parallel(branches)
    slack = bus_ids.index(ref_id) if ref_id is not None else 0
    return Network(bus_ids=tuple(bus_ids), lines=merged, p=p, slack=slack)


# -- native JSON format ------------------------------------------------------


def _parse_native(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    try:
        base_mva = float(doc["base_mva"])
        bus_ids = [int(b["id"]) for b in doc["buses"]]
        pd = {int(b["id"]): float(b["pd"]) for b in doc["buses"]}
        branches = [
            (int(br["from"]), int(br["to"]), float(br["x"]), int(br.get("status", 1)))
            for br in doc["branches"]
        ]
        gens = [(int(g["bus"]), float(g["pg"])) for g in doc.get("gens", [])]
    except (KeyError, TypeError) as exc:
        raise CaseParseError(f"missing or malformed field: {exc}") from None

    if len(set(bus_ids)) != len(bus_ids):
        raise CaseParseError("duplicate bus id")
    pg = dict.fromkeys(bus_ids, 0.0)
    for gbus, val in gens:
        if gbus not in pg:
            raise CaseParseError(f"gen references nonexistent bus {gbus}")
        pg[gbus] += val
    for f, t, _, _ in branches:
        if f not in pg or t not in pg:
            raise CaseParseError(f"branch {f}-{t} references a nonexistent bus")

    p = np.array([(pg[b] - pd[b]) / base_mva for b in bus_ids])
    return Network(bus_ids=tuple(bus_ids), lines=_merge_parallel(branches), p=p, slack=0)


def _merge_parallel(branches):
    """Drop out-of-service branches, combine parallels: x = 1/sum(1/x_i)."""
    groups = {}
    order = []
    for f, t, x, status in branches:
        if status == 0:
            continue
        if x <= 0:
            raise ValueError(f"branch {f}-{t} has nonpositive reactance {x}")
        key = (min(f, t), max(f, t))
        if key not in groups:
            groups[key] = []
            order.append((f, t, key))
        groups[key].append(x)
    return tuple(
        (f, t, 1.0 / sum(1.0 / x for x in groups[key])) for f, t, key in order
    )


def serialize_native(net):
    """Render a :class:`Network` as native-format JSON (round-trips exactly).

    The net injection is split into a load and a generation part
    (``pd = -min(p, 0)``, ``pg = max(p, 0)``) on a 1.0 MVA base so the
    parsed result reproduces ``net.p`` bit for bit.
    """
    buses = [
        {"id": b, "pd": max(-net.p[i], 0.0)} for i, b in enumerate(net.bus_ids)
    ]
    gens = [
        {"bus": b, "pg": net.p[i]}
        for i, b in enumerate(net.bus_ids)
        if net.p[i] > 0
    ]
    branches = [
        {"from": f, "to": t, "x": x, "status": 1} for f, t, x in net.lines
    ]
    doc = {"base_mva": 1.0, "buses": buses, "gens": gens, "branches": branches}
    return json.dumps(doc, indent=1)
