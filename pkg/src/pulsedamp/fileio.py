"""Text formats for profiles, envelopes, CSV tables and reports.

Every writer goes through :func:`atomic_write`, so a reader never sees a
half-written file.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path

from .core import Constant, DampingProfile, Ramp, Smooth
from .analysis import Envelope

PROFILE_HEADER = "pulsedamp-profile v1"


def _num(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ----------------------------------------------------------------------------
# Profiles
# ----------------------------------------------------------------------------


def format_profile(profile: DampingProfile) -> str:
    lines = [PROFILE_HEADER]
    for seg in profile.segments:
        if isinstance(seg, Constant):
            lines.append(f"C {_num(seg.value)} {_num(seg.duration)}")
        elif isinstance(seg, Ramp):
            lines.append(f"R {_num(seg.start)} {_num(seg.slope)} {_num(seg.duration)}")
        elif isinstance(seg, Smooth):
            lines.append(f"S {_num(seg.start)} {_num(seg.end)} {_num(seg.duration)} "
                         f"{_num(seg.lo)} {_num(seg.hi)}")
        else:  # pragma: no cover - closed set of segment types
            raise TypeError(f"unknown segment type {type(seg).__name__}")
    lines.append(f"PERIODIC {int(profile.periodic)}")
    return "\n".join(lines) + "\n"


def parse_profile(text: str) -> DampingProfile:
    """Inverse of :func:`format_profile`; errors name the offending line."""
    rows = [ln.strip() for ln in text.splitlines()]
    rows = [(i + 1, ln) for i, ln in enumerate(rows) if ln and not ln.startswith("#")]
    if not rows or rows[0][1] != PROFILE_HEADER:
        raise ValueError(f"profile: first line must be {PROFILE_HEADER!r}")
    segs, periodic = [], None
    for lineno, ln in rows[1:]:
        if periodic is not None:
            raise ValueError(f"profile line {lineno}: content after PERIODIC")
        tag, *fields = ln.split()
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            raise ValueError(f"profile line {lineno}: malformed number") from None
        arity = {"C": 2, "R": 3, "S": 5, "PERIODIC": 1}
        if tag not in arity:
            raise ValueError(f"profile line {lineno}: unknown record {tag!r}")
        if len(vals) != arity[tag]:
            raise ValueError(f"profile line {lineno}: {tag} expects {arity[tag]} fields")
        try:
            if tag == "C":
                segs.append(Constant(*vals))
            elif tag == "R":
                segs.append(Ramp(*vals))
            elif tag == "S":
                segs.append(Smooth(*vals))
            else:
                if vals[0] not in (0.0, 1.0):
                    raise ValueError("PERIODIC must be 0 or 1")
                periodic = bool(vals[0])
        except ValueError as exc:
            raise ValueError(f"profile line {lineno}: {exc}") from None
    if periodic is None:
        raise ValueError("profile: missing PERIODIC line")
    return DampingProfile(tuple(segs), periodic=periodic)


def write_profile(path, profile: DampingProfile) -> None:
    atomic_write(path, format_profile(profile))


def read_profile(path) -> DampingProfile:
    return parse_profile(Path(path).read_text())


# ----------------------------------------------------------------------------
# Envelopes, CSV and reports
# ----------------------------------------------------------------------------


def read_envelope(path) -> Envelope:
    """Read ``t,phi`` pairs (an optional header row is skipped)."""
    times, values = [], []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValueError(f"envelope row {i + 1}: expected two columns")
            try:
                t, v = float(row[0]), float(row[1])
            except ValueError:
                if i == 0:
                    continue
                raise ValueError(f"envelope row {i + 1}: malformed number") from None
            times.append(t)
            values.append(v)
    return Envelope(tuple(times), tuple(values))


def format_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(x) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    atomic_write(path, format_csv(header, rows))


def _report_value(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return "inf" if math.isinf(v) else _num(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_report_value(x) for x in v)
    return str(v)


def format_report(title: str, fields: dict, notes=()) -> str:
    """Human header, free-text notes, then a ``key: value`` block."""
    lines = [f"# {title}"]
    lines += [f"# {n}" for n in notes]
    lines.append("[values]")
    lines += [f"{k}: {_report_value(v)}" for k, v in fields.items()]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    out, on = {}, False
    for ln in text.splitlines():
        if ln.strip() == "[values]":
            on = True
        elif on and ":" in ln:
            k, v = ln.split(":", 1)
            out[k.strip()] = v.strip()
    return out
