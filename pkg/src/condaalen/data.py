"""Data model and long-format CSV input/output.

An observed subject is the triplet of a covariate vector, a finite-state
path followed up to its end time, and the reason follow-up ended (the
path was censored, or it was absorbed). Paths are right-continuous with
strictly increasing jump times.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

CENSORED = "censored"
ABSORBED = "absorbed"

_DEFAULT_COLUMNS = {"id": "id", "time": "time", "state": "state", "end": "end"}


class ParseError(ValueError):
    """Malformed CSV content; carries the offending line number."""


class ValidationError(ValueError):
    """Structurally parsed data that violates the path invariants."""


@dataclass(frozen=True)
class StateSpace:
    """Ordered distinct integer state labels plus the absorbing subset."""

    states: tuple[int, ...]
    absorbing: frozenset[int] = frozenset()

    def __post_init__(self):
        states = tuple(int(s) for s in self.states)
        if len(set(states)) != len(states):
            raise ValueError("state labels must be distinct")
        absorbing = frozenset(int(s) for s in self.absorbing)
        if not absorbing <= set(states):
            raise ValueError("absorbing states must be state labels")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "absorbing", absorbing)

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self, state: int) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise KeyError(f"unknown state label {state}") from None


@dataclass(frozen=True)
class ObservedPath:
    """One subject: covariates, initial state, jumps, and end of follow-up.

    ``jumps`` lists ``(time, new_state)`` pairs with strictly increasing
    times; ``end_time`` is the minimum of the absorption and censoring
    times and ``end_reason`` says which one was attained.
    """

    covariates: tuple[float, ...]
    initial_state: int
    jumps: tuple[tuple[float, int], ...]
    end_time: float
    end_reason: str

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(float(c) for c in self.covariates))
        object.__setattr__(
            self, "jumps", tuple((float(t), int(s)) for t, s in self.jumps)
        )

    @property
    def final_state(self) -> int:
        return self.jumps[-1][1] if self.jumps else self.initial_state

    def state_at(self, t: float) -> int:
        """State occupied at time ``t`` (right-continuous)."""
        state = self.initial_state
        for time, new in self.jumps:
            if time > t:
                break
            state = new
        return state

    def state_before(self, t: float) -> int:
        """State occupied just before time ``t``."""
        state = self.initial_state
        for time, new in self.jumps:
            if time >= t:
                break
            state = new
        return state


@dataclass(frozen=True)
class Sample:
    """A collection of observed paths over a common state space."""

    paths: tuple[ObservedPath, ...]
    state_space: StateSpace

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def covariate_dim(self) -> int:
        return len(self.paths[0].covariates) if self.paths else 0


@dataclass(frozen=True)
class EvalPoint:
    """Covariate point at which conditional estimates are requested.

    ``atom_flags[i]`` must be true exactly when ``coords[i]`` lies in the
    declared atom set of dimension ``i``.
    """

    coords: tuple[float, ...]
    atom_flags: tuple[bool, ...]

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        flags = tuple(bool(f) for f in self.atom_flags)
        if len(coords) != len(flags):
            raise ValueError("coords and atom_flags must have equal length")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "atom_flags", flags)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def d_continuous(self) -> int:
        return sum(1 for f in self.atom_flags if not f)


def counting_increments(path: ObservedPath) -> list[tuple[float, int, int]]:
    """Enumerate the jump increments of a path as ``(time, from, to)``.

    >>> p = ObservedPath((0.0,), 1, ((0.5, 2), (0.9, 1), (1.4, 2)), 1.4, ABSORBED)
    >>> counting_increments(p)
    [(0.5, 1, 2), (0.9, 2, 1), (1.4, 1, 2)]
    """
    out = []
    current = path.initial_state
    for time, new in path.jumps:
        out.append((time, current, new))
        current = new
    return out


def validate(sample: Sample) -> list[str]:
    """Check every path invariant; returns violation messages, empty if clean.

    Violations name the offending subject by its position in the sample.
    """
    problems: list[str] = []
    space = sample.state_space
    known = set(space.states)
    dim = sample.covariate_dim
    for idx, path in enumerate(sample.paths):
        where = f"subject {idx}"
        if len(path.covariates) != dim:
            problems.append(f"{where}: covariate dimension {len(path.covariates)} != {dim}")
        if not path.end_time > 0:
            problems.append(f"{where}: end_time must be positive, got {path.end_time}")
        if path.end_reason not in (CENSORED, ABSORBED):
            problems.append(f"{where}: unknown end_reason {path.end_reason!r}")
        if path.initial_state not in known:
            problems.append(f"{where}: unknown state label {path.initial_state}")
        if path.initial_state in space.absorbing:
            problems.append(f"{where}: initial state {path.initial_state} is absorbing")
        prev_time = 0.0
        prev_state = path.initial_state
        for time, state in path.jumps:
            if state not in known:
                problems.append(f"{where}: unknown state label {state}")
            if time <= prev_time:
                problems.append(f"{where}: jump times must be positive and strictly increasing, got t={time}")
            if time > path.end_time:
                problems.append(f"{where}: jump at t={time} after end_time={path.end_time}")
            if state == prev_state:
                problems.append(f"{where}: self-transition into {state} at t={time}")
            if prev_state in space.absorbing:
                problems.append(f"{where}: jump out of absorbing state {prev_state} at t={time}")
            prev_time, prev_state = time, state
        if path.end_reason == ABSORBED:
            if path.final_state not in space.absorbing:
                problems.append(f"{where}: absorbed in non-absorbing state {path.final_state}")
            if not path.jumps or path.jumps[-1][0] != path.end_time:
                problems.append(f"{where}: absorbed path must end at its last jump time")
    return problems


def _resolve_schema(schema: dict | None) -> dict:
    cols = dict(_DEFAULT_COLUMNS)
    covariates = None
    states = None
    absorbing = None
    if schema:
        for key in ("id", "time", "state", "end"):
            if key in schema:
                cols[key] = schema[key]
        covariates = schema.get("covariates")
        states = schema.get("states")
        absorbing = schema.get("absorbing")
    return {"cols": cols, "covariates": covariates, "states": states, "absorbing": absorbing}


def load_sample(path, schema: dict | None = None) -> Sample:
    """Read a long-format CSV into a :class:`Sample`.

    One row per observed state entry, grouped by subject and sorted by
    time. The first row of each subject sits at time 0, carries the
    covariate columns, and gives the initial state. The last row carries
    the ``end`` flag: 1 for censored, 0 for absorbed. A censored subject
    whose follow-up outlasts its final jump repeats the current state in
    a terminal marker row at the censoring time.

    Parameters
    ----------
    path : str or pathlib.Path
        CSV file with a header row.
    schema : dict, optional
        Column-name overrides for ``id``, ``time``, ``state``, ``end``,
        an explicit ``covariates`` column list, and optional ``states`` /
        ``absorbing`` label declarations. By default covariate columns
        are those named ``x1, x2, ...`` and the state space is inferred
        from the data.

    Raises
    ------
    ParseError
        Malformed rows, duplicate (id, time) pairs, missing columns.
    ValidationError
        Parsed paths that violate the path invariants.
    """
    conf = _resolve_schema(schema)
    cols = conf["cols"]
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: missing header") from None
        header = [h.strip() for h in header]
        position = {name: i for i, name in enumerate(header)}
        for key in ("id", "time", "state"):
            if cols[key] not in position:
                raise ParseError(f"missing required column {cols[key]!r}")
        if conf["covariates"] is not None:
            covar_cols = list(conf["covariates"])
            for name in covar_cols:
                if name not in position:
                    raise ParseError(f"missing covariate column {name!r}")
        else:
            covar_cols = []
            k = 1
            while f"x{k}" in position:
                covar_cols.append(f"x{k}")
                k += 1
        if not covar_cols:
            raise ParseError("no covariate columns found (expected x1, x2, ...)")
        end_col = position.get(cols["end"])

        rows_by_id: dict[str, list[tuple[float, int, str, int, tuple[str, ...]]]] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            sid = row[position[cols["id"]]].strip()
            if not sid:
                raise ParseError(f"line {lineno}: empty subject id")
            try:
                time = float(row[position[cols["time"]]])
            except ValueError:
                raise ParseError(f"line {lineno}: unparsable time {row[position[cols['time']]]!r}") from None
            raw_state = row[position[cols["state"]]].strip()
            try:
                state = int(raw_state)
            except ValueError:
                raise ParseError(f"line {lineno}: unparsable state {raw_state!r}") from None
            end_flag = row[end_col].strip() if end_col is not None else ""
            cells = tuple(row[position[name]].strip() for name in covar_cols)
            if sid not in rows_by_id:
                rows_by_id[sid] = []
                order.append(sid)
            rows_by_id[sid].append((time, state, end_flag, lineno, cells))

        if not order:
            raise ParseError("no subjects in file")

    paths = []
    for sid in order:
        rows = sorted(rows_by_id[sid], key=lambda r: r[0])
        for (t_a, *_), (t_b, _, _, line_b, _) in zip(rows, rows[1:]):
            if t_b <= t_a:
                raise ParseError(f"duplicate time for id {sid!r} at t={t_b} (line {line_b})")
        first_time, first_state, _, first_line, first_cells = rows[0]
        if first_time != 0.0:
            raise ValidationError(f"id {sid!r}: first row must be at time 0 (line {first_line})")
        covariates = []
        for name, cell in zip(covar_cols, first_cells):
            try:
                covariates.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"line {first_line}: unparsable covariate {name}={cell!r}"
                ) from None
        last_time, last_state, last_flag, last_line, _ = rows[-1]
        if last_flag not in ("0", "1"):
            raise ValidationError(
                f"id {sid!r}: terminal row needs end flag 0 or 1 (line {last_line})"
            )
        for time, state, flag, lineno, _ in rows[1:-1]:
            if flag not in ("", "0"):
                raise ValidationError(f"id {sid!r}: end flag on non-terminal row (line {lineno})")
        censored = last_flag == "1"
        jumps = []
        current = first_state
        for time, state, _, lineno, _ in rows[1:]:
            if state != current:
                jumps.append((time, state))
                current = state
            elif (time, state) != (last_time, last_state) or not censored:
                raise ValidationError(
                    f"id {sid!r}: repeated state {state} outside a censoring marker (line {lineno})"
                )
        paths.append(
            ObservedPath(
                covariates=tuple(covariates),
                initial_state=first_state,
                jumps=tuple(jumps),
                end_time=last_time,
                end_reason=CENSORED if censored else ABSORBED,
            )
        )

    if conf["states"] is not None:
        space = StateSpace(tuple(conf["states"]), frozenset(conf["absorbing"] or ()))
        known = set(space.states)
        for sid, p in zip(order, paths):
            bad = [s for s in [p.initial_state] + [s for _, s in p.jumps] if s not in known]
            if bad:
                raise ValidationError(f"id {sid!r}: unknown state label {bad[0]}")
    else:
        seen: set[int] = set()
        terminal: set[int] = set()
        for p in paths:
            seen.add(p.initial_state)
            seen.update(s for _, s in p.jumps)
            if p.end_reason == ABSORBED:
                terminal.add(p.final_state)
        space = StateSpace(tuple(sorted(seen)), frozenset(terminal))

    sample = Sample(tuple(paths), space)
    problems = validate(sample)
    if problems:
        raise ValidationError("; ".join(problems))
    return sample


def _fmt(value: float) -> str:
    return format(value, ".17g")


def write_sample(sample: Sample, path) -> None:
    """Write a sample to long-format CSV; inverse of :func:`load_sample`."""
    dim = sample.covariate_dim
    header = ["id", "time", "state", "end"] + [f"x{k}" for k in range(1, dim + 1)]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for idx, p in enumerate(sample.paths):
            covars = [_fmt(c) for c in p.covariates]
            blanks = [""] * dim
            rows = [["0", _fmt(0.0), str(p.initial_state), ""]]
            for time, state in p.jumps:
                rows.append(["0", _fmt(time), str(state), ""])
            if p.end_reason == CENSORED:
                if not p.jumps or p.jumps[-1][0] != p.end_time:
                    rows.append(["0", _fmt(p.end_time), str(p.final_state), ""])
                rows[-1][3] = "1"
            else:
                rows[-1][3] = "0"
            for rownum, row in enumerate(rows):
                row[0] = f"s{idx}"
                writer.writerow(row + (covars if rownum == 0 else blanks))
