"""Multi-unit event-stream data: containers, CSV ingestion, truncation, splits.

All values are immutable after construction and all operations are pure, so
datasets can be shared freely across threads and worker processes.
"""

import csv
import io

import numpy as np

from .errors import DataError, ParseError

CSV_HEADER = ("unit_id", "event_time")


class ObservationWindow:
    """Half-open-free time interval [start, end] that bounds all event times."""

    __slots__ = ("start", "end")

    def __init__(self, start, end):
        start = float(start)
        end = float(end)
        if not start < end:
            raise DataError(f"window start must be < end, got [{start}, {end}]")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    def __setattr__(self, name, value):
        raise AttributeError("ObservationWindow is immutable")

    @property
    def length(self):
        return self.end - self.start

    def contains(self, t):
        return self.start <= t <= self.end

    def __eq__(self, other):
        return (
            isinstance(other, ObservationWindow)
            and self.start == other.start
            and self.end == other.end
        )

    def __repr__(self):
        return f"ObservationWindow({self.start}, {self.end})"


class UnitRecord:
    """One unit's sorted event times plus the time up to which it was observed.

    ``observed_until`` is the right edge of the unit's observation region; it
    equals the window end for fully observed units and t* after truncation.
    """

    __slots__ = ("unit_id", "event_times", "observed_until")

    def __init__(self, unit_id, event_times, observed_until=None):
        times = np.asarray(event_times, dtype=float)
        if times.ndim != 1:
            raise DataError(f"unit {unit_id!r}: event times must be 1-D")
        if times.size > 1 and np.any(np.diff(times) < 0):
            raise DataError(f"unit {unit_id!r}: event times must be sorted ascending")
        times.setflags(write=False)
        object.__setattr__(self, "unit_id", str(unit_id))
        object.__setattr__(self, "event_times", times)
        object.__setattr__(
            self, "observed_until", None if observed_until is None else float(observed_until)
        )

    def __setattr__(self, name, value):
        raise AttributeError("UnitRecord is immutable")

    @property
    def n_events(self):
        return int(self.event_times.size)

    def __repr__(self):
        return f"UnitRecord({self.unit_id!r}, {self.n_events} events)"


class EventDataset:
    """A fleet of :class:`UnitRecord` sharing one observation window."""

    __slots__ = ("units", "window")

    def __init__(self, units, window):
        units = tuple(units)
        if not units:
            raise DataError("no units")
        ids = [u.unit_id for u in units]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate unit ids: {dupes}")
        resolved = []
        for u in units:
            for t in u.event_times:
                if not window.contains(t):
                    raise DataError(
                        f"unit {u.unit_id!r}: event time {t} outside window "
                        f"[{window.start}, {window.end}]"
                    )
            until = window.end if u.observed_until is None else u.observed_until
            if not window.start < until <= window.end:
                raise DataError(
                    f"unit {u.unit_id!r}: observed_until {until} outside window"
                )
            if u.event_times.size and u.event_times[-1] > until:
                raise DataError(
                    f"unit {u.unit_id!r}: event beyond observed_until {until}"
                )
            if u.observed_until is None:
                u = UnitRecord(u.unit_id, u.event_times, until)
            resolved.append(u)
        object.__setattr__(self, "units", tuple(resolved))
        object.__setattr__(self, "window", window)

    def __setattr__(self, name, value):
        raise AttributeError("EventDataset is immutable")

    @property
    def n_units(self):
        return len(self.units)

    @property
    def unit_ids(self):
        return [u.unit_id for u in self.units]

    @property
    def total_events(self):
        return sum(u.n_events for u in self.units)

    def index_of(self, unit_id):
        for i, u in enumerate(self.units):
            if u.unit_id == unit_id:
                return i
        raise DataError(f"unknown unit {unit_id!r}; known units: {self.unit_ids}")

    def unit(self, unit_id):
        return self.units[self.index_of(unit_id)]

    def __repr__(self):
        return (
            f"EventDataset({self.n_units} units, {self.total_events} events, "
            f"window [{self.window.start}, {self.window.end}])"
        )


def _parse_rows(lines, window, align_zero):
    header = next(lines, None)
    if header is None:
        raise ParseError("empty file", line=1)
    if tuple(s.strip() for s in header) != CSV_HEADER:
        raise ParseError(
            f"expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}", line=1
        )
    order = []
    times = {}
    for lineno, row in enumerate(lines, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno)
        uid = row[0].strip()
        if not uid:
            raise ParseError("empty unit_id", line=lineno)
        try:
            t = float(row[1])
        except ValueError:
            raise ParseError(f"bad event_time {row[1]!r}", line=lineno) from None
        if not np.isfinite(t):
            raise ParseError(f"non-finite event_time {row[1]!r}", line=lineno)
        if uid not in times:
            order.append(uid)
            times[uid] = []
        times[uid].append(t)

    if not order:
        raise DataError("no units")

    units = []
    for uid in order:
        ts = np.sort(np.asarray(times[uid], dtype=float))
        if align_zero and ts.size:
            ts = ts - ts[0] + window.start
        for t in ts:
            if not window.contains(t):
                raise DataError(
                    f"unit {uid!r}: event time {t} outside window "
                    f"[{window.start}, {window.end}]"
                )
        units.append(UnitRecord(uid, ts))
    return EventDataset(units, window)


def load_events(path, window, align_zero=False):
    """Load an event CSV (header ``unit_id,event_time``) into an EventDataset.

    Units appear in first-appearance order and each unit's times are sorted.
    With ``align_zero`` each unit's first event is shifted to the window start
    (per-unit calendar alignment); times are validated against the window
    after any alignment.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _parse_rows(csv.reader(fh), window, align_zero)


def loads_events(text, window, align_zero=False):
    """Parse event CSV from a string; see :func:`load_events`."""
    return _parse_rows(csv.reader(io.StringIO(text)), window, align_zero)


def save_events(ds, path):
    """Write the dataset back to the canonical CSV format."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for u in ds.units:
            for t in u.event_times:
                writer.writerow([u.unit_id, repr(float(t))])


def truncate_at_percentile(ds, unit_id, alpha):
    """Keep only the named unit's events with t <= t* = start + alpha * length.

    The boundary is inclusive and the returned dataset records t* as the
    unit's ``observed_until`` so later prediction knows the observation edge.
    Other units are untouched. Idempotent for fixed alpha.
    """
    if not 0.0 < alpha <= 1.0:
        raise DataError(f"alpha must be in (0, 1], got {alpha}")
    idx = ds.index_of(unit_id)
    t_star = ds.window.start + alpha * ds.window.length
    units = list(ds.units)
    kept = units[idx].event_times[units[idx].event_times <= t_star]
    units[idx] = UnitRecord(unit_id, kept, observed_until=t_star)
    return EventDataset(units, ds.window)


def holdout_split(ds, test_unit):
    """Partition into (train view of N-1 units, test view of 1 unit)."""
    if ds.n_units < 2:
        raise DataError("holdout_split needs at least 2 units")
    idx = ds.index_of(test_unit)
    train = [u for i, u in enumerate(ds.units) if i != idx]
    test = [ds.units[idx]]
    return EventDataset(train, ds.window), EventDataset(test, ds.window)


def single_unit_view(ds, unit_id):
    """Dataset containing only the named unit (baseline fits never see peers)."""
    return EventDataset([ds.unit(unit_id)], ds.window)
