"""Switching-trial records, CSV I/O, observed-pattern classification and
the synthetic trial generator."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Optional

import numpy as np

from . import weibull

__all__ = [
    "SwitchStatus",
    "NON_SWITCHER",
    "PatientRecord",
    "AugmentedUnit",
    "Dataset",
    "ObservedPattern",
    "classify",
    "parse_dataset",
    "serialize_dataset",
    "read_dataset",
    "write_dataset",
    "GeneratorConfig",
    "LatentTruth",
    "generate",
    "serialize_latent",
    "parse_latent",
    "MalformedRow",
    "InvariantViolation",
    "DATA_HEADER",
    "LATENT_HEADER",
]

DATA_HEADER = ["id", "z", "c", "s_tilde", "s_event", "y_tilde", "y_event"]
LATENT_HEADER = ["id", "s0", "y0", "y1"]


class MalformedRow(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvariantViolation(ValueError):
    def __init__(self, unit_id, description: str):
        super().__init__(f"unit {unit_id}: {description}")
        self.unit_id = unit_id
        self.description = description


@dataclass(frozen=True)
class SwitchStatus:
    """Control-arm switching status: ``time is None`` marks a non-switcher."""

    time: Optional[float] = None

    def __post_init__(self):
        if self.time is not None and not (np.isfinite(self.time) and self.time > 0):
            raise ValueError(f"switching time must be positive and finite, got {self.time!r}")

    @property
    def is_switcher(self) -> bool:
        return self.time is not None

    @classmethod
    def at(cls, time: float) -> "SwitchStatus":
        return cls(float(time))

    def __repr__(self):
        return "NonSwitcher" if self.time is None else f"SwitchAt({self.time!r})"


NON_SWITCHER = SwitchStatus()


@dataclass(frozen=True)
class PatientRecord:
    id: int
    z: int
    c: float
    s_tilde: Optional[float]
    s_event: int
    y_tilde: float
    y_event: int

    def validate(self, c_max: float = np.inf) -> None:
        bad = lambda msg: InvariantViolation(self.id, msg)  # noqa: E731
        if self.z not in (0, 1):
            raise bad("z must be 0 or 1")
        if self.s_event not in (0, 1) or self.y_event not in (0, 1):
            raise bad("event indicators must be 0 or 1")
        if not (np.isfinite(self.c) and 0 < self.c <= c_max):
            raise bad(f"censoring time must lie in (0, {c_max}]")
        if not (np.isfinite(self.y_tilde) and 0 < self.y_tilde <= self.c):
            raise bad("y_tilde must lie in (0, c]")
        if self.y_event == 0 and self.y_tilde != self.c:
            raise bad("censored survival requires y_tilde == c")
        if self.z == 1:
            if self.s_event == 1:
                raise bad("treated unit cannot have an observed switch")
            if self.s_tilde is not None:
                raise bad("treated unit must have an empty s_tilde")
            return
        if self.s_tilde is None:
            raise bad("control unit requires s_tilde")
        if self.s_event == 1:
            if not (0 < self.s_tilde <= min(self.y_tilde, self.c)):
                raise bad("observed switch must satisfy 0 < s_tilde <= min(y_tilde, c)")
        elif self.s_tilde != self.c:
            raise bad("unobserved switch requires s_tilde == c")


@dataclass(frozen=True)
class AugmentedUnit:
    """Imputed switching status and (for kappa > 0) control-arm survival."""

    s_star: SwitchStatus
    y0_star: Optional[float] = None


class ObservedPattern(enum.Enum):
    KNOWN_NON_SWITCHER = "KnownNonSwitcher"
    KNOWN_SWITCHER_DEAD = "KnownSwitcherDead"
    KNOWN_SWITCHER_CENSORED = "KnownSwitcherCensored"
    AMBIGUOUS_CONTROL = "AmbiguousControl"
    TREATED_UNCENSORED = "TreatedUncensored"
    TREATED_CENSORED = "TreatedCensored"


def classify(record: PatientRecord) -> ObservedPattern:
    if record.z == 1:
        if record.y_event:
            return ObservedPattern.TREATED_UNCENSORED
        return ObservedPattern.TREATED_CENSORED
    if record.s_event:
        if record.y_event:
            return ObservedPattern.KNOWN_SWITCHER_DEAD
        return ObservedPattern.KNOWN_SWITCHER_CENSORED
    if record.y_event:
        return ObservedPattern.KNOWN_NON_SWITCHER
    return ObservedPattern.AMBIGUOUS_CONTROL


class Columns(NamedTuple):
    id: np.ndarray
    z: np.ndarray
    c: np.ndarray
    s_tilde: np.ndarray  # nan for treated
    s_event: np.ndarray
    y_tilde: np.ndarray
    y_event: np.ndarray


@dataclass(frozen=True)
class Dataset:
    records: tuple
    c_max: float

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate unit ids")
        for r in self.records:
            r.validate(self.c_max)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @cached_property
    def columns(self) -> Columns:
        n = len(self.records)
        out = Columns(
            id=np.array([r.id for r in self.records], dtype=np.int64),
            z=np.array([r.z for r in self.records], dtype=np.int8),
            c=np.array([r.c for r in self.records], dtype=float),
            s_tilde=np.array([np.nan if r.s_tilde is None else r.s_tilde for r in self.records],
                             dtype=float),
            s_event=np.array([r.s_event for r in self.records], dtype=np.int8),
            y_tilde=np.array([r.y_tilde for r in self.records], dtype=float),
            y_event=np.array([r.y_event for r in self.records], dtype=np.int8),
        )
        for a in out:
            a.setflags(write=False)
        assert all(len(a) == n for a in out)
        return out

    @classmethod
    def from_columns(cls, c_max, *, id, z, c, s_tilde, s_event, y_tilde, y_event):
        recs = []
        for i in range(len(z)):
            zi = int(z[i])
            recs.append(PatientRecord(
                id=int(id[i]), z=zi, c=float(c[i]),
                s_tilde=None if zi == 1 else float(s_tilde[i]),
                s_event=int(s_event[i]), y_tilde=float(y_tilde[i]), y_event=int(y_event[i]),
            ))
        return cls(tuple(recs), float(c_max))


# -- CSV -------------------------------------------------------------------

def _fmt(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def serialize_dataset(ds: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATA_HEADER)
    for r in ds.records:
        w.writerow([r.id, r.z, _fmt(r.c), _fmt(r.s_tilde), r.s_event, _fmt(r.y_tilde), r.y_event])
    return buf.getvalue()


def parse_dataset(text, c_max: float) -> Dataset:
    """Parse CSV text (or a text stream) into a validated :class:`Dataset`."""
    if not isinstance(text, str):
        text = text.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRow(1, "missing header") from None
    if [h.strip() for h in header] != DATA_HEADER:
        raise MalformedRow(1, f"header must be {','.join(DATA_HEADER)}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(DATA_HEADER):
            raise MalformedRow(lineno, f"expected {len(DATA_HEADER)} fields, got {len(row)}")
        try:
            uid, z, c, s, se, y, ye = (f.strip() for f in row)
            rec = PatientRecord(
                id=int(uid), z=int(z), c=float(c),
                s_tilde=None if s == "" else float(s),
                s_event=int(se), y_tilde=float(y), y_event=int(ye),
            )
        except ValueError as exc:
            raise MalformedRow(lineno, str(exc)) from None
        rec.validate(c_max)
        records.append(rec)
    return Dataset(tuple(records), float(c_max))


def read_dataset(path, c_max: float) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh.read(), c_max)


def write_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(serialize_dataset(ds))


# -- generator -------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    theta_true: "object"  # model.Theta; kept untyped to avoid an import cycle
    p_treat: float = 0.5
    c_min: float = 1.5
    c_max: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("generator needs n >= 2")
        if not 0 < self.p_treat < 1:
            raise ValueError("p_treat must lie in (0, 1)")
        if not 0 < self.c_min <= self.c_max:
            raise ValueError("need 0 < c_min <= c_max")


@dataclass(frozen=True)
class LatentTruth:
    """Per-unit potential outcomes; ``s0`` is nan for non-switchers."""

    id: np.ndarray
    s0: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    extra: dict = field(default_factory=dict)

    def statuses(self):
        return [NON_SWITCHER if np.isnan(s) else SwitchStatus.at(s) for s in self.s0]


def _weibull_draw(rng, shape, log_rate):
    u = rng.random(np.shape(log_rate))
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return np.exp((np.log(-np.log(u)) - log_rate) / shape)


def draw_potential_outcomes(theta, n, rng):
    """Draw (is_non_switcher, s0, y0, y1) for ``n`` units from the generative model."""
    is_ns = rng.random(n) < theta.pi
    s = _weibull_draw(rng, theta.sw.shape, np.full(n, theta.sw.log_rate))
    log_s = np.log(s)
    y0_ns = _weibull_draw(rng, theta.y0_ns.shape, np.full(n, theta.y0_ns.log_rate))
    y0_sw = s + _weibull_draw(rng, theta.y0_sw.shape, theta.y0_sw.log_rate + theta.lam * log_s)
    y0 = np.where(is_ns, y0_ns, y0_sw)
    r1_ns = _weibull_draw(rng, theta.y1_ns.shape, np.full(n, theta.y1_ns.log_rate))
    r1_sw = _weibull_draw(rng, theta.y1_sw.shape, theta.y1_sw.log_rate + theta.lam * log_s)
    y1 = theta.kappa * y0 + np.where(is_ns, r1_ns, r1_sw)
    s0 = np.where(is_ns, np.nan, s)
    return is_ns, s0, y0, y1


def observe(z, c, s0, y0, y1):
    """Apply the censoring rules; returns the observed columns as arrays.

    Ties at ``c`` count as observed events.
    """
    z = np.asarray(z)
    is_sw = ~np.isnan(s0)
    y_obs = np.where(z == 1, y1, y0)
    y_event = (y_obs <= c).astype(np.int8)
    y_tilde = np.minimum(y_obs, c)
    s_event = ((z == 0) & is_sw & (np.where(is_sw, s0, np.inf) <= c)).astype(np.int8)
    s_tilde = np.where(z == 1, np.nan, np.where(s_event == 1, s0, c))
    return s_tilde, s_event, y_tilde, y_event


def generate(config: GeneratorConfig):
    """Simulate a trial; returns ``(Dataset, LatentTruth)``. Deterministic in the seed."""
    rng = np.random.default_rng(config.seed)
    n = config.n
    z = (rng.random(n) < config.p_treat).astype(np.int8)
    c = rng.uniform(config.c_min, config.c_max, n)
    _, s0, y0, y1 = draw_potential_outcomes(config.theta_true, n, rng)
    s_tilde, s_event, y_tilde, y_event = observe(z, c, s0, y0, y1)
    ids = np.arange(1, n + 1)
    ds = Dataset.from_columns(config.c_max, id=ids, z=z, c=c, s_tilde=s_tilde,
                              s_event=s_event, y_tilde=y_tilde, y_event=y_event)
    return ds, LatentTruth(ids, s0, y0, y1)


def serialize_latent(truth: LatentTruth) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LATENT_HEADER)
    for i, s, a, b in zip(truth.id, truth.s0, truth.y0, truth.y1):
        w.writerow([int(i), "" if np.isnan(s) else repr(float(s)), repr(float(a)), repr(float(b))])
    return buf.getvalue()


def parse_latent(text: str) -> LatentTruth:
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != LATENT_HEADER:
        raise MalformedRow(1, f"header must be {','.join(LATENT_HEADER)}")
    body = [r for r in rows[1:] if r]
    return LatentTruth(
        id=np.array([int(r[0]) for r in body]),
        s0=np.array([np.nan if r[1] == "" else float(r[1]) for r in body]),
        y0=np.array([float(r[2]) for r in body]),
        y1=np.array([float(r[3]) for r in body]),
    )


def observed_records(records: Iterable[PatientRecord]):
    return [r for r in records]
