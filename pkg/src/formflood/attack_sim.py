"""Seeded discrete-event simulation of a form-flooding attack on one mailbox.

An attacker submits ``F`` forms at a fixed rate.  Each launch pad draws a
behavior from the configured mix and answers with immediate replies,
periodic newsletters, acknowledgment retries and (for poorly behaved sites)
resale of the address to spam sources.  Every delivery lands in a
quota-bounded mailbox; once the quota is reached the account is dead and
further arrivals bounce.

Times are minutes since the start of the attack, sizes are bytes.

Random numbers are drawn from one independent stream per launch pad
(``random.Random`` seeded from ``(seed, form index)``), so form ``i`` behaves
identically whatever the total number of forms.  Increasing ``F`` with a
fixed seed therefore only ever adds mail.
"""

from __future__ import annotations

import csv
import dataclasses
import heapq
import io
import json
import logging
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MIB = 1024 * 1024
DEFAULT_QUOTA = 2 * MIB
DEFAULT_FILL_RATE = 116.0
HOUR = 60.0
DAY = 24 * HOUR

SIZE_FLOOR = 200.0
SIZE_CEIL = 100 * 1024.0


class ConfigError(ValueError):
    """Raised for an AttackConfig or scenario that violates its invariants."""


# -- distributions -----------------------------------------------------------

_DIST_KEYS = {
    "fixed": ("value",),
    "exp": ("mean",),
    "uniform": ("low", "high"),
    "lognormal": ("median", "sigma"),
}


@dataclass(frozen=True)
class Distribution:
    """A small parametric distribution for delays (minutes) and sizes (bytes).

    ``lo``/``hi`` clamp every draw.  Kinds: ``fixed(value)``, ``exp(mean)``,
    ``uniform(low, high)`` and ``lognormal(median, sigma)``.
    """

    kind: str
    value: float | None = None
    mean: float | None = None
    low: float | None = None
    high: float | None = None
    median: float | None = None
    sigma: float | None = None
    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if self.kind not in _DIST_KEYS:
            raise ConfigError(f"unknown distribution kind {self.kind!r}")
        for key in _DIST_KEYS[self.kind]:
            if getattr(self, key) is None:
                raise ConfigError(f"{self.kind} distribution needs {key!r}")
        if self.kind == "uniform" and not self.low <= self.high:
            raise ConfigError("uniform distribution needs low <= high")
        if self.kind == "lognormal" and self.sigma < 0:
            raise ConfigError("lognormal sigma must be >= 0")

    @classmethod
    def fixed(cls, value):
        return cls("fixed", value=float(value))

    @classmethod
    def exp(cls, mean):
        return cls("exp", mean=float(mean))

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", low=float(low), high=float(high))

    @classmethod
    def lognormal(cls, median, sigma, lo=SIZE_FLOOR, hi=SIZE_CEIL):
        return cls("lognormal", median=float(median), sigma=float(sigma), lo=lo, hi=hi)

    def sample(self, rng: random.Random) -> float:
        if self.kind == "fixed":
            x = self.value
        elif self.kind == "exp":
            x = rng.expovariate(1.0 / self.mean)
        elif self.kind == "uniform":
            x = rng.uniform(self.low, self.high)
        else:
            x = self.median * math.exp(self.sigma * rng.gauss(0.0, 1.0))
        if self.lo is not None and x < self.lo:
            x = self.lo
        if self.hi is not None and x > self.hi:
            x = self.hi
        return x

    def expected(self) -> float:
        """Mean of the unclamped distribution."""
        if self.kind == "fixed":
            return self.value
        if self.kind == "exp":
            return self.mean
        if self.kind == "uniform":
            return 0.5 * (self.low + self.high)
        return self.median * math.exp(0.5 * self.sigma**2)

    def positive(self) -> bool:
        lowest = {
            "fixed": self.value,
            "exp": self.mean,
            "uniform": self.low,
            "lognormal": self.median,
        }[self.kind]
        if self.lo is not None:
            lowest = max(lowest, self.lo)
        return lowest > 0

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for key in _DIST_KEYS[self.kind] + ("lo", "hi"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Distribution":
        _reject_unknown(d, {"kind", "lo", "hi", *_DIST_KEYS.get(d.get("kind"), ())}, "distribution")
        return cls(**{k: (v if k == "kind" else float(v)) for k, v in d.items()})


def default_message_size() -> Distribution:
    return Distribution.lognormal(4096, 1.0)


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class LaunchPadBehavior:
    """Stochastic response profile of one launch pad.

    ``periodic_interval`` is the newsletter period; the first issue goes out at
    a uniformly random phase within one period because sites mail on their own
    schedule.  Acknowledgment retries repeat the immediate reply every
    ``ack_interval`` minutes.  With ``snowball_prob`` the address is resold
    after ``snowball_delay`` to ``snowball_spawn_rate`` spam sources; each one
    mails on acquisition and then every ``spam_interval`` minutes.
    """

    name: str
    immediate_prob: float = 0.0
    immediate_delay: Distribution = Distribution.exp(0.5)
    message_size: Distribution = field(default_factory=default_message_size)
    periodic_interval: float | None = None
    ack_retries: int = 0
    ack_interval: float = 12 * HOUR
    snowball_prob: float = 0.0
    snowball_delay: Distribution = Distribution.uniform(HOUR, DAY)
    snowball_spawn_rate: int = 0
    spam_interval: float = 6 * HOUR

    def __post_init__(self):
        for name in ("immediate_prob", "snowball_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{self.name}: {name} must lie in [0, 1], got {p}")
        for name in ("immediate_delay", "snowball_delay", "message_size"):
            if not getattr(self, name).positive():
                raise ConfigError(f"{self.name}: {name} must be > 0")
        for name in ("periodic_interval", "ack_interval", "spam_interval"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{self.name}: {name} must be > 0")
        if self.ack_retries < 0 or self.snowball_spawn_rate < 0:
            raise ConfigError(f"{self.name}: counts must be >= 0")

    def expected_rate(self) -> float:
        """Long-run messages per minute contributed by one pad of this kind."""
        rate = 0.0
        if self.periodic_interval:
            rate += 1.0 / self.periodic_interval
        rate += self.snowball_prob * self.snowball_spawn_rate / self.spam_interval
        return rate

    def to_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            d[f.name] = v.to_dict() if isinstance(v, Distribution) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LaunchPadBehavior":
        _reject_unknown(d, {f.name for f in dataclasses.fields(cls)}, "behavior")
        kw = {}
        for k, v in d.items():
            if k in ("immediate_delay", "snowball_delay", "message_size"):
                v = Distribution.from_dict(v)
            kw[k] = v
        return cls(**kw)


@dataclass(frozen=True)
class AttackConfig:
    """One attack: ``num_forms`` forms filled at ``fill_rate`` per minute.

    ``horizon`` of None means ``4 * attack_time + 48 h``.  In ``sms_mode`` the
    quota counts messages instead of bytes.
    """

    num_forms: int
    behavior_mix: tuple[tuple[LaunchPadBehavior, float], ...]
    fill_rate: float = DEFAULT_FILL_RATE
    quota: float = DEFAULT_QUOTA
    sms_mode: bool = False
    horizon: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "behavior_mix", tuple((b, float(w)) for b, w in self.behavior_mix))
        if self.num_forms < 0:
            raise ConfigError("num_forms must be >= 0")
        if self.fill_rate <= 0:
            raise ConfigError("fill_rate must be > 0")
        if self.quota <= 0:
            raise ConfigError("quota must be > 0")
        if not self.behavior_mix:
            raise ConfigError("behavior_mix is empty")
        weights = [w for _, w in self.behavior_mix]
        if any(w < 0 for w in weights) or not math.isclose(sum(weights), 1.0, abs_tol=1e-9):
            raise ConfigError(f"behavior weights must be >= 0 and sum to 1, got {sum(weights)}")
        if self.horizon is not None and self.horizon <= 0:
            raise ConfigError("horizon must be > 0")

    @property
    def attack_time(self) -> float:
        return self.num_forms / self.fill_rate

    @property
    def effective_horizon(self) -> float:
        if self.horizon is not None:
            return self.horizon
        return 4 * self.attack_time + 2 * DAY

    def replace(self, **changes) -> "AttackConfig":
        return dataclasses.replace(self, **changes)

    def expected_rate_per_form(self) -> float:
        """Analytic long-run arrival rate per submitted form (msgs/min)."""
        return sum(w * b.expected_rate() for b, w in self.behavior_mix)

    def to_dict(self) -> dict:
        return {
            "num_forms": self.num_forms,
            "fill_rate": self.fill_rate,
            "behavior_mix": [{"weight": w, "behavior": b.to_dict()} for b, w in self.behavior_mix],
            "quota": self.quota,
            "sms_mode": self.sms_mode,
            "horizon": self.horizon,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        _reject_unknown(d, {f.name for f in dataclasses.fields(cls)}, "attack")
        d = dict(d)
        try:
            mix = d.pop("behavior_mix")
        except KeyError:
            raise ConfigError("attack: missing field 'behavior_mix'") from None
        entries = []
        for entry in mix:
            _reject_unknown(entry, {"weight", "behavior"}, "behavior_mix entry")
            entries.append((LaunchPadBehavior.from_dict(entry["behavior"]), entry["weight"]))
        try:
            return cls(behavior_mix=tuple(entries), **d)
        except TypeError as exc:
            raise ConfigError(f"attack: {exc}") from None


def _reject_unknown(d: dict, allowed: Iterable[str], where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


# -- behavior presets --------------------------------------------------------


def prior_mix() -> tuple[tuple[LaunchPadBehavior, float], ...]:
    """The uncalibrated starting mix: responders, newsletters, ack retriers, inert.

    Kept for reference and for the calibration demo.  It is far too "loud" for
    the measured results (a 2050-form attack would kill during the attack).
    """
    size = default_message_size()
    return (
        (LaunchPadBehavior("immediate", immediate_prob=1.0, message_size=size,
                           snowball_prob=0.1, snowball_spawn_rate=2), 0.25),
        (LaunchPadBehavior("newsletter", periodic_interval=DAY, message_size=size,
                           snowball_prob=0.1, snowball_spawn_rate=2), 0.30),
        (LaunchPadBehavior("ack", immediate_prob=1.0, ack_retries=3, ack_interval=12 * HOUR,
                           message_size=size, snowball_prob=0.1, snowball_spawn_rate=2), 0.25),
        (LaunchPadBehavior("inert"), 0.20),
    )


def calibrated_mix(newsletter_interval: float = DAY, spam_interval: float = 14 * DAY,
                   snowball_prob: float = 0.3, spawn: int = 2) -> tuple:
    """Default launch-pad population used by the bundled scenarios.

    Most harvested forms never mail anything.  Confirmation and ack messages
    are short.  The bulk of the early volume comes from co-registration sites
    that pass the address on to affiliated senders within minutes; those
    senders then keep mailing on a slow cycle.
    """
    confirm = Distribution.lognormal(1536, 0.5)
    size = default_message_size()
    return (
        (LaunchPadBehavior("confirm", immediate_prob=1.0, immediate_delay=Distribution.exp(0.5),
                           message_size=confirm), 0.03),
        (LaunchPadBehavior("ack", immediate_prob=1.0, immediate_delay=Distribution.exp(0.5),
                           ack_retries=3, ack_interval=12 * HOUR, message_size=confirm), 0.01),
        (LaunchPadBehavior("newsletter", periodic_interval=newsletter_interval,
                           message_size=size), 0.045),
        (LaunchPadBehavior("reseller", message_size=size, snowball_prob=snowball_prob,
                           snowball_delay=Distribution.exp(2.0), snowball_spawn_rate=spawn,
                           spam_interval=spam_interval), 0.20),
        (LaunchPadBehavior("inert"), 0.715),
    )


def disable_snowball(config: AttackConfig) -> AttackConfig:
    mix = tuple((dataclasses.replace(b, snowball_prob=0.0), w) for b, w in config.behavior_mix)
    return config.replace(behavior_mix=mix)


def sms_preset(num_forms: int = 200, seed: int = 0) -> AttackConfig:
    """A phone whose message store fills after 80 texts; pads reply at once."""
    responder = LaunchPadBehavior(
        "sms-responder",
        immediate_prob=1.0,
        immediate_delay=Distribution.exp(0.05),
        message_size=Distribution.fixed(160),
    )
    return AttackConfig(
        num_forms=num_forms,
        behavior_mix=((responder, 1.0),),
        quota=80,
        sms_mode=True,
        horizon=max(num_forms / DEFAULT_FILL_RATE, 1.0) + 10.0,
        seed=seed,
    )


# -- state and results -------------------------------------------------------


@dataclass
class MailboxState:
    message_count: int = 0
    total_bytes: int = 0
    bounced_count: int = 0
    killed_at: float | None = None

    def deliver(self, t: float, size: int, quota: float, sms_mode: bool = False) -> bool:
        """Accept one message unless the box is already dead.

        The delivery that crosses the quota is accepted and marks the kill.
        """
        if self.killed_at is not None:
            self.bounced_count += 1
            return False
        self.message_count += 1
        self.total_bytes += size
        level = self.message_count if sms_mode else self.total_bytes
        if level >= quota:
            self.killed_at = t
        return True


@dataclass(frozen=True)
class TimeSeries:
    """Mailbox trajectory: one sample per distinct delivery time."""

    t: np.ndarray
    messages: np.ndarray
    bytes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))
        object.__setattr__(self, "messages", np.asarray(self.messages, dtype=np.int64))
        object.__setattr__(self, "bytes", np.asarray(self.bytes, dtype=np.int64))
        if not (len(self.t) == len(self.messages) == len(self.bytes)):
            raise ValueError("series columns differ in length")

    def __len__(self):
        return len(self.t)

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (np.array_equal(self.t, other.t) and np.array_equal(self.messages, other.messages)
                and np.array_equal(self.bytes, other.bytes))

    @property
    def samples(self) -> list[tuple[float, int, int]]:
        return list(zip(self.t.tolist(), self.messages.tolist(), self.bytes.tolist()))

    def snapshots(self, n: int = 256, end: float | None = None) -> "TimeSeries":
        """The trajectory as seen by polling the inbox ``n`` times on a uniform grid.

        Fits on raw per-delivery samples let a dense burst of early arrivals
        outweigh a long, sparse tail; periodic snapshots weight time evenly.
        """
        if len(self) == 0:
            raise ValueError("empty series")
        end = float(self.t[-1]) if end is None else float(end)
        grid = np.linspace(0.0, end, n)
        idx = np.searchsorted(self.t, grid, side="right") - 1
        seen = idx >= 0
        idx = np.maximum(idx, 0)
        return TimeSeries(grid, np.where(seen, self.messages[idx], 0), np.where(seen, self.bytes[idx], 0))

    def channel(self, name: str) -> np.ndarray:
        if name == "messages":
            return self.messages
        if name == "bytes":
            return self.bytes
        raise ValueError(f"unknown channel {name!r}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_minutes", "messages", "bytes"])
        for t, m, b in self.samples:
            w.writerow([repr(t), m, b])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TimeSeries":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["t_minutes", "messages", "bytes"]:
            raise ValueError("series CSV must start with header t_minutes,messages,bytes")
        t, m, b = [], [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 3 columns")
            try:
                t.append(float(row[0]))
                m.append(int(row[1]))
                b.append(int(row[2]))
            except ValueError:
                raise ValueError(f"line {lineno}: not numeric: {row}") from None
        return cls(t, m, b)


class Delivery(NamedTuple):
    t: float
    size: int
    sender: str
    server: str
    kind: str
    body_key: str
    accepted: bool


@dataclass
class AttackOutcome:
    config: AttackConfig
    series: TimeSeries
    attack_time: float
    kill_time: float | None
    final_state: MailboxState
    arrival_times: np.ndarray
    traffic: list[Delivery] | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def total_arrivals(self) -> int:
        return len(self.arrival_times)

    def summary(self) -> dict:
        return {
            "num_forms": self.config.num_forms,
            "attack_time": self.attack_time,
            "kill_time": self.kill_time,
            "message_count": self.final_state.message_count,
            "total_bytes": self.final_state.total_bytes,
            "bounced_count": self.final_state.bounced_count,
            "warnings": list(self.warnings),
        }


# -- the simulator -----------------------------------------------------------

_SUBMIT, _ONCE, _PERIODIC, _SPAWN = range(4)


class _Source:
    __slots__ = ("rng", "sender", "server", "size", "interval", "kind", "issue", "pad")

    def __init__(self, rng, sender, server, size, interval, kind, pad):
        self.rng = rng
        self.sender = sender
        self.server = server
        self.size = size
        self.interval = interval
        self.kind = kind
        self.issue = 0
        self.pad = pad


def _pad_identity(i: int) -> tuple[str, str]:
    domain = f"lp{i:05d}.example"
    return f"info@{domain}", f"smtp.{domain}"


def run_attack(config: AttackConfig, record_traffic: bool = False,
               stop_at_kill: bool = False) -> AttackOutcome:
    """Simulate ``config`` event by event until its horizon.

    ``stop_at_kill`` ends the run at the kill event; the bounce counter and
    arrival log are then incomplete, which only matters for rate estimates.
    """
    horizon = config.effective_horizon
    quota, sms = config.quota, config.sms_mode
    behaviors = [b for b, _ in config.behavior_mix]
    cum = np.cumsum([w for _, w in config.behavior_mix]).tolist()
    cum[-1] = 1.0

    warnings = []
    if horizon < config.attack_time:
        warnings.append(f"horizon {horizon:g} min is shorter than attack time {config.attack_time:g} min")

    box = MailboxState()
    heap: list = []
    seq = 0

    def push(t, action, obj):
        nonlocal seq
        if t <= horizon:
            heapq.heappush(heap, (t, seq, action, obj))
            seq += 1

    for i in range(1, config.num_forms + 1):
        push(i / config.fill_rate, _SUBMIT, i)

    st, sm, sb = [], [], []
    arrivals = []
    traffic = [] if record_traffic else None

    def deliver(t, src, body_key):
        size = max(1, int(round(src.size.sample(src.rng))))
        accepted = box.deliver(t, size, quota, sms)
        arrivals.append(t)
        if accepted:
            if st and st[-1] == t:
                sm[-1], sb[-1] = box.message_count, box.total_bytes
            else:
                st.append(t)
                sm.append(box.message_count)
                sb.append(box.total_bytes)
        if traffic is not None:
            traffic.append(Delivery(t, size, src.sender, src.server, src.kind, body_key, accepted))

    while heap:
        if stop_at_kill and box.killed_at is not None:
            break
        t, _, action, obj = heapq.heappop(heap)
        if action == _SUBMIT:
            i = obj
            rng = random.Random((config.seed << 32) | i)
            u = rng.random()
            b = behaviors[next(k for k, c in enumerate(cum) if u < c or k == len(cum) - 1)]
            sender, server = _pad_identity(i)
            if b.immediate_prob > 0 and rng.random() < b.immediate_prob:
                src = _Source(rng, sender, server, b.message_size, None, "immediate", i)
                t0 = t + b.immediate_delay.sample(rng)
                push(t0, _ONCE, (src, f"{sender}/reply"))
                for k in range(1, b.ack_retries + 1):
                    push(t0 + k * b.ack_interval, _ONCE, (src, f"{sender}/reply"))
            if b.periodic_interval:
                src = _Source(rng, sender, server, b.message_size, b.periodic_interval, "periodic", i)
                push(t + rng.uniform(0.0, b.periodic_interval), _PERIODIC, src)
            if b.snowball_prob > 0 and rng.random() < b.snowball_prob:
                push(t + b.snowball_delay.sample(rng), _SPAWN, (b, i, rng.getrandbits(64)))
        elif action == _ONCE:
            src, key = obj
            deliver(t, src, key)
        elif action == _PERIODIC:
            src = obj
            src.issue += 1
            deliver(t, src, f"{src.sender}/{src.kind}/{src.issue}")
            push(t + src.interval, _PERIODIC, src)
        else:
            b, i, child_seed = obj
            child = random.Random(child_seed)
            for j in range(b.snowball_spawn_rate):
                domain = f"sp{i:05d}-{j}.example"
                src = _Source(random.Random(child.getrandbits(64)), f"offers@{domain}",
                              f"mx.{domain}", b.message_size, b.spam_interval, "spam", i)
                # campaign bodies are shared by every buyer of the same list
                deliver(t, src, f"campaign-{i}/welcome")
                push(t + src.rng.uniform(0.0, b.spam_interval), _PERIODIC, src)

    series = TimeSeries(st, sm, sb)
    return AttackOutcome(
        config=config,
        series=series,
        attack_time=config.attack_time,
        kill_time=box.killed_at,
        final_state=box,
        arrival_times=np.asarray(arrivals, dtype=float),
        traffic=traffic,
        warnings=warnings,
    )


def kill_time_of(series: TimeSeries, quota: float, channel: str = "bytes") -> float | None:
    """Earliest sample time at which the chosen channel reaches ``quota``."""
    values = series.channel(channel)
    hit = np.flatnonzero(values >= quota)
    return float(series.t[hit[0]]) if hit.size else None


def arrival_rate(arrival_times: np.ndarray, start: float, end: float) -> float:
    """Least-squares slope of the cumulative arrival count over ``[start, end]``."""
    a = np.asarray(arrival_times, dtype=float)
    idx = np.flatnonzero((a >= start) & (a <= end))
    if idx.size < 2:
        return 0.0
    # cumulative count sampled at each arrival, offset so it starts at the window
    t = a[idx]
    n = np.arange(1, idx.size + 1, dtype=float)
    slope, _ = np.polyfit(t, n, 1)
    return float(max(slope, 0.0))


def long_term_rate_of(outcome: AttackOutcome) -> float:
    """Empirical arrival rate over the final half of the horizon."""
    h = outcome.config.effective_horizon
    return arrival_rate(outcome.arrival_times, 0.5 * h, h)


# -- sweeps ------------------------------------------------------------------


@dataclass
class SweepRow:
    F: int
    kill_times: list[float | None]
    rates: list[float]
    fits: list = field(default_factory=list)

    @property
    def replications(self) -> int:
        return len(self.kill_times)

    @property
    def kill_fraction(self) -> float:
        return sum(k is not None for k in self.kill_times) / len(self.kill_times)

    @property
    def mean_kill(self) -> float:
        """Mean kill time, NaN unless every replication killed the box."""
        if any(k is None for k in self.kill_times):
            return math.nan
        return float(np.mean(self.kill_times))

    @property
    def mean_rate(self) -> float:
        return float(np.mean(self.rates))

    @property
    def mean_fit_a(self) -> float:
        a = [p.a for p in self.fits if p is not None and p.converged]
        return float(np.mean(a)) if a else math.nan


@dataclass
class SweepTable:
    rows: list[SweepRow]
    quota: float
    fill_rate: float
    channel: str = "bytes"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["F", "mean_kill_minutes", "mean_rate_per_min", "replications"])
        for r in self.rows:
            w.writerow([r.F, repr(r.mean_kill), repr(r.mean_rate), r.replications])
        return buf.getvalue()

    def fits_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["F", "replication", "channel", "a", "b", "c", "residual", "converged", "iterations"])
        for r in self.rows:
            for k, p in enumerate(r.fits):
                if p is None:
                    continue
                w.writerow([r.F, k, self.channel, repr(p.a), repr(p.b), repr(p.c),
                            repr(p.residual_norm), int(p.converged), p.iterations])
        return buf.getvalue()


def replication_seed(seed: int, r: int) -> int:
    # the same seed is reused across F so replications are common-random-number paired
    return (seed * 1_000_003 + r) % (1 << 31)


def _sweep_task(args):
    from .model_fit import fit_tanh_model

    config, channel = args
    out = run_attack(config)
    fit = None
    if len(out.series) >= 4:
        fit = fit_tanh_model(out.series.snapshots(), channel)
    return out.kill_time, long_term_rate_of(out), fit


def sweep(base_config: AttackConfig, F_values: Sequence[int], replications: int,
          channel: str = "bytes", workers: int | None = None) -> SweepTable:
    """Run ``replications`` seeds for every F and aggregate kill times and rates.

    Each run is also fitted with the growth model on ``channel`` (over
    uniform snapshots up to the kill); the fits feed
    :func:`formflood.model_fit.forms_to_kill`.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    tasks = [(base_config.replace(num_forms=int(F), seed=replication_seed(base_config.seed, r)), channel)
             for F in F_values for r in range(replications)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    rows = []
    for n, F in enumerate(F_values):
        chunk = results[n * replications:(n + 1) * replications]
        rows.append(SweepRow(
            F=int(F),
            kill_times=[k for k, _, _ in chunk],
            rates=[r for _, r, _ in chunk],
            fits=[f for _, _, f in chunk],
        ))
    return SweepTable(rows, quota=base_config.quota, fill_rate=base_config.fill_rate, channel=channel)


def save_config(config: AttackConfig, path: str | Path):
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def load_config(path: str | Path) -> AttackConfig:
    return AttackConfig.from_dict(json.loads(Path(path).read_text()))

