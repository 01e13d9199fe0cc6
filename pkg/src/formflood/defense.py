"""Victim-side detection and cleanup.

An extended address book remembers everyone the user has exchanged mail
with.  A meter turns traffic volume, the share of unknown senders and the
share of duplicate bodies into a probability of being under attack, and a
cleaner removes suspect mail according to one of three personas:

* individual: anything from outside the book is suspect;
* store: as individual, but mail relayed under collector pseudonyms (auction
  sites and the like) is kept unless the pseudonym misbehaves;
* politician: only mail from known constituent ISPs in the home country is
  kept.

Times are minutes of simulated time, as in :mod:`formflood.attack_sim`.
Ground-truth labels on messages exist for scoring only and are never read
by a decision path.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import math
import random
import threading
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .attack_sim import DAY, HOUR, AttackOutcome, Distribution
from .corpus_forms import is_valid_address

SIM_EPOCH = datetime(2005, 1, 1, tzinfo=timezone.utc)
DEFAULT_MAX_AGE = 30 * DAY
DEFAULT_THRESHOLD = 0.8
OBSCURE_MIN_LOCAL = 12
PERSONAS = ("individual", "store", "politician")


class ConsistencyError(ValueError):
    pass


def domain_of(address: str) -> str:
    return address.rsplit("@", 1)[-1].lower()


def _in_domains(domain: str, rules: Iterable[str]) -> bool:
    return any(domain == r or domain.endswith("." + r) for r in rules)


def minutes_to_iso(t: float) -> str:
    return (SIM_EPOCH + timedelta(minutes=t)).isoformat(timespec="microseconds")


def iso_to_minutes(text: str) -> float:
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return (dt - SIM_EPOCH) / timedelta(minutes=1)


# -- address book ------------------------------------------------------------


class ExtendedAddressBook:
    """Address -> time of last contact, with entries expiring after ``max_age``.

    Updates are serialized by a per-book lock so several mail handlers can
    share one book.
    """

    def __init__(self, max_age: float = DEFAULT_MAX_AGE, entries: dict[str, float] | None = None):
        if max_age <= 0:
            raise ValueError("max_age must be positive")
        self.max_age = float(max_age)
        self._entries: dict[str, float] = {}
        self._lock = threading.Lock()
        for address, ts in (entries or {}).items():
            self.record_contact(address, ts)

    def record_contact(self, address: str, now: float) -> "ExtendedAddressBook":
        if not is_valid_address(address):
            raise ValueError(f"invalid address {address!r}")
        with self._lock:
            self._entries[address.lower()] = float(now)
        return self

    def last_contact(self, address: str, now: float) -> float | None:
        ts = self._entries.get(address.lower())
        if ts is None or now - ts > self.max_age:
            return None
        return ts

    def knows(self, address: str, now: float) -> bool:
        return self.last_contact(address, now) is not None

    @property
    def entries(self) -> dict[str, float]:
        with self._lock:
            return dict(self._entries)

    def __len__(self):
        return len(self._entries)

    def __contains__(self, address):
        return address.lower() in self._entries

    def merge(self, *others: "ExtendedAddressBook") -> "ExtendedAddressBook":
        """Union of books; on conflict the newest timestamp wins."""
        merged = dict(self.entries)
        for other in others:
            for address, ts in other.entries.items():
                if ts > merged.get(address, -math.inf):
                    merged[address] = ts
        return ExtendedAddressBook(self.max_age, merged)

    def to_text(self) -> str:
        rows = sorted(self.entries.items())
        return "".join(f"{a}\t{minutes_to_iso(ts)}\n" for a, ts in rows)

    @classmethod
    def from_text(cls, text: str, max_age: float = DEFAULT_MAX_AGE) -> "ExtendedAddressBook":
        book = cls(max_age)
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                address, stamp = line.split("\t")
                book.record_contact(address, iso_to_minutes(stamp))
            except ValueError as exc:
                raise ValueError(f"address book line {n}: {exc}") from None
        return book

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path, max_age: float = DEFAULT_MAX_AGE) -> "ExtendedAddressBook":
        return cls.from_text(Path(path).read_text(), max_age)


def record_contact(book: ExtendedAddressBook, address: str, now: float) -> ExtendedAddressBook:
    return book.record_contact(address, now)


def is_obscure_address(address: str, min_local: int = OBSCURE_MIN_LOCAL) -> bool:
    """Whether an address is long enough to serve as an unpublished priority inbox."""
    return is_valid_address(address) and len(address.split("@")[0]) >= min_local


# -- messages ----------------------------------------------------------------


@dataclass(frozen=True)
class InboundMessage:
    msg_id: int
    sender_address: str
    sender_server: str
    size: int
    arrival: float
    body_hash: str
    # evaluation ground truth; excluded from equality so no decision can hinge on it
    origin_label: str = field(default="legitimate", compare=False)

    @property
    def domain(self) -> str:
        return domain_of(self.sender_address)


def body_digest(body_key: str) -> str:
    return hashlib.sha256(body_key.encode()).hexdigest()[:16]


class Inbox:
    """Message store supporting removal.  Removed ids are remembered so a
    repeated cleanup is a no-op instead of an error.
    """

    def __init__(self, messages: Iterable[InboundMessage] = ()):
        self._messages: dict[int, InboundMessage] = {}
        self.removed_ids: set[int] = set()
        for m in messages:
            self.add(m)

    def add(self, message: InboundMessage) -> None:
        if message.msg_id in self._messages or message.msg_id in self.removed_ids:
            raise ConsistencyError(f"duplicate message id {message.msg_id}")
        self._messages[message.msg_id] = message

    def copy(self) -> "Inbox":
        box = Inbox()
        box._messages = dict(self._messages)
        box.removed_ids = set(self.removed_ids)
        return box

    def __contains__(self, message: InboundMessage):
        return message.msg_id in self._messages

    @property
    def messages(self) -> list[InboundMessage]:
        return sorted(self._messages.values(), key=lambda m: (m.arrival, m.msg_id))

    @property
    def message_count(self) -> int:
        return len(self._messages)

    @property
    def total_bytes(self) -> int:
        return sum(m.size for m in self._messages.values())


# -- meter -------------------------------------------------------------------


@dataclass(frozen=True)
class MeterWeights:
    rate: float = 1.5
    unknown: float = 3.0
    duplicate: float = 2.0
    theta: float = 4.0


@dataclass(frozen=True)
class MeterReading:
    probability_under_attack: float
    rate_ratio: float
    unknown_fraction: float
    duplicate_fraction: float

    @property
    def features(self) -> tuple[float, float, float]:
        return self.rate_ratio, self.unknown_fraction, self.duplicate_fraction


RATE_RATIO_FLOOR = 1e-12


def meter_probability(rate_ratio: float, unknown_fraction: float, duplicate_fraction: float,
                      weights: MeterWeights = MeterWeights()) -> float:
    """``sigmoid(w_r ln(rate_ratio) + w_u unknown + w_d duplicate - theta)``."""
    z = (weights.rate * math.log(max(rate_ratio, RATE_RATIO_FLOOR))
         + weights.unknown * unknown_fraction + weights.duplicate * duplicate_fraction - weights.theta)
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def meter(window: Sequence[InboundMessage], book: ExtendedAddressBook, baseline_rate: float,
          span: float | None = None, weights: MeterWeights = MeterWeights()) -> MeterReading:
    """Attack probability for a time-ordered window of messages.

    The window rate is ``len(window) / span`` when the observation span (in
    minutes) is given, otherwise ``(n - 1) / (last - first)``; a single
    message with no span carries no rate information and counts as baseline.
    Book lookups are made at the time of the last message.
    """
    if baseline_rate <= 0:
        raise ValueError("baseline_rate must be positive")
    n = len(window)
    if n == 0:
        return MeterReading(0.0, 0.0, 0.0, 0.0)
    if span is not None:
        if span <= 0:
            raise ValueError("span must be positive")
        rate = n / span
    else:
        duration = window[-1].arrival - window[0].arrival
        rate = (n - 1) / duration if n > 1 and duration > 0 else baseline_rate
    now = window[-1].arrival
    unknown = sum(not book.knows(m.sender_address, now) for m in window) / n
    duplicate = 1.0 - len({m.body_hash for m in window}) / n
    ratio = rate / baseline_rate
    return MeterReading(meter_probability(ratio, unknown, duplicate, weights), ratio, unknown, duplicate)


# -- policies ----------------------------------------------------------------


@dataclass(frozen=True)
class Pseudonym:
    address: str
    created_at: float
    reputation: float = 1.0


@dataclass(frozen=True)
class CollectorRule:
    """A marketplace that relays mail from its users under pseudonyms."""

    domain: str
    pseudonyms: tuple[Pseudonym, ...] = ()
    volume_per_hour: int = 5
    min_age: float = 7 * DAY
    min_reputation: float = 0.2

    def lookup(self, address: str) -> Pseudonym | None:
        low = address.lower()
        return next((p for p in self.pseudonyms if p.address.lower() == low), None)


@dataclass(frozen=True)
class CleanerPolicy:
    persona: str
    min_suspect_size: int | None = None
    only_domains: tuple[str, ...] = ()    # if set, only suspects from these domains are removed
    except_domains: tuple[str, ...] = ()  # suspects from these domains are never removed
    collectors: tuple[CollectorRule, ...] = ()
    constituent_isps: tuple[str, ...] = ()
    home_country: str = "us"
    notify_sender: bool = False

    def __post_init__(self):
        if self.persona not in PERSONAS:
            raise ValueError(f"persona must be one of {PERSONAS}, got {self.persona!r}")

    def passes_filters(self, m: InboundMessage) -> bool:
        if self.min_suspect_size is not None and m.size < self.min_suspect_size:
            return False
        if self.only_domains and not _in_domains(m.domain, self.only_domains):
            return False
        return not _in_domains(m.domain, self.except_domains)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["collectors"] = [dataclasses.asdict(c) for c in self.collectors]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CleanerPolicy":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown policy keys: {sorted(extra)}")
        d = dict(d)
        d["collectors"] = tuple(
            CollectorRule(**{**c, "pseudonyms": tuple(Pseudonym(**p) for p in c.get("pseudonyms", ()))})
            for c in d.get("collectors", ()))
        for key in ("only_domains", "except_domains", "constituent_isps"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _country_mismatch(domain: str, home: str) -> bool:
    tld = domain.rsplit(".", 1)[-1]
    return len(tld) == 2 and tld.isalpha() and tld != home.lower()


def _excess_messages(window: Sequence[InboundMessage], rule: CollectorRule) -> set[int]:
    """Ids of messages beyond the pseudonym's hourly allowance."""
    times: dict[str, list[InboundMessage]] = {}
    for m in window:
        if _in_domains(m.domain, (rule.domain,)):
            times.setdefault(m.sender_address.lower(), []).append(m)
    excess = set()
    for msgs in times.values():
        msgs.sort(key=lambda m: (m.arrival, m.msg_id))
        ts = [m.arrival for m in msgs]
        for i, m in enumerate(msgs):
            # messages from this pseudonym in the hour up to and including this one
            if i + 1 - bisect_left(ts, m.arrival - HOUR, 0, i + 1) > rule.volume_per_hour:
                excess.add(m.msg_id)
    return excess


def _is_suspect(m, book, policy, excess) -> bool:
    if policy.persona == "politician":
        return (not _in_domains(m.domain, policy.constituent_isps)
                or _country_mismatch(m.domain, policy.home_country))
    if book.knows(m.sender_address, m.arrival):
        return False
    if policy.persona == "store":
        for rule in policy.collectors:
            if _in_domains(m.domain, (rule.domain,)):
                p = rule.lookup(m.sender_address)
                return (p is None or m.arrival - p.created_at < rule.min_age
                        or p.reputation < rule.min_reputation or m.msg_id in excess)
    return True


def mark_suspects(window: Sequence[InboundMessage], book: ExtendedAddressBook,
                  policy: CleanerPolicy) -> tuple[list[InboundMessage], list[InboundMessage]]:
    """Split ``window`` into (suspect, retained), preserving order.

    Book lookups use each message's own arrival time.  The policy's size and
    domain filters then move messages they exempt back to retained.
    """
    excess = set().union(*(_excess_messages(window, rule) for rule in policy.collectors))
    suspect, retained = [], []
    for m in window:
        if _is_suspect(m, book, policy, excess) and policy.passes_filters(m):
            suspect.append(m)
        else:
            retained.append(m)
    return suspect, retained


# -- cleanup -----------------------------------------------------------------


@dataclass(frozen=True)
class Notification:
    to: str
    msg_id: int
    note: str = "removed unread as suspected form-flooding"


@dataclass(frozen=True)
class RemovalReport:
    removed: tuple[InboundMessage, ...]
    bytes_freed: int
    notifications: tuple[Notification, ...]


def cleanup(inbox: Inbox, suspects: Iterable[InboundMessage], policy: CleanerPolicy) -> tuple[Inbox, RemovalReport]:
    """Remove suspects that pass the policy filters.  Returns a new inbox.

    Notifications are records only; nothing is sent.
    """
    out = inbox.copy()
    removed = []
    for m in suspects:
        if m.msg_id in out.removed_ids:
            continue
        if m.msg_id not in out._messages:
            raise ConsistencyError(f"suspect message {m.msg_id} is not in the inbox")
        if not policy.passes_filters(m):
            continue
        del out._messages[m.msg_id]
        out.removed_ids.add(m.msg_id)
        removed.append(m)
    notes = tuple(Notification(m.sender_address, m.msg_id) for m in removed) if policy.notify_sender else ()
    return out, RemovalReport(tuple(removed), sum(m.size for m in removed), notes)


# -- legitimate traffic ------------------------------------------------------


@dataclass(frozen=True)
class LegitTraffic:
    """Background mail: known contacts plus occasional strangers."""

    contacts: int = 40
    rate_per_day: float = 30.0
    stranger_fraction: float = 0.02
    message_size: Distribution = field(default_factory=lambda: Distribution.lognormal(6000, 1.0))
    seed: int = 0
    collector_domain: str | None = None
    collector_fraction: float = 0.0
    pseudonyms: int = 10

    KEYS = ("contacts", "rate_per_day", "stranger_fraction", "message_size", "seed",
            "collector_domain", "collector_fraction", "pseudonyms")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.KEYS}
        d["message_size"] = self.message_size.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LegitTraffic":
        extra = set(d) - set(cls.KEYS)
        if extra:
            raise ValueError(f"unknown legit-traffic keys: {sorted(extra)}")
        d = dict(d)
        if "message_size" in d:
            d["message_size"] = Distribution.from_dict(d["message_size"])
        return cls(**d)

    def contact_addresses(self) -> list[str]:
        return [f"friend{i:03d}@mail{i % 7}.example" for i in range(self.contacts)]

    def pseudonym_addresses(self) -> list[str]:
        if not self.collector_domain:
            return []
        return [f"buyer{i:03d}@{self.collector_domain}" for i in range(self.pseudonyms)]

    def collector_rule(self, created_at: float = -365 * DAY, reputation: float = 0.9) -> CollectorRule:
        """Collector rule listing this stream's pseudonyms as established and well rated."""
        if not self.collector_domain:
            raise ValueError("no collector domain configured")
        return CollectorRule(self.collector_domain, tuple(
            Pseudonym(a, created_at, reputation) for a in self.pseudonym_addresses()))

    def book(self, now: float = 0.0, max_age: float = DEFAULT_MAX_AGE) -> ExtendedAddressBook:
        book = ExtendedAddressBook(max_age)
        for a in self.contact_addresses():
            book.record_contact(a, now)
        return book

    def generate(self, horizon: float) -> list[InboundMessage]:
        """Poisson stream over ``[0, horizon]`` minutes; message ids start at 0."""
        rng = random.Random(self.seed)
        contacts = self.contact_addresses()
        pseudonyms = self.pseudonym_addresses()
        rate = self.rate_per_day / DAY
        out, t = [], 0.0
        while rate > 0:
            t += rng.expovariate(rate)
            if t > horizon:
                break
            u = rng.random()
            if pseudonyms and u < self.collector_fraction:
                sender = rng.choice(pseudonyms)
            elif contacts and u >= self.collector_fraction + self.stranger_fraction:
                sender = rng.choice(contacts)
            else:
                sender = f"stranger{len(out)}@elsewhere.example"
            n = len(out)
            out.append(InboundMessage(n, sender, "mx." + domain_of(sender), int(round(self.message_size.sample(rng))),
                                      t, body_digest(f"legit/{n}"), "legitimate"))
        return out


# -- evaluation --------------------------------------------------------------


def attack_messages(outcome: AttackOutcome, first_id: int = 0) -> list[InboundMessage]:
    """Every attack arrival (accepted or bounced) as a labeled message."""
    if outcome.traffic is None:
        raise ValueError("outcome has no recorded traffic; run the attack with record_traffic=True")
    return [InboundMessage(first_id + k, d.sender, d.server, d.size, d.t, body_digest(d.body_key), "attack")
            for k, d in enumerate(outcome.traffic)]


@dataclass(frozen=True)
class DefenseMetrics:
    persona: str
    attack_recall: float
    legit_retention: float
    bytes_freed: int
    threshold: float
    attack_total: int
    attack_removed: int
    legit_total: int
    legit_removed: int
    triggered_at: float | None
    cleanups: int
    notifications: int

    def row(self) -> list:
        return [self.persona, repr(self.attack_recall), repr(self.legit_retention), self.bytes_freed,
                repr(self.threshold)]


METRICS_HEADER = ["persona", "attack_recall", "legit_retention", "bytes_freed", "threshold"]


def metrics_csv(metrics: Iterable[DefenseMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for m in metrics:
        w.writerow(m.row())
    return buf.getvalue()


def _renumber(messages):
    merged = sorted(messages, key=lambda m: (m.arrival, m.origin_label != "legitimate", m.msg_id))
    return [dataclasses.replace(m, msg_id=k) for k, m in enumerate(merged)]


def evaluate_defense(outcome: AttackOutcome | None, legit_stream: Sequence[InboundMessage],
                     policy: CleanerPolicy, book: ExtendedAddressBook,
                     baseline_rate: float | None = None, threshold: float = DEFAULT_THRESHOLD,
                     check_interval: float = 10.0, window: float = HOUR,
                     weights: MeterWeights = MeterWeights()) -> DefenseMetrics:
    """Replay attack and legitimate mail into one inbox and score the cleaner.

    Every ``check_interval`` minutes the meter reads the last ``window``
    minutes of arrivals.  The first reading above ``threshold`` switches the
    inbox into attack mode for the rest of the trace; in attack mode each
    check (and a final one after the last arrival) marks and removes the
    suspects among everything still in the inbox.  Attack arrivals are
    replayed whether or not the unprotected mailbox bounced them.
    """
    attack = attack_messages(outcome) if outcome is not None else []
    messages = _renumber([*attack, *legit_stream])
    if baseline_rate is None:
        span = max((m.arrival for m in legit_stream), default=0.0)
        baseline_rate = len(legit_stream) / span if legit_stream and span > 0 else 1.0 / HOUR

    inbox = Inbox()
    arrivals = [m.arrival for m in messages]
    end = arrivals[-1] if arrivals else 0.0
    checks = [check_interval * k for k in range(1, int(end // check_interval) + 1)]
    if not checks or checks[-1] < end:
        checks.append(end)

    triggered_at, cleanups, notes, freed = None, 0, 0, 0
    removed: list[InboundMessage] = []
    i = 0
    for T in checks:
        while i < len(messages) and messages[i].arrival <= T:
            inbox.add(messages[i])
            i += 1
        if triggered_at is None:
            lo = bisect_right(arrivals, T - window)
            reading = meter(messages[lo:i], book, baseline_rate, span=window, weights=weights)
            if reading.probability_under_attack > threshold:
                triggered_at = T
        if triggered_at is not None:
            suspects, _ = mark_suspects(inbox.messages, book, policy)
            if suspects:
                inbox, report = cleanup(inbox, suspects, policy)
                cleanups += 1
                removed.extend(report.removed)
                freed += report.bytes_freed
                notes += len(report.notifications)

    attack_total = sum(m.origin_label == "attack" for m in messages)
    legit_total = len(messages) - attack_total
    attack_removed = sum(m.origin_label == "attack" for m in removed)
    legit_removed = len(removed) - attack_removed
    return DefenseMetrics(
        persona=policy.persona,
        attack_recall=attack_removed / attack_total if attack_total else math.nan,
        legit_retention=1.0 - legit_removed / legit_total if legit_total else 1.0,
        bytes_freed=freed, threshold=threshold,
        attack_total=attack_total, attack_removed=attack_removed,
        legit_total=legit_total, legit_removed=legit_removed,
        triggered_at=triggered_at, cleanups=cleanups, notifications=notes)


def default_policy(persona: str) -> CleanerPolicy:
    if persona == "politician":
        return CleanerPolicy("politician", constituent_isps=tuple(f"mail{i}.example" for i in range(7)))
    if persona == "store":
        return CleanerPolicy("store", collectors=(CollectorRule("auction.example"),))
    return CleanerPolicy(persona)
