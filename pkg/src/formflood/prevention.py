"""Site-side request validation without mailing the claimed address.

After a form is submitted the site shows a ``mailto`` link back to itself
carrying a fresh 128-bit nonce.  The request is honoured only when a
validation email arrives that

1. did not come through an open relay,
2. presents the nonce of a pending, unexpired challenge, and
3. claims the submitted address and originates from the server registered
   for that address's domain.

Server identities are opaque tokens: a sender can forge the claimed address
but not the server a message originates from, except by using an open
relay.  Times are minutes of simulated time.
"""

from __future__ import annotations

import json
import random
import secrets
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .attack_sim import DAY
from .corpus_forms import SubmissionRequest, is_valid_address
from .defense import ExtendedAddressBook, domain_of, minutes_to_iso

NONCE_BITS = 128
DEFAULT_TTL = DAY

ACCEPTED = "accepted"
VERDICTS = (ACCEPTED, "rejected_relay", "rejected_origin_mismatch", "rejected_bad_nonce",
            "rejected_expired", "rejected_unknown_challenge")


class RejectedOutcomeError(ValueError):
    pass


@dataclass(frozen=True)
class DomainRegistry:
    servers: dict[str, str]
    open_relays: frozenset[str] = frozenset()

    def server_for(self, address: str) -> str | None:
        return self.servers.get(domain_of(address))

    def to_json(self) -> str:
        return json.dumps({"domains": dict(sorted(self.servers.items())),
                           "open_relays": sorted(self.open_relays)}, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DomainRegistry":
        d = json.loads(text)
        extra = set(d) - {"domains", "open_relays"}
        if extra:
            raise ValueError(f"unknown registry keys: {sorted(extra)}")
        servers = {k.lower(): v for k, v in d["domains"].items()}
        return cls(servers, frozenset(d.get("open_relays", ())))

    @classmethod
    def load(cls, path) -> "DomainRegistry":
        return cls.from_json(Path(path).read_text())


def default_registry() -> DomainRegistry:
    return DomainRegistry(
        {"isp.example": "smtp.isp.example", "attacker-isp.example": "smtp.attacker-isp.example",
         "uni.example": "smtp.uni.example", "site.example": "smtp.site.example"},
        frozenset({"relay.open.example"}))


@dataclass(frozen=True)
class ValidationChallenge:
    challenge_id: int
    claimed_address: str
    nonce: int
    issued_at: float
    expires_at: float
    form_payload: SubmissionRequest | None = None

    def mailto(self, site_address: str) -> str:
        return f"mailto:{site_address}?subject=validate%20{self.challenge_id}%20{self.nonce:032x}"


@dataclass(frozen=True)
class ValidationEmail:
    claimed_sender: str
    originating_server: str
    via_open_relay: bool
    nonce_presented: int | None
    received_at: float
    challenge_id: int | None = None


@dataclass(frozen=True)
class ValidationOutcome:
    verdict: str
    challenge_id: int | None
    claimed_address: str | None = None

    @property
    def accepted(self) -> bool:
        return self.verdict == ACCEPTED


class MailAccount:
    """A mailbox under some domain.  Its mail always leaves through that
    domain's registered server unless routed via an open relay, whatever
    sender address it claims.
    """

    def __init__(self, address: str, registry: DomainRegistry):
        server = registry.server_for(address)
        if server is None:
            raise ValueError(f"no registered server for {address!r}")
        self.address, self.server, self.registry = address, server, registry

    def send(self, nonce: int | None, at: float, claimed_sender: str | None = None,
             challenge_id: int | None = None, relay: str | None = None) -> ValidationEmail:
        if relay is not None and relay not in self.registry.open_relays:
            raise ValueError(f"{relay!r} is not an open relay")
        return ValidationEmail(claimed_sender or self.address, relay or self.server, relay is not None,
                               nonce, at, challenge_id)


class ChallengeStore:
    """Pending challenges with atomic single-use consumption."""

    def __init__(self, seed: int | None = None, ttl: float = DEFAULT_TTL):
        if ttl <= 0:
            raise ValueError("ttl must be positive")
        self.ttl = ttl
        self._rng = random.Random(seed) if seed is not None else None
        self._lock = threading.Lock()
        self._next_id = 1
        self._pending: dict[int, ValidationChallenge] = {}
        self._by_nonce: dict[int, int] = {}
        self._consumed_ids: set[int] = set()
        self._consumed_nonces: set[int] = set()

    def _nonce(self) -> int:
        if self._rng is None:
            return secrets.randbits(NONCE_BITS)
        return self._rng.getrandbits(NONCE_BITS)

    def issue(self, form_submission: SubmissionRequest | None, claimed_address: str, now: float,
              ttl: float | None = None) -> ValidationChallenge:
        if not is_valid_address(claimed_address):
            raise ValueError(f"invalid address {claimed_address!r}")
        ttl = self.ttl if ttl is None else ttl
        if ttl <= 0:
            raise ValueError("ttl must be positive")
        with self._lock:
            nonce = self._nonce()
            while nonce in self._by_nonce or nonce in self._consumed_nonces:
                nonce = self._nonce()
            ch = ValidationChallenge(self._next_id, claimed_address, nonce, now, now + ttl, form_submission)
            self._next_id += 1
            self._pending[ch.challenge_id] = ch
            self._by_nonce[nonce] = ch.challenge_id
        return ch

    @property
    def pending_count(self) -> int:
        return len(self._pending)

    def purge(self, now: float) -> int:
        """Drop expired challenges; they then count as unknown."""
        with self._lock:
            dead = [c for c in self._pending.values() if c.expires_at <= now]
            for c in dead:
                del self._pending[c.challenge_id]
                del self._by_nonce[c.nonce]
        return len(dead)

    def verify(self, email: ValidationEmail, registry: DomainRegistry, now: float) -> ValidationOutcome:
        with self._lock:
            if email.via_open_relay or email.originating_server in registry.open_relays:
                return ValidationOutcome("rejected_relay", email.challenge_id)
            nonce = email.nonce_presented
            if email.challenge_id is not None:
                ch = self._pending.get(email.challenge_id)
                if ch is None:
                    return ValidationOutcome("rejected_unknown_challenge", email.challenge_id)
                if nonce != ch.nonce:
                    return ValidationOutcome("rejected_bad_nonce", ch.challenge_id)
            else:
                cid = self._by_nonce.get(nonce)
                if cid is None:
                    verdict = "rejected_unknown_challenge" if nonce in self._consumed_nonces else "rejected_bad_nonce"
                    return ValidationOutcome(verdict, None)
                ch = self._pending[cid]
            if now >= ch.expires_at:
                return ValidationOutcome("rejected_expired", ch.challenge_id)
            if (email.claimed_sender.lower() != ch.claimed_address.lower()
                    or registry.server_for(email.claimed_sender) != email.originating_server):
                return ValidationOutcome("rejected_origin_mismatch", ch.challenge_id)
            del self._pending[ch.challenge_id]
            del self._by_nonce[ch.nonce]
            self._consumed_ids.add(ch.challenge_id)
            self._consumed_nonces.add(ch.nonce)
            return ValidationOutcome(ACCEPTED, ch.challenge_id, ch.claimed_address)


def issue_challenge(store: ChallengeStore, form_submission, claimed_address: str, now: float,
                    ttl: float = DEFAULT_TTL) -> ValidationChallenge:
    return store.issue(form_submission, claimed_address, now, ttl)


def verify(email: ValidationEmail, registry: DomainRegistry, pending: ChallengeStore, now: float) -> ValidationOutcome:
    return pending.verify(email, registry, now)


@dataclass(frozen=True)
class OutboundMessage:
    to: str
    t: float
    kind: str
    challenge_id: int


class ValidationSite:
    """A launch-pad site running the protocol, with a trace log and an outbox.

    The site mails a claimed address only after that address validated.
    """

    def __init__(self, site_address: str, registry: DomainRegistry, seed: int | None = None,
                 ttl: float = DEFAULT_TTL):
        self.site_address = site_address
        self.registry = registry
        self.store = ChallengeStore(seed, ttl)
        self.trace: list[tuple[float, str, int | None, str]] = []
        self.outbox: list[OutboundMessage] = []
        self.validated: set[str] = set()
        self._lock = threading.Lock()

    def submit(self, form_submission: SubmissionRequest | None, claimed_address: str, now: float) -> ValidationChallenge:
        ch = self.store.issue(form_submission, claimed_address, now)
        with self._lock:
            self.trace.append((now, "issue", ch.challenge_id, "pending"))
        return ch

    def receive(self, email: ValidationEmail, now: float | None = None) -> ValidationOutcome:
        now = email.received_at if now is None else now
        outcome = self.store.verify(email, self.registry, now)
        with self._lock:
            self.trace.append((now, "verify", outcome.challenge_id, outcome.verdict))
            if outcome.accepted:
                self.validated.add(outcome.claimed_address.lower())
                self.outbox.append(OutboundMessage(outcome.claimed_address, now, "welcome", outcome.challenge_id))
        return outcome

    def unvalidated_mail_count(self) -> int:
        return sum(m.to.lower() not in self.validated for m in self.outbox)

    def trace_text(self) -> str:
        return "".join(f"{minutes_to_iso(ts)}\t{event}\t{'-' if cid is None else cid}\t{verdict}\n"
                       for ts, event, cid, verdict in self.trace)


def seed_address_book(outcome: ValidationOutcome, site_address: str, book: ExtendedAddressBook,
                      now: float) -> ExtendedAddressBook:
    """Sending the validation mail makes the site a known correspondent."""
    if not outcome.accepted:
        raise RejectedOutcomeError(f"cannot seed the address book from a {outcome.verdict} outcome")
    return book.record_contact(site_address, now)


# -- adversaries -------------------------------------------------------------

ADVERSARIES = ("honest", "A_spoofer", "B_guesser", "C_open_relay", "D_insider")


@dataclass
class AdversaryReport:
    trials: int
    verdicts: dict[str, Counter] = field(default_factory=dict)
    no_victim_traffic: bool = True

    def accepted(self, who: str) -> int:
        return self.verdicts[who][ACCEPTED]

    @property
    def false_accepts(self) -> int:
        return sum(self.accepted(w) for w in ("A_spoofer", "B_guesser", "C_open_relay"))

    @property
    def false_rejects(self) -> int:
        return self.trials - self.accepted("honest")

    @property
    def residual_risk_accepts(self) -> int:
        """Insider acceptances: by design the protocol cannot tell them apart."""
        return self.accepted("D_insider")

    def rows(self) -> list[list]:
        return [[who, v, self.verdicts[who][v]] for who in ADVERSARIES for v in VERDICTS]


def run_adversary_suite(registry: DomainRegistry, trials: int, seed: int) -> AdversaryReport:
    """Play honest users and four adversaries against one site, ``trials`` rounds each.

    A forges the victim's address from its own ISP's server; B holds a
    mailbox on the victim's domain but never sees the victim's challenge and
    guesses nonces; C uses an open relay with the correct nonce; D shares the
    victim's mail server and relays the correct nonce through it.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    domains = sorted(d for d in registry.servers)
    if len(domains) < 2 or not registry.open_relays:
        raise ValueError("registry needs at least two domains and one open relay")
    relay = sorted(registry.open_relays)[0]
    rng = random.Random(seed ^ 0x5EED)
    site = ValidationSite("lists@" + domains[-1], registry, seed=seed)
    report = AdversaryReport(trials, {w: Counter() for w in ADVERSARIES})
    now = 0.0
    for k in range(trials):
        victim_dom = domains[k % len(domains)]
        other_dom = domains[(k + 1) % len(domains)]
        victim = f"victim{k}@{victim_dom}"

        ch = site.submit(None, f"user{k}@{victim_dom}", now)
        honest = MailAccount(ch.claimed_address, registry).send(ch.nonce, now + 1, challenge_id=ch.challenge_id)
        report.verdicts["honest"][site.receive(honest).verdict] += 1

        ch = site.submit(None, victim, now)
        spoof = MailAccount(f"mallory{k}@{other_dom}", registry).send(ch.nonce, now + 1, claimed_sender=victim)
        report.verdicts["A_spoofer"][site.receive(spoof).verdict] += 1

        ch = site.submit(None, victim, now)
        guess = MailAccount(f"eve{k}@{victim_dom}", registry).send(
            rng.getrandbits(NONCE_BITS), now + 1, claimed_sender=victim, challenge_id=ch.challenge_id)
        report.verdicts["B_guesser"][site.receive(guess).verdict] += 1

        ch = site.submit(None, victim, now)
        relayed = MailAccount(f"mallory{k}@{other_dom}", registry).send(
            ch.nonce, now + 1, claimed_sender=victim, relay=relay)
        report.verdicts["C_open_relay"][site.receive(relayed).verdict] += 1

        ch = site.submit(None, victim, now)
        insider = MailAccount(f"insider{k}@{victim_dom}", registry).send(ch.nonce, now + 1, claimed_sender=victim)
        report.verdicts["D_insider"][site.receive(insider).verdict] += 1
        now += 2.0

    report.no_victim_traffic = site.unvalidated_mail_count() == 0
    return report
