"""Offline form harvesting: parse local HTML pages, spot launch-pad forms,
build search queries and synthesize (never send) filled submissions.
"""

from __future__ import annotations

import itertools
import json
import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable, Sequence
from urllib.parse import urlencode

logger = logging.getLogger(__name__)

KINDS = ("text", "hidden", "radio", "checkbox", "select", "submit", "other")
CHOICE_KINDS = frozenset({"radio", "checkbox", "select"})

# HTML input types that carry free text; later HTML adds these to plain "text"
TEXTUAL_TYPES = frozenset({"text", "email", "tel", "search", "url", ""})
SUBMIT_TYPES = frozenset({"submit", "image"})

EMAIL_LEXICON = ("email", "e-mail", "mail")
NAME_LEXICON = ("name", "first", "last")
PHONE_LEXICON = ("phone", "tel", "mobile")
JUNK = "xxxx"

QUERY_BASE = ("free", "email", "newsletter")
QUERY_TERMS = (
    "alert", "subscribe", "opt-in", "list", "spam",
    "porn", "contest", "prize", "stuff", "travel", "ezine",
    "market", "stock", "joke", "sign", "verify", "money",
    "erotic", "sex", "god", "christ", "penis", "viagra", "age",
    "notify", "news", "recipe", "gratis", "libre", "livre",
)

_ADDRESS = re.compile(r"^[^@\s]+@[^@\s]+$")


class UnsuitableFormError(ValueError):
    pass


class PageDecodeError(UnicodeDecodeError):
    def __init__(self, page, exc: UnicodeDecodeError):
        super().__init__(exc.encoding, exc.object, exc.start, exc.end, f"cannot decode page {page}: {exc.reason}")
        self.page = str(page)

    def __str__(self):
        return self.reason


class EmptyCorpusError(ValueError):
    pass


def is_valid_address(address: str) -> bool:
    return bool(address) and _ADDRESS.match(address) is not None


@dataclass(frozen=True)
class InputField:
    name: str
    kind: str
    default_value: str | None = None
    options: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        object.__setattr__(self, "options", tuple(self.options))
        if bool(self.options) != (self.kind in CHOICE_KINDS):
            raise ValueError(f"field {self.name!r}: options must be non-empty exactly for choice kinds")
        if not self.name and self.kind != "submit":
            raise ValueError("only submit fields may be unnamed")


@dataclass(frozen=True)
class FormRecord:
    action_url: str
    method: str
    fields: tuple[InputField, ...]
    source_page: str
    captcha_protected: bool = False

    def __post_init__(self):
        if not self.action_url:
            raise ValueError("action_url must be non-empty")
        if self.method not in ("GET", "POST"):
            raise ValueError(f"method must be GET or POST, got {self.method!r}")
        object.__setattr__(self, "fields", tuple(self.fields))

    def to_json(self) -> str:
        return json.dumps({
            "action": self.action_url,
            "method": self.method,
            "fields": [{"name": f.name, "kind": f.kind, "default": f.default_value, "options": list(f.options)}
                       for f in self.fields],
            "source_page": self.source_page,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "FormRecord":
        d = json.loads(line)
        fields = [InputField(f["name"], f["kind"], f["default"], tuple(f["options"])) for f in d["fields"]]
        return cls(d["action"], d["method"], tuple(fields), d["source_page"])


@dataclass(frozen=True)
class HarvestQuery:
    base_terms: tuple[str, ...]
    plus_terms: tuple[str, ...]
    minus_terms: tuple[str, ...]

    def render(self) -> str:
        return " ".join([*self.base_terms, *(f"+{t}" for t in self.plus_terms),
                         *(f"-{t}" for t in self.minus_terms)])


@dataclass(frozen=True)
class VictimProfile:
    email: str
    name: str = ""
    phone: str | None = None
    extra_fields: dict = field(default_factory=dict)

    def __post_init__(self):
        if not is_valid_address(self.email):
            raise ValueError(f"not an email address: {self.email!r}")


@dataclass(frozen=True)
class SubmissionRequest:
    """A filled form as data.  Nothing in this package transmits it."""

    target: str
    method: str
    payload: tuple[tuple[str, str | tuple[str, ...]], ...]

    def encoded(self) -> str:
        return urlencode(list(self.payload), doseq=True)


# -- query generation --------------------------------------------------------


def generate_queries(term_list: Sequence[str], base: Sequence[str] = QUERY_BASE,
                     max_subset_size: int = 2) -> list[HarvestQuery]:
    """One query per subset of ``term_list`` with at most ``max_subset_size`` terms.

    The subset is required (``+term``) and every other term excluded
    (``-term``), so the result sets of different queries barely overlap.
    Ordered by subset size, then lexicographically.
    """
    if max_subset_size < 0:
        raise ValueError("max_subset_size must be >= 0")
    terms = sorted(set(term_list))
    queries = []
    for k in range(min(max_subset_size, len(terms)) + 1):
        for subset in itertools.combinations(terms, k):
            chosen = set(subset)
            queries.append(HarvestQuery(tuple(base), subset, tuple(t for t in terms if t not in chosen)))
    return queries


# -- parsing -----------------------------------------------------------------


class _FormParser(HTMLParser):
    def __init__(self, source_page: str):
        super().__init__(convert_charrefs=True)
        self.source_page = source_page
        self.forms: list[FormRecord] = []
        self._form = None
        self._select = None
        self._option = None

    # form state is a dict until the form closes
    def _open_form(self, attrs):
        self._close_form()
        method = (attrs.get("method") or "GET").strip().upper()
        self._form = {
            "action": (attrs.get("action") or "").strip() or self.source_page,
            "method": method if method in ("GET", "POST") else "GET",
            "fields": [],
            "groups": {},
            "captcha": _mentions_captcha(attrs) or "data-captcha" in attrs,
        }

    def _close_form(self):
        self._close_select()
        f = self._form
        if f is None:
            return
        fields = []
        for entry in f["fields"]:
            if isinstance(entry, list):
                name, kind, default, options = entry
                if kind in CHOICE_KINDS and not options:
                    kind = "other"
                fields.append(InputField(name, kind, default, tuple(options)))
            else:
                fields.append(entry)
        self.forms.append(FormRecord(f["action"], f["method"], tuple(fields), self.source_page, f["captcha"]))
        self._form = None

    def _close_select(self):
        self._end_option()
        self._select = None

    def _end_option(self):
        if self._option is not None and self._select is not None:
            value, text = self._option
            self._select[3].append(value if value is not None else " ".join("".join(text).split()))
        self._option = None

    def _group(self, name, kind, default):
        f = self._form
        key = (kind, name)
        if key not in f["groups"]:
            entry = [name, kind, default, []]
            f["groups"][key] = entry
            f["fields"].append(entry)
        return f["groups"][key]

    def handle_starttag(self, tag, attrs_list):
        attrs = {k.lower(): (v if v is not None else "") for k, v in attrs_list}
        if tag == "form":
            self._open_form(attrs)
            return
        if self._form is None:
            return
        if _mentions_captcha(attrs):
            self._form["captcha"] = True
        name = attrs.get("name", "").strip()
        if tag == "input":
            itype = attrs.get("type", "text").strip().lower()
            value = attrs.get("value")
            if itype in SUBMIT_TYPES:
                self._form["fields"].append(InputField(name, "submit", value))
            elif not name:
                return
            elif itype in TEXTUAL_TYPES:
                self._form["fields"].append(InputField(name, "text", value))
            elif itype == "hidden":
                self._form["fields"].append(InputField(name, "hidden", value))
            elif itype in ("radio", "checkbox"):
                entry = self._group(name, itype, None)
                option = value if value is not None else "on"
                entry[3].append(option)
                if "checked" in attrs and entry[2] is None:
                    entry[2] = option
            elif itype in ("button", "reset"):
                return
            else:
                self._form["fields"].append(InputField(name, "other", value))
        elif tag == "button":
            if attrs.get("type", "submit").strip().lower() == "submit":
                self._form["fields"].append(InputField(name, "submit", attrs.get("value")))
        elif tag == "select":
            self._close_select()
            if name:
                self._select = [name, "select", None, []]
                self._form["fields"].append(self._select)
        elif tag == "option" and self._select is not None:
            self._end_option()
            self._option = (attrs.get("value"), [])
            if "selected" in attrs and self._select[2] is None:
                self._select[2] = attrs.get("value", "")
        elif tag == "textarea" and name:
            self._form["fields"].append(InputField(name, "other", None))

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)

    def handle_endtag(self, tag):
        if tag == "form":
            self._close_form()
        elif tag == "select":
            self._close_select()
        elif tag == "option":
            self._end_option()

    def handle_data(self, data):
        if self._option is not None:
            self._option[1].append(data)

    def close(self):
        super().close()
        self._close_form()


def _mentions_captcha(attrs: dict) -> bool:
    return any("captcha" in (attrs.get(k) or "").lower() for k in ("name", "id", "class", "alt", "src"))


def decode_page(data: bytes, source_page) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise PageDecodeError(source_page, exc) from None


def parse_page(html: str | bytes, source_page: str) -> list[FormRecord]:
    """Every ``<form>`` on the page, in document order.

    Tolerates unclosed tags and unquoted attributes; a missing action falls
    back to ``source_page`` and a missing method to GET.  Forms containing a
    CAPTCHA marker (a control or image whose name, id, class, alt or src
    mentions "captcha", or a ``data-captcha`` attribute on the form) are
    flagged as protected.
    """
    if isinstance(html, bytes):
        html = decode_page(html, source_page)
    parser = _FormParser(str(source_page))
    parser.feed(html)
    parser.close()
    return parser.forms


# -- classification and filling ----------------------------------------------


def _matches(text: str | None, lexicon: Iterable[str]) -> bool:
    if not text:
        return False
    low = text.lower()
    return any(word in low for word in lexicon)


def is_email_field(f: InputField, lexicon=EMAIL_LEXICON) -> bool:
    return f.kind == "text" and (_matches(f.name, lexicon) or _matches(f.default_value, lexicon))


def classify_launchpad(form: FormRecord, lexicon: Sequence[str] = EMAIL_LEXICON) -> bool:
    """True for an unprotected form with a text field that asks for an email."""
    if form.captcha_protected:
        return False
    return any(is_email_field(f, lexicon) for f in form.fields)


def fill_form(form: FormRecord, victim: VictimProfile, rng_seed: int, junk: str = JUNK,
              lexicon: Sequence[str] = EMAIL_LEXICON) -> SubmissionRequest:
    """Bind the victim's details to ``form``'s fields.

    Single-choice fields get one seeded random option, checkboxes get all of
    them, hidden fields keep their defaults and anything unrecognised is
    filled with ``junk``.
    """
    if not classify_launchpad(form, lexicon):
        raise UnsuitableFormError(f"form {form.action_url!r} on {form.source_page} is not a launch pad")
    rng = random.Random(rng_seed)
    payload = []
    for f in form.fields:
        if f.kind == "submit":
            if f.name:
                payload.append((f.name, f.default_value or "Submit"))
        elif f.kind == "hidden":
            payload.append((f.name, f.default_value or ""))
        elif f.kind in ("radio", "select"):
            payload.append((f.name, rng.choice(f.options)))
        elif f.kind == "checkbox":
            payload.append((f.name, f.options if len(f.options) > 1 else f.options[0]))
        else:
            payload.append((f.name, _text_value(f, victim, junk, lexicon)))
    return SubmissionRequest(form.action_url, form.method, tuple(payload))


def _text_value(f: InputField, victim: VictimProfile, junk: str, lexicon) -> str:
    if f.kind == "text" and is_email_field(f, lexicon):
        return victim.email
    for pattern, value in victim.extra_fields.items():
        if pattern.lower() in f.name.lower():
            return value
    if _matches(f.name, NAME_LEXICON) and victim.name:
        return victim.name
    if _matches(f.name, PHONE_LEXICON) and victim.phone:
        return victim.phone
    return junk


# -- corpus ------------------------------------------------------------------


def corpus_pages(corpus_dir) -> list[Path]:
    root = Path(corpus_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    pages = sorted(p for p in root.rglob("*.html") if p.is_file())
    if not pages:
        raise EmptyCorpusError(f"no *.html pages in {root}")
    return pages


def harvest_corpus(corpus_dir, workers: int | None = None,
                   lexicon: Sequence[str] = EMAIL_LEXICON) -> tuple[list[FormRecord], float]:
    """Suitable forms of every page (sorted by path) and the page harvest rate."""
    root = Path(corpus_dir)
    pages = corpus_pages(root)

    def load(path):
        rel = path.relative_to(root).as_posix()
        return parse_page(decode_page(path.read_bytes(), rel), rel)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parsed = list(pool.map(load, pages))
    else:
        parsed = [load(p) for p in pages]

    suitable, good_pages = [], 0
    for forms in parsed:
        keep = [f for f in forms if classify_launchpad(f, lexicon)]
        suitable.extend(keep)
        good_pages += bool(keep)
    rate = good_pages / len(pages)
    logger.info("harvested %d forms from %d/%d pages", len(suitable), good_pages, len(pages))
    return suitable, rate


def write_form_db(forms: Iterable[FormRecord], path) -> None:
    Path(path).write_text("".join(f.to_json() + "\n" for f in forms))


def read_form_db(path) -> list[FormRecord]:
    return [FormRecord.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]


def read_labels(corpus_dir) -> dict[str, tuple[bool, bool]]:
    """``labels.tsv`` sidecar: page -> (suitable, captcha)."""
    labels = {}
    for line in (Path(corpus_dir) / "labels.tsv").read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        page, suitable, captcha = line.split("\t")
        labels[page] = (suitable == "1", captcha == "1")
    return labels
