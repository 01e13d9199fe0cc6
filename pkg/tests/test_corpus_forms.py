import math
from itertools import combinations
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from formflood import corpus_forms as cf

CORPUS = Path(cf.__file__).parent / "data" / "corpus"

NEWSLETTER_HTML = """<form action="newsletter.php"
  method="POST">
<input type="text"
  name="Email"
  value="your email here!">
<input type="submit"
  name="submit"
  value="Subscribe">
</form>"""

TWO_FORMS = """<html><body>
<form action="/search"><input type="text" name="q"><input type="submit" value="Go"></form>
<p>Sign up below</p>
<form action="/news" method="post"><input type="text" name="email"><input type="submit" name="go" value="Join"></form>
</body></html>"""


def newsletter_form():
    return cf.parse_page(NEWSLETTER_HTML, "news.html")[0]


# -- queries -----------------------------------------------------------------


def test_two_term_queries():
    qs = cf.generate_queries(["alert", "subscribe"], ["free", "email", "newsletter"], 2)
    assert len(qs) == 4
    single = [q for q in qs if q.plus_terms == ("alert",)]
    assert len(single) == 1 and single[0].minus_terms == ("subscribe",)
    assert single[0].render() == "free email newsletter +alert -subscribe"


def test_zero_subset_size_gives_base_query():
    (q,) = cf.generate_queries(["alert", "subscribe"], max_subset_size=0)
    assert q.plus_terms == () and q.minus_terms == ("alert", "subscribe")


def test_empty_term_list():
    (q,) = cf.generate_queries([], max_subset_size=0)
    assert q.plus_terms == () and q.minus_terms == ()


def test_query_count_27_terms():
    # 1 + 27 + C(27, 2)
    terms = [f"t{i:02d}" for i in range(27)]
    assert len(cf.generate_queries(terms)) == 379


def test_query_count_bundled_term_list():
    # the bundled list has 30 terms: 1 + 30 + 435
    assert len(cf.QUERY_TERMS) == 30
    assert len(cf.generate_queries(cf.QUERY_TERMS)) == 466


def test_query_order_is_size_then_lexicographic():
    qs = cf.generate_queries(["c", "a", "b"], max_subset_size=2)
    assert [q.plus_terms for q in qs] == [(), ("a",), ("b",), ("c",), ("a", "b"), ("a", "c"), ("b", "c")]


@given(st.sets(st.text(alphabet="abcdefgh", min_size=1, max_size=4), max_size=9), st.integers(0, 4))
def test_query_structure(terms, k):
    qs = cf.generate_queries(sorted(terms), max_subset_size=k)
    expected = sum(math.comb(len(terms), j) for j in range(min(k, len(terms)) + 1))
    assert len(qs) == expected
    for q in qs:
        assert not set(q.plus_terms) & set(q.minus_terms)
        assert set(q.plus_terms) | set(q.minus_terms) == terms
    # oracle: brute-force enumeration of the same subsets
    brute = {frozenset(c) for j in range(min(k, len(terms)) + 1) for c in combinations(sorted(terms), j)}
    assert {frozenset(q.plus_terms) for q in qs} == brute


def test_negative_subset_size_rejected():
    with pytest.raises(ValueError):
        cf.generate_queries(["a"], max_subset_size=-1)


# -- parsing -----------------------------------------------------------------


def test_parse_newsletter_form():
    (form,) = cf.parse_page(NEWSLETTER_HTML, "news.html")
    assert form.action_url == "newsletter.php"
    assert form.method == "POST"
    assert form.fields == (
        cf.InputField("Email", "text", "your email here!"),
        cf.InputField("submit", "submit", "Subscribe"),
    )
    assert form.source_page == "news.html"
    assert not form.captcha_protected


def test_page_without_forms():
    assert cf.parse_page("<p>no forms here</p>", "x.html") == []


def test_two_forms_in_document_order():
    forms = cf.parse_page(TWO_FORMS, "two.html")
    assert [f.action_url for f in forms] == ["/search", "/news"]
    assert forms[0].method == "GET"
    assert forms[1].method == "POST"


def test_missing_action_inherits_page_and_unclosed_form():
    forms = cf.parse_page("<form><input name=email type=text><p>tail", "dir/p.html")
    assert forms[0].action_url == "dir/p.html"
    assert forms[0].fields[0].name == "email"


def test_choice_fields_grouped():
    html = """<form action=a>
      <input type=radio name=r value=1><input type=radio name=r value=2 checked>
      <input type=checkbox name=c value=x><input type=checkbox name=c value=y>
      <select name=s><option value=p>P<option>Q text</select>
      <select name=empty></select>
      <input type=hidden name=h value=k>
    </form>"""
    (form,) = cf.parse_page(html, "p")
    by = {f.name: f for f in form.fields}
    assert by["r"] == cf.InputField("r", "radio", "2", ("1", "2"))
    assert by["c"].options == ("x", "y")
    assert by["s"].options == ("p", "Q text")
    assert by["empty"].kind == "other" and by["empty"].options == ()
    assert by["h"] == cf.InputField("h", "hidden", "k")


def test_html5_text_types_count_as_text():
    (form,) = cf.parse_page('<form action=a><input type="email" name="addr"><input type=tel name=p></form>', "p")
    assert [f.kind for f in form.fields] == ["text", "text"]


def test_captcha_marker_detected():
    html = '<form action=a><input name=email><img class="captcha" src=c.png></form>'
    assert cf.parse_page(html, "p")[0].captcha_protected
    html = '<form action=a data-captcha="1"><input name=email></form>'
    assert cf.parse_page(html, "p")[0].captcha_protected


def test_undecodable_bytes_name_the_page():
    with pytest.raises(UnicodeDecodeError, match="bad.html"):
        cf.parse_page(b"<form>\xff\xfe\xfa</form>", "bad.html")


@given(st.text(alphabet=st.sampled_from(list("<>/=\"' formaciton=inputselectoptype&;abc\n")), max_size=300))
def test_parse_is_total(html):
    forms = cf.parse_page(html, "fuzz.html")
    for f in forms:
        assert f.action_url
        for fld in f.fields:
            assert bool(fld.options) == (fld.kind in cf.CHOICE_KINDS)


@given(st.binary(max_size=200))
def test_parse_total_on_decodable_bytes(data):
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        return
    cf.parse_page(text, "fuzz.html")


def test_input_field_invariants():
    with pytest.raises(ValueError):
        cf.InputField("r", "radio")
    with pytest.raises(ValueError):
        cf.InputField("t", "text", options=("a",))
    with pytest.raises(ValueError):
        cf.InputField("", "text")
    cf.InputField("", "submit")


# -- classification ----------------------------------------------------------


def test_newsletter_form_is_launchpad():
    assert cf.classify_launchpad(newsletter_form())


def test_submit_only_is_not_launchpad():
    form = cf.FormRecord("a", "GET", (cf.InputField("", "submit", "Go"),), "p")
    assert not cf.classify_launchpad(form)


def test_captcha_blocks_classification():
    form = cf.FormRecord("a", "POST", (cf.InputField("email", "text"),), "p", captcha_protected=True)
    assert not cf.classify_launchpad(form)


def test_lexicon_matches_default_value_and_variants():
    for name, default in [("addr", "Your E-Mail"), ("MAILADDR", None), ("user_email", None)]:
        form = cf.FormRecord("a", "POST", (cf.InputField(name, "text", default),), "p")
        assert cf.classify_launchpad(form)
    form = cf.FormRecord("a", "POST", (cf.InputField("email", "hidden", "x"),), "p")
    assert not cf.classify_launchpad(form)


@given(st.lists(st.sampled_from(["hidden", "radio", "checkbox", "select", "submit", "other"]), max_size=6))
def test_no_text_field_never_launchpad(kinds):
    fields = [cf.InputField(f"email{i}", k, "email", ("email",) if k in cf.CHOICE_KINDS else ())
              for i, k in enumerate(kinds)]
    assert not cf.classify_launchpad(cf.FormRecord("a", "GET", tuple(fields), "p"))


def test_fixture_corpus_matches_labels():
    labels = cf.read_labels(CORPUS)
    assert len(labels) == 100
    assert sum(s for s, _ in labels.values()) == 40
    for page, (suitable, captcha) in labels.items():
        forms = cf.parse_page((CORPUS / page).read_bytes(), page)
        assert any(cf.classify_launchpad(f) for f in forms) == suitable, page
        assert any(f.captcha_protected for f in forms) == captcha, page


# -- harvesting --------------------------------------------------------------


def test_harvest_fixture_corpus():
    forms, rate = cf.harvest_corpus(CORPUS)
    assert rate == 0.40
    assert len(forms) == 40
    pages = [f.source_page for f in forms]
    assert pages == sorted(pages)


def test_harvest_parallel_matches_serial():
    assert cf.harvest_corpus(CORPUS, workers=4) == cf.harvest_corpus(CORPUS)


def test_harvest_formless_pages(tmp_path):
    for i in range(3):
        (tmp_path / f"p{i}.html").write_text("<p>nothing</p>")
    assert cf.harvest_corpus(tmp_path) == ([], 0.0)


def test_harvest_all_suitable(tmp_path):
    for i in range(4):
        (tmp_path / f"p{i}.html").write_text(NEWSLETTER_HTML)
    forms, rate = cf.harvest_corpus(tmp_path)
    assert rate == 1.0 and len(forms) == 4


def test_harvest_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        cf.harvest_corpus(tmp_path / "missing")
    with pytest.raises(cf.EmptyCorpusError):
        cf.harvest_corpus(tmp_path)


def test_form_db_round_trip(tmp_path):
    forms, _ = cf.harvest_corpus(CORPUS)
    path = tmp_path / "forms.jsonl"
    cf.write_form_db(forms, path)
    back = cf.read_form_db(path)
    assert [f.to_json() for f in back] == [f.to_json() for f in forms]
    assert path.read_text().count("\n") == 40


# -- filling -----------------------------------------------------------------

VICTIM = cf.VictimProfile("v@x.org", "Vic Tim", "555-0100")


def test_fill_newsletter_form():
    req = cf.fill_form(newsletter_form(), cf.VictimProfile("v@x.org"), 0)
    assert req.payload == (("Email", "v@x.org"), ("submit", "Subscribe"))
    assert req.method == "POST" and req.target == "newsletter.php"


def test_fill_only_email_field():
    form = cf.FormRecord("a", "GET", (cf.InputField("email", "text"), cf.InputField("", "submit", "Go")), "p")
    assert cf.fill_form(form, VICTIM, 1).payload == (("email", "v@x.org"),)


def test_fill_heuristics():
    form = cf.FormRecord("a", "POST", (
        cf.InputField("email", "text"),
        cf.InputField("first_name", "text"),
        cf.InputField("mobile", "text"),
        cf.InputField("company", "text"),
        cf.InputField("zip", "text"),
        cf.InputField("token", "hidden", "abc"),
        cf.InputField("topics", "checkbox", None, ("a", "b")),
        cf.InputField("comments", "other"),
    ), "p")
    victim = cf.VictimProfile("v@x.org", "Vic", "555", {"zip": "02139"})
    payload = dict(cf.fill_form(form, victim, 3).payload)
    assert payload == {"email": "v@x.org", "first_name": "Vic", "mobile": "555", "company": "xxxx",
                       "zip": "02139", "token": "abc", "topics": ("a", "b"), "comments": "xxxx"}


def test_radio_choice_seeded():
    form = cf.FormRecord("a", "POST", (cf.InputField("email", "text"),
                                        cf.InputField("r", "radio", None, ("x", "y", "z"))), "p")
    outputs = {dict(cf.fill_form(form, VICTIM, s).payload)["r"] for s in range(40)}
    assert outputs <= {"x", "y", "z"} and len(outputs) > 1
    assert cf.fill_form(form, VICTIM, 7) == cf.fill_form(form, VICTIM, 7)


def test_fill_rejects_unsuitable_form():
    with pytest.raises(cf.UnsuitableFormError):
        cf.fill_form(cf.FormRecord("a", "GET", (cf.InputField("q", "text"),), "p"), VICTIM, 0)


def test_encoding_expands_checkboxes():
    req = cf.SubmissionRequest("a", "POST", (("email", "v@x.org"), ("c", ("a", "b"))))
    assert req.encoded() == "email=v%40x.org&c=a&c=b"


def test_victim_address_validation():
    for bad in ["", "no-at", "a@b@c", "@x.org", "v@"]:
        with pytest.raises(ValueError):
            cf.VictimProfile(bad)


def test_fill_payload_size_over_corpus():
    forms, _ = cf.harvest_corpus(CORPUS)
    for f in forms:
        req = cf.fill_form(f, VICTIM, 11)
        expected = sum(1 for x in f.fields if x.kind != "submit" or x.name)
        assert len(req.payload) == expected
        non_submit = [x.name for x in f.fields if x.kind != "submit"]
        assert [n for n, _ in req.payload if n in non_submit] == non_submit
