"""Regenerate the bundled 100-page fixture corpus and its labels.tsv.

Every page comes from a template whose suitability and captcha flags are
known in advance, so labels are written from the template, not from the
classifier.  40 pages are suitable launch pads.

    python tools/make_fixture_corpus.py [out_dir]
"""

import random
import sys
from pathlib import Path

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "formflood" / "data" / "corpus"

HEAD = "<html><head><title>{title}</title></head><body>\n<h1>{title}</h1>\n"
TAIL = "</body></html>\n"

SEARCH = '<form action="/search" method="get"><input type="text" name="q"><input type="submit" value="Go"></form>\n'
LOGIN = ('<form action="/login" method="post"><input type="text" name="username">'
         '<input type="password" name="pw"><input type="submit" name="login" value="Log in"></form>\n')

# suitable templates, each taking (site,)
SUITABLE = [
    # the canonical newsletter box
    lambda s: ('<form action="newsletter.php"\n  method="POST">\n<input type="text"\n  name="Email"\n'
               '  value="your email here!">\n<input type="submit"\n  name="submit"\n  value="Subscribe">\n</form>\n'),
    lambda s: (f'<form action="https://{s}/subscribe" method="post">\n'
               '<input type="text" name="first_name"><input type="text" name="last_name">\n'
               '<input type="email" name="user_email">\n'
               '<select name="freq"><option value="d">Daily<option value="w">Weekly<option value="m">Monthly</select>\n'
               '<input type="checkbox" name="topics" value="deals"><input type="checkbox" name="topics" value="news">\n'
               '<input type="hidden" name="src" value="footer">\n<button type="submit">Join</button></form>\n'),
    lambda s: (SEARCH + f'<form action=/alerts/{s} method=POST>\n<input type=text name=E-Mail>\n'
               '<input type=radio name=format value=html checked><input type=radio name=format value=text>\n'
               '<input type=submit value=Notify>\n'),  # unclosed form
    lambda s: ('<form method="post">\n<label>Phone <input type="tel" name="mobile"></label>\n'
               '<input type="text" name="contact" value="Your mail address">\n'
               '<input type="submit" value="Send me offers"></form>\n'),
    lambda s: (LOGIN + f'<FORM ACTION="/{s}/optin" METHOD="post"><INPUT TYPE="TEXT" NAME="mailaddr">'
               '<INPUT TYPE="image" SRC="go.gif"></FORM>\n'),
]

# unsuitable templates, each taking (site,) and returning (html, captcha)
UNSUITABLE = [
    lambda s: ("<p>Welcome to our site. No forms here.</p>\n", False),
    lambda s: (SEARCH, False),
    lambda s: (LOGIN, False),
    lambda s: ('<form action="/vote" method="post"><input type="radio" name="poll" value="a">'
               '<input type="radio" name="poll" value="b"><input type="submit" value="Vote"></form>\n', False),
    lambda s: (f'<form action="/{s}/contact" method="post"><input type="text" name="subject">'
               '<textarea name="body"></textarea><input type="submit" value="Send"></form>\n', False),
    lambda s: ('<form action="/signup" method="post"><input type="text" name="email">'
               '<img class="captcha" src="/captcha.png"><input type="text" name="captcha_answer">'
               '<input type="submit" value="Subscribe"></form>\n', True),
    lambda s: ('<form action="/join" method="post" data-captcha="1"><input type="email" name="Email">'
               '<input type="submit" value="Join"></form>\n', True),
    lambda s: ('<form action="/go"><input type="submit" value="Only a button"></form>\n', False),
    lambda s: ('<p>Mail us at the front desk.</p><a href="mailto:desk@example.org">desk</a>\n', False),
]

N_PAGES = 100
N_SUITABLE = 40


def build(out_dir: Path, seed: int = 2005) -> None:
    rng = random.Random(seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    for old in out_dir.glob("*.html"):
        old.unlink()
    flags = [True] * N_SUITABLE + [False] * (N_PAGES - N_SUITABLE)
    rng.shuffle(flags)
    labels = ["# page\tsuitable\tcaptcha"]
    for i, suitable in enumerate(flags):
        site = f"site{i:03d}.example"
        if suitable:
            body, captcha = SUITABLE[i % len(SUITABLE)](site), False
        else:
            body, captcha = UNSUITABLE[i % len(UNSUITABLE)](site)
        name = f"page{i:03d}.html"
        (out_dir / name).write_text(HEAD.format(title=site) + body + TAIL, encoding="utf-8")
        labels.append(f"{name}\t{int(suitable)}\t{int(captcha)}")
    (out_dir / "labels.tsv").write_text("\n".join(labels) + "\n")


if __name__ == "__main__":
    build(Path(sys.argv[1]) if len(sys.argv) > 1 else DEFAULT_OUT)
