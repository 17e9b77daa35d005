"""Render per-token emphasis probabilities as a heatmap.

Both renderers are pure functions of (tokens, probs, style). Background
intensity is linear in the probability: 0.0 gives a zero-intensity
(white) cell, 1.0 gives a fully saturated one. Probabilities print to
three decimals under each token.
"""

import html as _html

from .errors import ConfigError, DegenerateInputError, ShapeError

RESET = "\x1b[0m"
FG_BLACK = "\x1b[38;2;0;0;0m"


def _validate(tokens, probs):
    if not tokens:
        raise DegenerateInputError("nothing to render")
    if len(tokens) != len(probs):
        raise ShapeError(f"{len(tokens)} tokens but {len(probs)} probabilities")
    for p in probs:
        if not 0.0 <= float(p) <= 1.0:
            raise ShapeError(f"probability {p} outside [0, 1]")


def intensity(prob):
    """Linear probability-to-intensity map on 0..255."""
    return int(round(255 * float(prob)))


def render_ansi(tokens, probs):
    """Two terminal lines: colored token cells, then their probabilities."""
    _validate(tokens, probs)
    cells = []
    numbers = []
    for tok, p in zip(tokens, probs):
        level = intensity(p)
        width = max(len(tok) + 2, 7)
        bg = f"\x1b[48;2;255;{255 - level};{255 - level}m"
        cells.append(f"{bg}{FG_BLACK}{tok.center(width)}{RESET}")
        numbers.append(f"{float(p):.3f}".center(width))
    return "".join(cells) + "\n" + "".join(numbers)


_HTML_PAGE = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>emphasis heatmap</title>
<style>
body {{ font-family: sans-serif; margin: 2em; }}
.tok {{ display: inline-block; margin: 2px; padding: 4px 6px; border-radius: 4px; }}
.p {{ display: block; font-size: 70%; color: #444; text-align: center; }}
</style>
</head>
<body>
<div class="sentence">
{cells}
</div>
</body>
</html>
"""


def render_html(tokens, probs):
    """A standalone page with one shaded span per token."""
    _validate(tokens, probs)
    cells = []
    for tok, p in zip(tokens, probs):
        alpha = float(p)
        cells.append(
            f'<span class="tok" style="background: rgba(255,80,80,{alpha:.3f})">'
            f"{_html.escape(tok)}"
            f'<span class="p">{alpha:.3f}</span></span>'
        )
    return _HTML_PAGE.format(cells="\n".join(cells))


def render(tokens, probs, style="ansi"):
    if style == "ansi":
        return render_ansi(tokens, probs)
    if style == "html":
        return render_html(tokens, probs)
    raise ConfigError(f"unknown heatmap style {style!r}")
