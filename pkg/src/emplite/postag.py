"""Penn-Treebank-style part-of-speech tags for the token feature.

Two sources: "sidecar" passes through tags stored in the dataset files,
"builtin" applies a small deterministic tagger (closed-class lexicon plus
suffix rules). The builtin tagger is deliberately coarse; the tag feature
contributes little, and sidecar mode exists for exact replication with a
real tagger's output.

Everything here is pure and stateless.
"""

from fractions import Fraction

from .errors import ConfigError, DegenerateInputError

PTB_TAGS = (
    "NN", "NNS", "NNP", "NNPS", "JJ", "JJR", "JJS",
    "VB", "VBD", "VBG", "VBN", "VBP", "VBZ",
    "PRP", "PRP$", "IN", "DT", "RB", "RBR", "RBS",
    "CC", "CD", "TO", "MD", "UH", "OTHER",
)

_TAG_SET = frozenset(PTB_TAGS)


def _lexicon():
    groups = {
        "DT": "the a an this that these those each every either neither some any "
              "no both all half such another which what whose",
        "PRP": "i you he she it we they me him her us them myself yourself himself "
               "herself itself ourselves yourselves themselves mine yours hers ours "
               "theirs who whom everybody everyone everything somebody someone "
               "something anybody anyone anything nobody nothing",
        "PRP$": "my your his its our their",
        "IN": "of in on at by for with about against between into through during "
              "before after above below from up down out off over under again since "
              "until unless although because while if than as per via upon within "
              "without toward towards beneath beside besides among amid along across "
              "behind beyond except despite like near onto inside outside underneath "
              "whether though",
        "CC": "and or but nor so yet plus",
        "TO": "to",
        "MD": "can could will would shall should may might must wont cant",
        "VBZ": "is has does isnt doesnt hasnt",
        "VBP": "am are have do dont arent havent",
        "VBD": "was were did had didnt wasnt werent",
        "VB": "be",
        "VBG": "being",
        "VBN": "been done gone",
        "RB": "not never very too also just only quite rather almost always often "
              "sometimes soon now then here there well still even already however "
              "maybe perhaps instead together away back yes indeed",
        "UH": "oh wow hey hello hi ouch alas hmm yeah please",
        "CD": "one two three four five six seven eight nine ten eleven twelve twenty "
              "hundred thousand million billion zero first second third",
    }
    table = {}
    for tag, words in groups.items():
        for w in words.split():
            table[w] = tag
    return table


_LEXICON = _lexicon()


def _looks_numeric(token):
    stripped = token.replace(",", "").replace(".", "").replace("-", "")
    return bool(stripped) and stripped.isdigit()


def _builtin_tag(token, position):
    low = token.lower()
    if low in _LEXICON:
        return _LEXICON[low]
    if _looks_numeric(token):
        return "CD"
    if position > 0 and token[:1].isupper():
        return "NNP"
    if low.endswith("ing") and len(low) > 4:
        return "VBG"
    if low.endswith("ed") and len(low) > 3:
        return "VBD"
    if low.endswith("ly") and len(low) > 3:
        return "RB"
    if low.endswith("s") and not low.endswith("ss") and len(low) > 3:
        return "NNS"
    return "NN"


def tag_sentence(tokens, source="builtin", sidecar_tags=None):
    """Return one tag per token.

    ``sidecar`` passes the stored tags through (unknown symbols become
    OTHER); ``builtin`` applies the rule tagger. Asking for sidecar tags
    that were never loaded is a configuration error.
    """
    if not tokens:
        raise DegenerateInputError("cannot tag an empty sentence")
    if source == "sidecar":
        if sidecar_tags is None:
            raise ConfigError("sidecar tags requested but the dataset has no tag column")
        if len(sidecar_tags) != len(tokens):
            raise ConfigError(
                f"sidecar tag count {len(sidecar_tags)} != token count {len(tokens)}"
            )
        return [t if t in _TAG_SET else "OTHER" for t in sidecar_tags]
    if source != "builtin":
        raise ConfigError(f"unknown tag source {source!r}")
    return [_builtin_tag(tok, i) for i, tok in enumerate(tokens)]


def pos_distribution(sentences, threshold_prob):
    """Tag shares for all tokens and for emphasized tokens.

    Returns two descending-sorted lists of (tag, percentage); percentages
    in each list sum to 100. Sentences must be tagged and carry emphasis
    probabilities.
    """
    if not sentences:
        raise DegenerateInputError("cannot compute tag distribution of an empty corpus")
    if not isinstance(threshold_prob, Fraction):
        threshold_prob = Fraction(str(threshold_prob))
    counts_all = {}
    counts_emph = {}
    for s in sentences:
        tags = s.pos if s.pos is not None else tag_sentence(s.tokens)
        for tag, prob in zip(tags, s.emph_prob):
            counts_all[tag] = counts_all.get(tag, 0) + 1
            if prob >= threshold_prob:
                counts_emph[tag] = counts_emph.get(tag, 0) + 1

    def to_percent(counts):
        total = sum(counts.values())
        if total == 0:
            return []
        rows = [(tag, 100.0 * c / total) for tag, c in counts.items()]
        rows.sort(key=lambda r: (-r[1], r[0]))
        return rows

    return to_percent(counts_all), to_percent(counts_emph)
