"""Chord labels, vocabularies, corpora and context windows.

Corpus text format (UTF-8)::

    #features: chord melody duration
    // comment lines start with two slashes
    C:maj G:maj A:min F:maj
    60 67 69 65
    1 1 2 1

    D:min7 G:7 C:maj7
    62 67 64
    2 2 4

One block per song, blocks separated by blank lines, one row per feature in
header order. In ``harte`` mode the chord row is parsed as Harte labels and
normalized before encoding.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from chordlab._rng import make_rng
from chordlab.errors import FormatError, HarteSyntaxError, InvalidK, UnknownFeature

PAD, UNK, MASK = "<pad>", "<unk>", "<mask>"
PAD_ID, UNK_ID, MASK_ID = 0, 1, 2
RESERVED = (PAD, UNK, MASK)

NORMALIZATION_POLICIES = ("full", "no_inversion", "root_quality")
DEFAULT_NORMALIZATION = "no_inversion"
DEFAULT_CONTEXT_LENGTH = 16

# Harte shorthands; anything else must be a parenthesized degree list.
SHORTHANDS = frozenset({
    "maj", "min", "dim", "aug", "maj7", "min7", "7", "dim7", "hdim7",
    "minmaj7", "maj6", "min6", "9", "maj9", "min9", "sus2", "sus4",
    "11", "maj11", "min11", "13", "maj13", "min13", "1", "5",
})

_BASE_QUALITY = {
    "maj": "maj", "maj7": "maj", "7": "maj", "maj6": "maj", "9": "maj",
    "maj9": "maj", "11": "maj", "maj11": "maj", "13": "maj", "maj13": "maj",
    "min": "min", "min7": "min", "minmaj7": "min", "min6": "min",
    "min9": "min", "min11": "min", "min13": "min",
    "dim": "dim", "dim7": "dim", "hdim7": "dim",
    "aug": "aug", "sus2": "sus2", "sus4": "sus4", "1": "1", "5": "5",
}

# Harte symbols for "no chord" / "unknown"; kept verbatim, never parsed.
NO_CHORD_TOKENS = frozenset({"N", "X"})

_DEGREE_RE = re.compile(r"\*?[#b]*(1[0-3]|[1-9])")
_PITCH_RE = re.compile(r"[A-Ga-g][#b]*")


@dataclass(frozen=True)
class ChordLabel:
    root: str
    quality: str | None = None
    bass: str | None = None

    def render(self):
        out = self.root
        if self.quality is not None:
            out += ":" + self.quality
        if self.bass is not None:
            out += "/" + self.bass
        return out

    def __str__(self):
        return self.render()


def _byte_offset(text, index):
    return len(text[:index].encode("utf-8"))


def _parse_root(text, start, what):
    if start >= len(text) or text[start].upper() not in "ABCDEFG":
        raise HarteSyntaxError(text, _byte_offset(text, start), f"invalid {what} pitch letter")
    i = start + 1
    while i < len(text) and text[i] in "#b":
        i += 1
    return text[start].upper() + text[start + 1:i], i


def _check_quality(text, start, end):
    raw = text[start:end]
    if not raw:
        raise HarteSyntaxError(text, _byte_offset(text, start), "empty quality")
    q = raw.lower()
    paren = q.find("(")
    head, degrees = (q, None) if paren < 0 else (q[:paren], q[paren:])
    if head and head not in SHORTHANDS:
        raise HarteSyntaxError(text, _byte_offset(text, start), f"unknown quality {raw!r}")
    if degrees is not None:
        if not degrees.endswith(")") or len(degrees) < 3:
            raise HarteSyntaxError(text, _byte_offset(text, start + paren), "unterminated degree list")
        offset = start + paren + 1
        for item in degrees[1:-1].split(","):
            if not _DEGREE_RE.fullmatch(item):
                raise HarteSyntaxError(text, _byte_offset(text, offset), f"invalid degree {item!r}")
            offset += len(item) + 1
    return q


def parse_chord_label(text):
    """Parse a Harte-style label ``root[:quality][/bass]`` into a ChordLabel.

    Roots are uppercased and qualities lowercased, so rendering the result
    yields the canonical spelling. Raises HarteSyntaxError carrying the byte
    offset of the first invalid component.
    """
    if not text or any(c.isspace() for c in text):
        bad = next((i for i, c in enumerate(text) if c.isspace()), 0)
        raise HarteSyntaxError(text, _byte_offset(text, bad), "label is empty or contains whitespace")
    root, i = _parse_root(text, 0, "root")
    quality = bass = None
    if i < len(text) and text[i] == ":":
        end = text.find("/", i + 1)
        end = len(text) if end < 0 else end
        quality = _check_quality(text, i + 1, end)
        i = end
    if i < len(text) and text[i] == "/":
        start = i + 1
        rest = text[start:]
        if _DEGREE_RE.fullmatch(rest) and not rest.startswith("*"):
            bass = rest
        elif _PITCH_RE.fullmatch(rest):
            bass = rest[0].upper() + rest[1:]
        else:
            raise HarteSyntaxError(text, _byte_offset(text, start), "invalid bass")
        i = len(text)
    if i != len(text):
        raise HarteSyntaxError(text, _byte_offset(text, i), f"unexpected character {text[i]!r}")
    return ChordLabel(root, quality, bass)


def base_quality(quality):
    """Reduce a quality to its triad family (``min7`` -> ``min``)."""
    if quality is None:
        return "maj"
    paren = quality.find("(")
    head = quality if paren < 0 else quality[:paren]
    if head:
        return _BASE_QUALITY[head]
    degrees = quality[paren + 1:-1].split(",")
    if "b3" in degrees:
        return "min"
    if "3" in degrees:
        return "maj"
    return quality


def normalize_chord(label, policy=DEFAULT_NORMALIZATION):
    """Render ``label`` under a normalization policy.

    ``full`` keeps everything, ``no_inversion`` drops the bass and
    ``root_quality`` also collapses the quality to its base triad.
    """
    if isinstance(label, str):
        label = parse_chord_label(label)
    if policy == "full":
        return label.render()
    if policy == "no_inversion":
        return ChordLabel(label.root, label.quality).render()
    if policy == "root_quality":
        return f"{label.root}:{base_quality(label.quality)}"
    raise ValueError(f"unknown normalization policy {policy!r}; expected one of {NORMALIZATION_POLICIES}")


class Vocabulary:
    """Bijection between tokens and dense ids; ids 0-2 are PAD, UNK, MASK."""

    def __init__(self, tokens: Iterable[str] = ()):
        self._tokens = list(RESERVED)
        self._index = {t: i for i, t in enumerate(self._tokens)}
        for tok in tokens:
            self._add(tok)

    def _add(self, token):
        if token not in self._index:
            self._index[token] = len(self._tokens)
            self._tokens.append(token)
        return self._index[token]

    @property
    def tokens(self):
        return tuple(self._tokens)

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def __repr__(self):
        return f"Vocabulary(size={len(self)})"

    def id(self, token):
        return self._index.get(token, UNK_ID)

    def token(self, idx):
        return self._tokens[idx]

    def encode(self, tokens: Sequence[str]):
        return np.array([self._index.get(t, UNK_ID) for t in tokens], dtype=np.int64)

    def decode(self, ids):
        return [self._tokens[int(i)] for i in ids]


@dataclass(frozen=True)
class Corpus:
    """Songs as per-feature id sequences; ``songs[s]`` has shape (n_features, length)."""

    features: tuple
    songs: tuple
    vocabs: dict
    name: str = "corpus"

    def __post_init__(self):
        for s, song in enumerate(self.songs):
            if song.ndim != 2 or song.shape[0] != len(self.features):
                raise FormatError(f"song {s} has shape {song.shape}, expected ({len(self.features)}, T)")
            for f, feat in enumerate(self.features):
                if song.shape[1] and song[f].max() >= len(self.vocabs[feat]):
                    raise FormatError(f"song {s} feature {feat!r} has id outside vocabulary")
            song.setflags(write=False)

    @classmethod
    def from_token_songs(cls, songs, features=("chord",), name="corpus"):
        """Build from nested token lists: ``songs[s][f]`` is a list of strings.

        With a single feature a song may also be given as a flat token list.
        """
        features = tuple(features)
        songs = [[song] if len(features) == 1 and (not song or isinstance(song[0], str)) else song
                 for song in songs]
        vocabs = {f: Vocabulary() for f in features}
        encoded = []
        for s, song in enumerate(songs):
            if len(song) != len(features):
                raise FormatError(f"song {s} has {len(song)} feature rows, expected {len(features)}")
            lengths = {len(row) for row in song}
            if len(lengths) > 1:
                raise FormatError(f"song {s} has ragged feature rows {sorted(lengths)}")
            rows = [[vocabs[f]._add(tok) for tok in row] for f, row in zip(features, song)]
            encoded.append(np.array(rows, dtype=np.int64).reshape(len(features), -1))
        return cls(features, tuple(encoded), vocabs, name)

    @property
    def n_songs(self):
        return len(self.songs)

    def feature_index(self, name):
        try:
            return self.features.index(name)
        except ValueError:
            raise UnknownFeature(f"unknown feature {name!r}; corpus has {list(self.features)}") from None

    def vocab_sizes(self):
        return tuple(len(self.vocabs[f]) for f in self.features)

    def sequences(self, feature="chord"):
        f = self.feature_index(feature)
        return [song[f] for song in self.songs]

    def subset(self, song_ids):
        return Corpus(self.features, tuple(self.songs[i] for i in song_ids), self.vocabs, self.name)

    def reencode(self, features=None, vocabs=None):
        """Re-map songs onto fixed vocabularies (e.g. those stored with a model).

        ``features`` selects and orders feature rows; tokens missing from a
        supplied vocabulary become UNK.
        """
        features = tuple(features) if features else self.features
        idx = [self.feature_index(f) for f in features]
        vocabs = {f: Vocabulary(vocabs[f]) if vocabs and vocabs.get(f) else self.vocabs[f]
                  for f in features}
        songs = []
        for song in self.songs:
            rows = [vocabs[f].encode(self.vocabs[f].decode(song[i])) for f, i in zip(features, idx)]
            songs.append(np.array(rows, dtype=np.int64).reshape(len(features), -1))
        return Corpus(features, tuple(songs), vocabs, self.name)

    def token_songs(self):
        return [[self.vocabs[f].decode(song[i]) for i, f in enumerate(self.features)]
                for song in self.songs]

    def stats(self):
        return {
            "songs": self.n_songs,
            "vocab_sizes": {f: len(self.vocabs[f]) for f in self.features},
            "tokens": int(sum(song.shape[1] for song in self.songs)),
        }


def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("//"):
            continue
        yield lineno, line


def load_corpus(path, format="tokens", normalization=DEFAULT_NORMALIZATION, name=None):
    """Read a corpus file in the canonical text format."""
    if format not in ("tokens", "harte"):
        raise ValueError(f"unknown corpus format {format!r}")
    if normalization not in NORMALIZATION_POLICIES:
        raise ValueError(f"unknown normalization policy {normalization!r}")
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    name = name or path.stem
    features = None
    blocks, current = [], []
    for lineno, line in _content_lines(text):
        if features is None:
            if not line:
                continue
            if not line.startswith("#features:"):
                raise FormatError("missing '#features:' header", lineno, path)
            features = tuple(line[len("#features:"):].split())
            if not features or len(set(features)) != len(features):
                raise FormatError("header must list distinct feature names", lineno, path)
            continue
        if not line:
            if current:
                blocks.append(current)
                current = []
            continue
        current.append((lineno, line.split()))
    if current:
        blocks.append(current)
    if features is None:
        features = ("chord",)

    chord_row = features.index("chord") if "chord" in features else 0
    songs = []
    for block in blocks:
        first = block[0][0]
        if len(block) != len(features):
            raise FormatError(f"song has {len(block)} rows, expected {len(features)}", first, path)
        n = len(block[0][1])
        for lineno, toks in block:
            if len(toks) != n:
                raise FormatError(f"row has {len(toks)} tokens, expected {n} to match the first row",
                                  lineno, path)
        rows = [toks for _, toks in block]
        if format == "harte":
            lineno = block[chord_row][0]
            normed = []
            for tok in rows[chord_row]:
                if tok in NO_CHORD_TOKENS:
                    normed.append(tok)
                    continue
                try:
                    normed.append(normalize_chord(parse_chord_label(tok), normalization))
                except HarteSyntaxError as exc:
                    exc.line, exc.path = lineno, path
                    exc.args = (f"{path}:{lineno}: {exc.args[0]}",)
                    raise
            rows[chord_row] = normed
        songs.append(rows)
    return Corpus.from_token_songs(songs, features, name)


def write_corpus(corpus, path):
    """Write ``corpus`` in the canonical text format."""
    lines = ["#features: " + " ".join(corpus.features)]
    for song in corpus.token_songs():
        lines.append("")
        lines.extend(" ".join(row) for row in song)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class WindowSet:
    """Fixed-length context windows with the next target-feature id.

    ``X`` has shape (n, L, n_features) and is left-padded with PAD_ID.
    """

    X: np.ndarray
    y: np.ndarray
    song_ids: np.ndarray
    context_length: int
    features: tuple
    target_feature: str
    positions: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.y)

    @property
    def target_index(self):
        return self.features.index(self.target_feature)

    def single(self):
        """Contexts restricted to the target feature, shape (n, L)."""
        return self.X[:, :, self.target_index]

    def inputs_for(self, multi_feature):
        return self.X if multi_feature else self.single()


def make_windows(corpus, context_length=DEFAULT_CONTEXT_LENGTH, target_feature="chord", song_ids=None):
    """One sample per position 1..len-1 of every song, never crossing songs."""
    L = int(context_length)
    if L < 1:
        raise ValueError("context_length must be >= 1")
    t = corpus.feature_index(target_feature)
    ids = range(corpus.n_songs) if song_ids is None else song_ids
    F = len(corpus.features)
    X, y, sid, pos = [], [], [], []
    for s in ids:
        song = corpus.songs[s]
        T = song.shape[1]
        if T < 2:
            continue
        # pad so that window for target p is padded[:, p:p+L]
        padded = np.concatenate([np.full((F, L), PAD_ID, dtype=np.int64), song], axis=1)
        for p in range(1, T):
            X.append(padded[:, p:p + L].T)
            y.append(song[t, p])
            sid.append(s)
            pos.append(p)
    if X:
        X = np.stack(X)
    else:
        X = np.zeros((0, L, F), dtype=np.int64)
    return WindowSet(X, np.asarray(y, dtype=np.int64), np.asarray(sid, dtype=np.int64), L,
                     tuple(corpus.features), target_feature, np.asarray(pos, dtype=np.int64))


def split_kfold(corpus, k, seed=42):
    """Song-level k-fold partition as a list of (train_ids, test_ids)."""
    n = corpus if isinstance(corpus, (int, np.integer)) else corpus.n_songs
    if not isinstance(k, (int, np.integer)) or k < 2 or k > n:
        raise InvalidK(f"k must satisfy 2 <= k <= number of songs ({n}); got {k}")
    perm = make_rng(seed, 0x5EED).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        out.append((np.sort(train), np.sort(test)))
    return out
