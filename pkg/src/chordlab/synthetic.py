"""Toy corpora with known dependency structure.

Used by the test suite to exercise models on
data whose optimal predictor is known in advance.
"""

from __future__ import annotations

from chordlab._rng import make_rng
from chordlab.corpus import Corpus

ROOTS = ["C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B"]


def chord_names(n):
    """``n`` distinct Harte labels (major triads first, then minor, ...)."""
    qualities = ["maj", "min", "7", "min7", "dim", "aug", "maj7", "sus4"]
    names = [f"{r}:{q}" for q in qualities for r in ROOTS]
    if n > len(names):
        raise ValueError(f"at most {len(names)} synthetic chord names")
    return names[:n]


def cyclic_corpus(n_tokens=8, n_songs=20, song_length=16, seed=0):
    """Songs walking the cycle 0 -> 1 -> ... -> n-1 -> 0 from random starts."""
    rng = make_rng(seed, 1)
    names = chord_names(n_tokens)
    songs = []
    for _ in range(n_songs):
        start = int(rng.integers(n_tokens))
        songs.append([names[(start + t) % n_tokens] for t in range(song_length)])
    return Corpus.from_token_songs(songs, name="cyclic")


def order2_corpus(n_tokens=6, n_songs=30, song_length=24, seed=0):
    """Next chord is a fixed random function of the previous two chords.

    The rule table is drawn so that every predecessor chord is followed by
    several different successors, which defeats a first-order model.
    """
    rng = make_rng(seed, 2)
    names = chord_names(n_tokens)
    table = rng.integers(n_tokens, size=(n_tokens, n_tokens))
    songs = []
    for _ in range(n_songs):
        seq = [int(rng.integers(n_tokens)), int(rng.integers(n_tokens))]
        while len(seq) < song_length:
            seq.append(int(table[seq[-2], seq[-1]]))
        songs.append([names[t] for t in seq])
    return Corpus.from_token_songs(songs, name="order2")


def long_range_corpus(n_tokens=8, lag=8, n_songs=40, song_length=40, seed=0):
    """Each song repeats a random pattern of length ``lag``: x[t] == x[t - lag]."""
    rng = make_rng(seed, 3)
    names = chord_names(n_tokens)
    songs = []
    for _ in range(n_songs):
        pattern = rng.integers(n_tokens, size=lag)
        songs.append([names[int(pattern[t % lag])] for t in range(song_length)])
    return Corpus.from_token_songs(songs, name=f"lag{lag}")


def melody_dependent_corpus(n_chords=6, n_pitches=6, n_durations=4, n_songs=40, song_length=24,
                            seed=0):
    """Three features where chord[t] is a fixed function of melody[t-1].

    Melody and duration are i.i.d.; duration never influences the chords.
    """
    rng = make_rng(seed, 4)
    names = chord_names(n_chords)
    pitch_to_chord = rng.permutation(max(n_pitches, n_chords))[:n_pitches] % n_chords
    songs = []
    for _ in range(n_songs):
        melody = rng.integers(n_pitches, size=song_length)
        duration = rng.integers(n_durations, size=song_length)
        chords = [int(rng.integers(n_chords))] + [int(pitch_to_chord[m]) for m in melody[:-1]]
        songs.append([[names[c] for c in chords],
                      [str(60 + int(m)) for m in melody],
                      [str(2 ** int(d)) for d in duration]])
    return Corpus.from_token_songs(songs, features=("chord", "melody", "duration"), name="melodydep")


def random_corpus(n_tokens=10, n_songs=20, min_length=2, max_length=20, seed=0, features=("chord",)):
    """Unstructured i.i.d. tokens; songs of random length."""
    rng = make_rng(seed, 5)
    names = chord_names(n_tokens)
    songs = []
    for _ in range(n_songs):
        T = int(rng.integers(min_length, max_length + 1))
        rows = [[names[int(t)] for t in rng.integers(n_tokens, size=T)] for _ in features]
        songs.append(rows)
    return Corpus.from_token_songs(songs, features=features, name="random")
