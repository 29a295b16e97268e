"""Next-chord prediction: statistical and neural predictors, evaluation and analysis."""

from chordlab.corpus import Corpus, Vocabulary, load_corpus, make_windows, split_kfold, write_corpus
from chordlab.embeddings import ChordEmbeddings, train_embeddings, w2v_similarity
from chordlab.evaluation import MetricReport, accuracy, evaluate, perplexity
from chordlab.interpret import feature_attribution, position_influence
from chordlab.models import MODEL_KINDS, load_model, make_model, save_model
from chordlab.ngram import MarkovPredictor, VariableOrderMarkovPredictor
from chordlab.train import SearchSpace, cross_validate, search

__version__ = "0.1.0"

__all__ = [
    "ChordEmbeddings", "Corpus", "MODEL_KINDS", "MarkovPredictor", "MetricReport", "SearchSpace",
    "VariableOrderMarkovPredictor", "Vocabulary", "accuracy", "cross_validate", "evaluate",
    "feature_attribution", "load_corpus", "load_model", "make_model", "make_windows", "perplexity",
    "position_influence", "save_model", "search", "split_kfold", "train_embeddings",
    "w2v_similarity", "write_corpus",
]
