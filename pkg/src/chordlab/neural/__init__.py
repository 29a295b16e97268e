"""Neural next-chord predictors built on :mod:`chordlab.autodiff`."""

from chordlab.neural.estimators import (
    NEURAL_KINDS,
    GPTPredictor,
    LSTMAttentionPredictor,
    LSTMPredictor,
    MultiGPTPredictor,
    MultiLSTMAttentionPredictor,
    MultiLSTMPredictor,
    MultiTransformerPredictor,
    NeuralPredictor,
    TransformerPredictor,
)
