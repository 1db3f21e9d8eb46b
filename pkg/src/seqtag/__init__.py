"""BiLSTM-CRF part-of-speech tagging toolkit for BIS-tagged column corpora."""

__version__ = "0.1.0"
