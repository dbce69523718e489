"""Word alignment toolkit.

Core pieces: corpus file formats, a small autodiff engine, subword
segmentation, EM lexical aligners, a seq2seq model with an alignment
head on top, scoring, tag projection, a synthetic corpus generator,
and a CLI plus annotation service tying them together.
"""

__version__ = "0.1.0"
