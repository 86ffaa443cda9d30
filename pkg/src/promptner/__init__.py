"""Prompt-driven on-demand named entity recognition as seq2seq generation.

A small encoder-decoder model is trained jointly across datasets on
prompt-prefixed inputs ("<entity>time<entity>location<text>...") and learns
to emit "((time):(tomorrow),(location):(zoo))"-style targets, so a caller
can choose at request time which entity types to extract.
"""

__version__ = "0.1.0"
