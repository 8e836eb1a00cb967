"""Answer-conditioned question generation at desk scale.

Pipeline: key-phrase significance detection over retrieved material,
dictionary-supervised type tagging, a conditional VAE generator with a
multi-pass (type, entity, phrase) decoder, and the automatic evaluation
metric suite.
"""

__version__ = "0.1.0"
