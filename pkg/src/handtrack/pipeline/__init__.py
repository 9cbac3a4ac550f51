"""File formats, procedural test models, synthetic sequences, evaluation,
and the command-line interface."""
