"""Hidden-state extraction into MCREP files, plus POS-tagging fine-tuning.

Talks to the probing pipeline purely through file formats: JSON-lines
datasets in, MCREP representation sets, subword sidecars, and skip lists out.
"""

__version__ = "0.1.0"
