"""Raw audio to pipeline inputs: segmentation, language scores, features.

Output files use the downstream toolkit's formats (binary frame matrices
plus JSON-line manifests); nothing else couples the two packages.
"""

__version__ = "0.1.0"
