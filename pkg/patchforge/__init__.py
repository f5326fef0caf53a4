"""
patchforge: EOT adversarial patches against semantic-segmentation models
"""

__version__ = "0.1.0"
