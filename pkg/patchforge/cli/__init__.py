"""
Command-line surface: pretrain-toy, train-patch, eval, transfer, plot
"""
from patchforge.cli.config import resolve_config
from patchforge.cli.parser import build_parser

__all__ = ["build_parser", "resolve_config"]
