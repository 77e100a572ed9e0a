"""Programming-language identification toolkit for code snippets."""

__version__ = "0.1.0"
