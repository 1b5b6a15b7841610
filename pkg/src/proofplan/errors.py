"""Errors shared across document-shaped interfaces."""

from __future__ import annotations


class SchemaError(Exception):
    """A document does not match its expected JSON shape.

    `pointer` is a JSON-pointer-style path ("/Premises/0/symbol") locating the
    offending value.
    """

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer
        self.message = message
        super().__init__(f"{pointer or '/'}: {message}")
