from __future__ import annotations


class InvalidArgumentError(ValueError):
    pass


class UnsupportedEncodingError(ValueError):
    """No tiled encoding exists for this contraction; use the naive path."""


class ValidationError(ValueError):
    def __init__(self, message: str, node_ids=()):
        self.node_ids = tuple(node_ids)
        if self.node_ids:
            message = f"{message} (nodes: {', '.join(self.node_ids)})"
        super().__init__(message)


class ExecutionError(RuntimeError):
    def __init__(self, message: str, node_id: str | None = None):
        self.node_id = node_id
        if node_id is not None:
            message = f"{node_id}: {message}"
        super().__init__(message)


class VerificationError(AssertionError):
    pass
