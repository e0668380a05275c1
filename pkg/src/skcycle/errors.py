"""Error types shared across the package."""


class ResourceLimitError(RuntimeError):
    """Raised when a request would exceed a hard size guard (2^n blowup)."""


class FitWindowError(RuntimeError):
    """Raised when a scaling fit lacks the span or variation it needs."""
