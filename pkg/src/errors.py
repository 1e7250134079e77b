"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes do not fit the primitive or operation."""


class DivergenceError(FloatingPointError):
    """A training loss became non-finite."""

    def __init__(self, what: str, index: int, value: float):
        super().__init__(f"{what} diverged at index {index}: loss={value!r}")
        self.index = index
        self.value = value


class ContainerFormatError(ValueError):
    """A parameter container file is malformed."""


class ArtifactError(FileNotFoundError):
    """A referenced run artifact does not exist."""


class FingerprintError(RuntimeError):
    """An artifact's sha256 no longer matches the value recorded for it."""

    def __init__(self, path, expected: str, actual: str):
        super().__init__(
            f"Checksum mismatch for {path}: {actual} != {expected} (refusing to reuse it)"
        )
        self.path = path
        self.expected = expected
        self.actual = actual
