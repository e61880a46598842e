"""Exception hierarchy shared by all diffrast modules."""


class DiffrastError(Exception):
    """Base class for all errors raised by this package."""


class IndexOutOfRange(DiffrastError):
    def __init__(self, tri: int, slot: int, index: int, count: int):
        self.tri, self.slot, self.index, self.count = tri, slot, index, count
        super().__init__(
            f"triangle {tri} slot {slot} references vertex {index}, "
            f"but the buffer holds only {count} entries"
        )


class DegenerateIndexTriple(DiffrastError):
    def __init__(self, tri: int, indices):
        self.tri = tri
        super().__init__(f"triangle {tri} repeats a vertex index: {tuple(indices)}")


class NonFiniteVertex(DiffrastError):
    def __init__(self, vertex: int):
        self.vertex = vertex
        super().__init__(f"vertex {vertex} has a non-finite component")


class EmptyViewport(DiffrastError):
    pass


class ShapeMismatch(DiffrastError):
    pass


class RecordMismatch(DiffrastError):
    pass


class LogMismatch(DiffrastError):
    pass


class NonPowerOfTwo(DiffrastError):
    pass


class ZeroVector(DiffrastError):
    pass


class IsolatedVertex(DiffrastError):
    def __init__(self, vertex: int):
        self.vertex = vertex
        super().__init__(f"vertex {vertex} has an empty one-ring")


class FrameOutOfRange(DiffrastError):
    pass


class ParseError(DiffrastError):
    def __init__(self, path, line: int, message: str):
        self.path, self.line = path, line
        super().__init__(f"{path}:{line}: {message}")


class UnsupportedPngFormat(DiffrastError):
    pass
