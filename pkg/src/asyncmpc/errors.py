"""Exception hierarchy shared by the library and the CLI."""


class AsyncMPCError(Exception):
    """Base class for every error raised by this package."""


class IntegrationDiverged(AsyncMPCError):
    def __init__(self, t: float, message: str = "non-finite state during integration"):
        super().__init__(f"{message} at t={t:.6g}")
        self.t = t


class StepUnderflow(AsyncMPCError):
    def __init__(self, t: float, h: float):
        super().__init__(f"adaptive step underflow at t={t:.6g} (h={h:.3g})")
        self.t = t
        self.h = h


class EmptySchedule(AsyncMPCError):
    pass


class GradientOverflow(AsyncMPCError):
    def __init__(self, index: int):
        super().__init__(f"non-finite gradient entry at parameter index {index}")
        self.index = index


class ShapeError(AsyncMPCError, ValueError):
    pass


class EmptyDataset(AsyncMPCError, ValueError):
    pass


class OrderingError(AsyncMPCError, ValueError):
    pass


class DegenerateInterval(AsyncMPCError, ValueError):
    pass


class PlannerDegenerate(AsyncMPCError):
    pass


class InsufficientData(AsyncMPCError, ValueError):
    pass


class ConfigError(AsyncMPCError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
