"""Exception types raised across the package."""


class AnchorSimError(Exception):
    """Base class for all package errors."""


class NotHurwitz(AnchorSimError, ValueError):
    pass


class Singular(AnchorSimError, ValueError):
    pass


class NotStabilizable(AnchorSimError, ValueError):
    pass


class DegenerateCone(AnchorSimError, ValueError):
    pass


class DecayTooFast(AnchorSimError, ValueError):
    """No simulation matrix exists for the requested decay rate."""


class DimensionMismatch(AnchorSimError, ValueError):
    pass


class NearSingularTaskInertia(AnchorSimError, ValueError):
    pass


class NumericalBlowup(AnchorSimError, RuntimeError):
    def __init__(self, t, speed):
        super().__init__(f"joint speed {speed:.3g} rad/s exceeded cap at t={t:.4f} s")
        self.t = t
        self.speed = speed
