"""Exception hierarchy shared by the analytical and simulation layers."""


class BufManetError(Exception):
    """Base class for all package errors."""


class InvalidParameter(BufManetError, ValueError):
    """A scenario or model parameter lies outside its valid domain."""


class ModelInvalid(BufManetError, ValueError):
    """Inputs do not define a proper probability chain."""


class UnstableLoad(BufManetError, ValueError):
    """The packet generating rate is at or above the throughput capacity."""


class NoConvergence(BufManetError, RuntimeError):
    """A numerical solver failed to reach its tolerance."""
