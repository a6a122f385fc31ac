class HomTpaError(Exception):
    """Base class for errors raised by hometpa."""


class DomainError(HomTpaError, ValueError):
    """A parameter lies outside its physical domain."""


class ContractError(HomTpaError, ValueError):
    """Inputs violate an operation's preconditions."""


class TruncationError(HomTpaError, ValueError):
    """The frequency grid does not contain the two-photon amplitude."""


class OpaqueSampleError(HomTpaError, ValueError):
    """Sample transmits (almost) no photon pairs; the dip is undefined."""


class NoDipError(HomTpaError, ValueError):
    """Profile depth is below the noise floor."""
