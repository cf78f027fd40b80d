"""Exception types raised across the package."""


class VmpomcError(Exception):
    """Base class for all package errors."""


class ZeroTrace(VmpomcError):
    """The trace of the density matrix vanished (degenerate ansatz)."""


class ZeroAmplitude(VmpomcError):
    """A sampled configuration has vanishing amplitude."""


class DegenerateAmplitude(VmpomcError):
    """The Markov chain ended up on a configuration with vanishing amplitude."""


class SolveFailure(VmpomcError):
    """The regularized metric-tensor system could not be solved accurately."""


class NaNGuard(VmpomcError):
    """A tensor entry became non-finite during optimization."""


class TooLarge(VmpomcError):
    """The requested system size exceeds an exact-enumeration bound."""


class DegenerateNull(VmpomcError):
    """The Liouvillian has more than one (numerically) zero eigenvalue."""


class NotAState(VmpomcError):
    """A matrix passed as a density matrix does not have unit trace."""


class BadSeparation(VmpomcError, ValueError):
    """A correlator separation outside 1..N-1 was requested."""


class CheckpointError(VmpomcError):
    """A checkpoint file is malformed or has the wrong version/shape."""


class ConfigParse(VmpomcError):
    """An experiment configuration file could not be parsed."""
