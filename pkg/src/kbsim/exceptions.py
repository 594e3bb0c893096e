class KbsimError(Exception):
    """Base class for all errors raised by kbsim."""


class ConfigError(KbsimError, ValueError):
    """Malformed instance, schedule or experiment configuration."""


class DomainError(KbsimError, ValueError):
    """Argument outside the domain of a scalar primitive."""


class PolicyError(KbsimError, RuntimeError):
    """A policy cannot produce a decision (empty confidence set, infeasible LP)."""
