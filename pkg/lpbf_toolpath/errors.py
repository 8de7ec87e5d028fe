"""
Exception types raised by the toolpath toolkit
"""


class ToolpathError(Exception):
    """Base class for all toolkit errors"""


class DegenerateDomainError(ToolpathError, ValueError):
    """Printing domain is invalid or too small to hold a single sample point"""


class ConfigError(ToolpathError, ValueError):
    """Unknown configuration section/key or unparsable value"""


class ModelFormatError(ToolpathError, ValueError):
    """Model file is corrupt, truncated, of the wrong version or shape"""


class EpisodeDoneError(ToolpathError, RuntimeError):
    """step() called on an environment whose episode already ended"""


class NonFiniteLossError(ToolpathError, FloatingPointError):
    """A training step produced a NaN or infinite loss"""
