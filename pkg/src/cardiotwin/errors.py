"""Exception hierarchy shared across the pipeline.

Every error raised on purpose derives from CardioTwinError so callers can
catch the package's failures without also swallowing programming mistakes.
Validation-shaped problems (malformed input, impossible values, degenerate
datasets) share the ValidationError branch.
"""


class CardioTwinError(Exception):
    """Base class for all errors this package raises deliberately."""


class ConfigError(CardioTwinError):
    """A configuration value violates its documented constraints."""


class ValidationError(CardioTwinError):
    """Input data fails a documented validity check."""


class FrameParseError(ValidationError):
    """A wire line could not be parsed at all."""


class VersionError(ValidationError):
    """A versioned artifact declares a version this build does not speak."""


class FrameValidationError(ValidationError):
    """A parsed frame violates a field or channel invariant."""


class ShapeError(ValidationError):
    """An array has the wrong shape for the operation; message names both."""


class DegenerateInputError(ValidationError):
    """Input is structurally valid but carries nothing to compute on."""


class UnknownReferenceError(ValidationError):
    """Feedback or a query names a patient or timestamp never published."""


class RoutingError(CardioTwinError):
    """A relay was asked to use a device that is not a configured neighbor."""


class TransportError(CardioTwinError):
    """Delivery to an endpoint failed after the configured retries."""


class ParameterError(CardioTwinError):
    """A model or twin parameter is outside its physical or legal range."""


class NumericError(CardioTwinError):
    """A computation produced non-finite values; state was not committed."""
