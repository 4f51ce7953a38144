"""Exception types shared across the package."""


class FieldopsError(Exception):
    """Base class for all package errors."""


class RuleLoadError(FieldopsError):
    """Rule file missing, malformed, or violating rule-set invariants."""


class UnknownAssetError(FieldopsError):
    """Telemetry or command referenced an asset that was never registered."""


class PlanParseError(FieldopsError):
    """LLM output could not be parsed into a valid action plan."""


class GatewayError(FieldopsError):
    """Base class for completion-backend failures."""

    def __init__(self, message: str, backend_label: str = ""):
        super().__init__(message)
        self.backend_label = backend_label


class GatewayConnectError(GatewayError):
    pass


class GatewayTimeoutError(GatewayError):
    pass


class GatewayResponseError(GatewayError):
    """Endpoint answered with a non-success status or unusable body."""


class ScriptLookupError(GatewayError):
    """Scripted backend has no entry for the presented prompt."""
