class ConfigurationError(Exception):
    """Invalid campaign, registry or environment configuration."""


class HarnessError(Exception):
    """The harness itself failed (bad argument encoding, missing target).

    Distinct from a target raising, which is reported as a ``Threw`` outcome.
    """
