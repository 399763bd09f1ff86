class KinsclError(Exception):
    pass


class ConfigurationError(KinsclError, ValueError):
    """Invalid parameters, detected before any stepping starts.

    ``problems`` lists every violated precondition, not just the first one.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SchemeAbort(KinsclError, RuntimeError):
    """A time-stepping run stopped because its state became unusable."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)


class InvariantViolation(KinsclError, AssertionError):
    pass
