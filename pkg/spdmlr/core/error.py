import spdmlr.core.constants as constants


class SpdMlrError(Exception):
    exit_code = constants.EXIT_VALIDATION_FAILURE


class ValidationError(SpdMlrError):
    pass


class NotSymmetricError(ValidationError):
    pass


class NotPositiveDefiniteError(ValidationError):
    def __init__(self, min_eigenvalue, message=None):
        self.min_eigenvalue = float(min_eigenvalue)
        message = message or f"not positive definite: minimum eigenvalue {self.min_eigenvalue:.6g}"
        super().__init__(message)


class DomainError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class ConfigurationError(ValidationError):
    pass


class DegenerateHyperplaneError(ValidationError):
    pass


class DatasetParseError(ValidationError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class ContractViolationError(SpdMlrError):
    pass


class NumericalError(SpdMlrError):
    exit_code = constants.EXIT_NUMERICAL_ABORT


class EigenDecompositionError(NumericalError):
    def __init__(self, shape, detail):
        self.shape = tuple(shape)
        self.detail = str(detail)
        super().__init__(
            f"symmetric eigensolver did not converge on input of shape {self.shape}: {self.detail}"
        )


class SingularDifferentialError(NumericalError):
    pass


class GenerationError(NumericalError):
    pass


class NumericalAbortError(NumericalError):
    def __init__(self, epoch, batch, param_norms):
        self.epoch = epoch
        self.batch = batch
        self.param_norms = dict(param_norms)
        norms = ", ".join(f"{name}={norm:.4g}" for name, norm in self.param_norms.items())
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch}; parameter norms: {norms}"
        )
