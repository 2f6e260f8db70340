"""Exception hierarchy; every error knows the CLI exit code it maps to"""


class CdkitError(Exception):
    """Base class for all toolkit errors"""

    exit_code = 1


class UserError(CdkitError):
    """Bad input, bad configuration, or malformed files"""

    exit_code = 1


class ShapeError(UserError, ValueError):
    """Tensor dimensions do not satisfy an operation's contract"""


class DTypeError(UserError, TypeError):
    """Mixed or unsupported tensor dtypes"""


class ConfigError(UserError, ValueError):
    """Invalid model, training, or run configuration"""


class DatasetError(UserError):
    """Dataset layout or content problem; the message names the file"""


class CheckpointError(UserError):
    """Corrupt checkpoint or checkpoint/config mismatch"""


class NumericalError(CdkitError, ArithmeticError):
    """NaN/inf in losses or gradients, or a failed gradient check"""

    exit_code = 2
