class TripletSimError(Exception):
    exit_code = 1


class ConfigError(TripletSimError, ValueError):
    exit_code = 2


class DomainError(TripletSimError, ValueError):
    exit_code = 3


class TruncationError(DomainError):
    def __init__(self, message: str, required_n_max: int):
        super().__init__(message)
        self.required_n_max = required_n_max


class CalibrationError(TripletSimError, ValueError):
    exit_code = 4


class TimeTagFormatError(TripletSimError, ValueError):
    exit_code = 5


class CapacityError(TripletSimError, RuntimeError):
    exit_code = 6


class ConfigMismatchError(TripletSimError, ValueError):
    exit_code = 7
