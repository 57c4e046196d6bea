from ftnlab.errors.core_errors import ConfigurationError, InputError


class DetectorError(Exception):
    pass


class WindowError(DetectorError, InputError):
    pass


class TripletDistanceError(WindowError):
    pass


class WindowShapeError(WindowError):
    pass


class NetworkStructureError(DetectorError, ConfigurationError):
    pass


class KernelAllocationError(NetworkStructureError):
    pass


class BranchModeError(DetectorError, ConfigurationError):
    pass


class ModelFileError(DetectorError, ConfigurationError):
    pass


class UnsupportedModelVersionError(ModelFileError):
    pass


class ModulationMismatchError(DetectorError, ConfigurationError):
    pass
