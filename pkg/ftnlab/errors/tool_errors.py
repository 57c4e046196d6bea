class ToolError(Exception):
    pass


class LoopError(ToolError):
    pass


class LoopAlreadyWorkingError(LoopError):
    pass
