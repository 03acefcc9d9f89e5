"""Exception hierarchy shared by all fluidmesh modules."""


class MeshError(Exception):
    """Base class for every error raised by fluidmesh."""


class ObjParseError(MeshError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFaceError(ObjParseError):
    pass


class TopologyError(MeshError):
    def __init__(self, message, edges=()):
        self.edges = list(edges)
        super().__init__(message)


class DegenerateNormalError(MeshError):
    pass


class SearchRadiusError(MeshError):
    """No boundary vertex was found in the cells around a query point."""


class GridConsistencyError(MeshError):
    pass


class OverlapError(MeshError):
    pass


class DegenerateInputError(MeshError):
    pass


class FilterError(MeshError):
    pass


class UnremovableTetError(MeshError):
    def __init__(self, message, tets=(), nodes=None):
        self.tets = list(tets)
        self.nodes = nodes  # positions the tets refer to, when known
        super().__init__(message)


class InputError(MeshError):
    pass


class EmptyMeshError(MeshError):
    pass
