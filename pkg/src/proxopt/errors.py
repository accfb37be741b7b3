"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """A caller supplied arguments outside an operation's domain."""


class GenerationFailure(RuntimeError):
    """A randomized generator exhausted its retry budget."""


class NumericFailure(ArithmeticError):
    """A non-finite value appeared during an iteration.

    ``node`` and ``iteration`` are filled in when known so callers can report
    where the run broke down.
    """

    def __init__(self, message, node=None, iteration=None):
        self.node = node
        self.iteration = iteration
        where = []
        if node is not None:
            where.append(f"node {node}")
        if iteration is not None:
            where.append(f"iteration {iteration}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
