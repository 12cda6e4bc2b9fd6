"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid or malformed user-supplied input (files, counts, config).

    The CLI maps this to exit code 2; everything else is an internal
    error (exit code 1).
    """
