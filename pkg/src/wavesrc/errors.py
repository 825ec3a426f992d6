class ValidationError(ValueError):
    """Invalid input: bad parameters, inconsistent geometry, malformed files."""
