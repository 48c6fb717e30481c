"""Exception hierarchy.

``DataError`` covers bad inputs and malformed files; the CLI maps it to exit
code 2. Plain ``OSError`` is left alone and maps to exit code 3.
"""


class CropError(Exception):
    pass


class DataError(CropError, ValueError):
    pass


class DegenerateColorError(DataError):
    pass


class DegenerateSceneError(DataError):
    pass


class GridMismatchError(DataError):
    pass


class ExposureError(DataError):
    pass


class MissingIlluminantError(DataError, KeyError):
    pass


class TableFormatError(DataError):
    pass


class BadMagicError(TableFormatError):
    pass


class VersionMismatchError(TableFormatError):
    pass


class TruncatedTableError(TableFormatError):
    pass


class ChecksumError(TableFormatError):
    pass
